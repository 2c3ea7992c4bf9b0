//! Plaintext fixed-point trainer that reproduces the protocol bit for bit.
//!
//! It works on reconstructed ring values only: no shares, no masks on the
//! data path. At every place where the protocol truncates a pair of shares it
//! regenerates the index-0 share from the seeded streams and applies the same
//! ceil/floor rule, so rare wrap events are reproduced too.

use crate::error::{Error, Result};
use crate::linalg::RingMatrix;
use crate::protocol::masks::{coordinator_r, party_a_masks, party_b_masks, split_rng, MaskSchedule};
use crate::protocol::{BatchPlan, Task, TrainConfig};
use crate::ring::{encode, Ring};
use crate::sigmoid::SigmoidCoeffs;

/// One shadow iteration.
#[derive(Debug, Clone)]
pub struct ShadowStep {
    pub t: usize,
    /// `Y_hat - Y` at scale `2^f` (what the parties get after stripping alpha).
    pub residual: RingMatrix,
    /// Truncated, eta-scaled gradient steps actually applied.
    pub step_a: RingMatrix,
    pub step_b: RingMatrix,
}

pub struct ShadowTrainer {
    cfg: TrainConfig,
    ring: Ring,
    plan: BatchPlan,
    xa: RingMatrix,
    xb: RingMatrix,
    y: RingMatrix,
    wa: RingMatrix,
    wb: RingMatrix,
    masks: MaskSchedule,
    coeffs: Option<(u64, u64, u64)>,
    t: usize,
}

impl ShadowTrainer {
    /// Same encoded inputs as the protocol roles take.
    pub fn new(cfg: TrainConfig, xa: RingMatrix, xb: RingMatrix, y: RingMatrix) -> Result<Self> {
        cfg.validate()?;
        let ring = cfg.fixed.ring();
        if xa.rows() != xb.rows() || y.shape() != (xa.rows(), 1) {
            return Err(Error::Shape {
                op: "shadow trainer",
                left: xa.shape(),
                right: xb.shape(),
            });
        }
        let plan = cfg.plan(xa.rows());
        let (d1, d2) = (xa.cols(), xb.cols());
        let iters = plan.total_iterations();
        let a = party_a_masks(&cfg, ring, plan.max_batch(), d1, iters);
        let b = party_b_masks(&cfg, ring, plan.max_batch(), d2, iters);
        let masks = MaskSchedule::new(a, b, plan.max_batch(), d1, cfg.task == Task::Logistic);
        let coeffs = match cfg.task {
            Task::Linear => None,
            Task::Logistic => {
                let c = SigmoidCoeffs::for_bound(cfg.sigmoid_bound)?;
                let cc = cfg.fixed.with_frac_bits(cfg.coef_frac_bits);
                Some((encode(c.q0, cc)?.value(), encode(c.q1, cc)?.value(), encode(c.q2, cfg.fixed)?.value()))
            }
        };
        Ok(ShadowTrainer {
            wa: RingMatrix::zeros(ring, d1, 1),
            wb: RingMatrix::zeros(ring, d2, 1),
            cfg,
            ring,
            plan,
            xa,
            xb,
            y,
            masks,
            coeffs,
            t: 0,
        })
    }

    pub fn with_initial_weights(mut self, wa: RingMatrix, wb: RingMatrix) -> Result<Self> {
        if wa.shape() != self.wa.shape() || wb.shape() != self.wb.shape() {
            return Err(Error::Shape {
                op: "shadow initial weights",
                left: wa.shape(),
                right: wb.shape(),
            });
        }
        self.wa = wa;
        self.wb = wb;
        Ok(self)
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn total_iterations(&self) -> usize {
        self.plan.total_iterations()
    }

    pub fn weights(&self) -> (&RingMatrix, &RingMatrix) {
        (&self.wa, &self.wb)
    }

    fn residual(&self, t: usize, xa: &RingMatrix, xb: &RingMatrix, y: &RingMatrix) -> Result<RingMatrix> {
        let f = self.cfg.frac_bits();
        let n_t = xa.rows();
        let xw = xa.mat_mul(&self.wa)?.add(&xb.mat_mul(&self.wb)?)?;
        let alpha = self.masks.alpha(t, n_t);
        match self.cfg.task {
            Task::Linear => {
                // C floor-shifts the masked sum; the parties strip floor(alpha).
                let s = xw.sub(y)?.add(&alpha)?.floor_shift(f);
                s.sub(&alpha.floor_shift(f))
            }
            Task::Logistic => {
                let (q0, q1, q2) = self.coeffs.unwrap();
                let fc = self.cfg.coef_frac_bits;
                let ring = self.ring;
                let mut split = split_rng(&self.cfg, t);
                let z0 = RingMatrix::random(ring, n_t, 1, &mut split);
                let g0i = self.masks.gamma0_inv();
                let zf = xw.trunc_pair(&z0.scalar_mul(g0i), f)?;
                let gamma = self.masks.gamma(t);
                let u = zf.cube_elementwise().scalar_mul(ring.mul(q0, ring.pow(gamma, 3)));
                let v = zf.scalar_mul(ring.mul(q1, gamma));
                let u0 = RingMatrix::random(ring, n_t, 1, &mut split);
                let v0 = RingMatrix::random(ring, n_t, 1, &mut split);
                let gi = ring.inverse(gamma)?;
                let gi3 = ring.pow(gi, 3);
                let cubic = u.scalar_mul(gi3).trunc_pair(&u0.scalar_mul(gi3), 2 * f + fc)?;
                let linear = v.scalar_mul(gi).trunc_pair(&v0.scalar_mul(gi), fc)?;
                cubic.add(&linear)?.add_scalar(q2).sub(y)
            }
        }
    }

    /// Index-0 shares of both gradients, as the parties compute them.
    fn grad_share0(&self, t: usize, xa: &RingMatrix, xb: &RingMatrix, s0: &RingMatrix) -> Result<(RingMatrix, RingMatrix)> {
        let n_t = xa.rows();
        let alpha = self.masks.alpha(t, n_t);
        let alpha_f = match self.cfg.task {
            Task::Linear => alpha.floor_shift(self.cfg.frac_bits()),
            Task::Logistic => alpha,
        };
        let g0i = match self.cfg.task {
            Task::Linear => 1,
            Task::Logistic => self.masks.gamma0_inv(),
        };
        let (r0, r1) = coordinator_r(&self.cfg, self.ring, t, xa.cols(), xb.cols());
        let ga0 = xa.transpose_mul(&s0.sub(&alpha_f)?)?.sub(&r0.scalar_mul(g0i))?;
        let gb0 = xb.transpose_mul(s0)?.add(&r1.scalar_mul(g0i))?;
        Ok((ga0, gb0))
    }

    pub fn step(&mut self) -> Result<ShadowStep> {
        let t = self.t;
        let (s, e) = self.plan.batch(t);
        let n_t = e - s;
        let xa = self.xa.row_range(s, e);
        let xb = self.xb.row_range(s, e);
        let y = self.y.row_range(s, e);
        let residual = self.residual(t, &xa, &xb, &y)?;

        // S0 is the last split draw of the iteration.
        let mut split = split_rng(&self.cfg, t);
        let skip = if self.cfg.task == Task::Logistic { 3 } else { 0 };
        for _ in 0..skip {
            RingMatrix::random(self.ring, n_t, 1, &mut split);
        }
        let s0 = RingMatrix::random(self.ring, n_t, 1, &mut split);
        let (ga0, gb0) = self.grad_share0(t, &xa, &xb, &s0)?;

        let ga = xa.transpose_mul(&residual)?;
        let gb = xb.transpose_mul(&residual)?;
        let k = self.cfg.gradient_shift();
        let step_a = ga.trunc_pair(&ga0, k)?;
        let step_b = gb.trunc_pair(&gb0, k)?;
        self.wa = self.wa.sub(&step_a)?;
        self.wb = self.wb.sub(&step_b)?;
        self.t += 1;
        Ok(ShadowStep {
            t,
            residual,
            step_a,
            step_b,
        })
    }

    pub fn run(&mut self) -> Result<()> {
        while self.t < self.total_iterations() {
            self.step()?;
        }
        Ok(())
    }
}
