//! Passive party A: holds `X_a` only.

use crate::error::{Error, Result};
use crate::linalg::RingMatrix;
use crate::ring::Ring;
use crate::transport::Role;

use super::config::{BatchPlan, Task, TrainConfig};
use super::masks::{party_a_masks, share_rng, MaskSchedule};
use super::GradientShares;

/// What A sends to B at init.
pub struct AInit {
    pub masks: RingMatrix,
    pub xa1: RingMatrix,
    pub wa1: RingMatrix,
}

pub struct PartyA {
    cfg: TrainConfig,
    ring: Ring,
    plan: BatchPlan,
    xa: RingMatrix,
    xa0_for_c: Option<RingMatrix>,
    xb0: Option<RingMatrix>,
    wa0: RingMatrix,
    wb0: Option<RingMatrix>,
    own_masks: Option<RingMatrix>,
    schedule: Option<MaskSchedule>,
    w_init: Option<RingMatrix>,
}

impl PartyA {
    /// `xa` is the encoded `n x d1` feature block.
    pub fn new(cfg: TrainConfig, xa: RingMatrix) -> Result<Self> {
        cfg.validate()?;
        let ring = cfg.fixed.ring();
        if xa.ring() != ring {
            return Err(Error::RingMismatch(xa.ring().bits(), ring.bits()));
        }
        let plan = cfg.plan(xa.rows());
        let wa0 = RingMatrix::zeros(ring, xa.cols(), 1);
        Ok(PartyA {
            cfg,
            ring,
            plan,
            xa,
            xa0_for_c: None,
            xb0: None,
            wa0,
            wb0: None,
            own_masks: None,
            schedule: None,
            w_init: None,
        })
    }

    /// Starts from `w` instead of zero weights. Must precede init.
    pub fn with_initial_weights(mut self, w: RingMatrix) -> Result<Self> {
        if w.shape() != (self.xa.cols(), 1) {
            return Err(Error::Shape {
                op: "initial w_a",
                left: (self.xa.cols(), 1),
                right: w.shape(),
            });
        }
        self.w_init = Some(w);
        Ok(self)
    }

    pub fn plan(&self) -> &BatchPlan {
        &self.plan
    }

    /// Shares `X_a` and the initial `w_a`, and draws A's masks.
    pub fn init_outgoing(&mut self) -> AInit {
        let mut rng = share_rng(&self.cfg, Role::A);
        let (n, d1) = self.xa.shape();
        let xa0 = RingMatrix::random(self.ring, n, d1, &mut rng);
        let xa1 = self.xa.sub(&xa0).unwrap();
        self.wa0 = RingMatrix::random(self.ring, d1, 1, &mut rng);
        let wa1 = match &self.w_init {
            Some(w) => w.sub(&self.wa0).unwrap(),
            None => self.wa0.neg(),
        };
        let masks = party_a_masks(&self.cfg, self.ring, self.plan.max_batch(), d1, self.plan.total_iterations());
        self.xa0_for_c = Some(xa0);
        self.own_masks = Some(masks.clone());
        AInit { masks, xa1, wa1 }
    }

    pub fn init_incoming(&mut self, b_masks: RingMatrix, xb0: RingMatrix, wb0: RingMatrix) -> Result<()> {
        let n = self.xa.rows();
        if xb0.rows() != n || wb0.rows() != xb0.cols() {
            return Err(Error::Shape {
                op: "party A init",
                left: xb0.shape(),
                right: wb0.shape(),
            });
        }
        let own = self.own_masks.take().expect("init_outgoing first");
        self.schedule = Some(MaskSchedule::new(
            own,
            b_masks,
            self.plan.max_batch(),
            self.xa.cols(),
            self.cfg.task == Task::Logistic,
        ));
        self.xb0 = Some(xb0);
        self.wb0 = Some(wb0);
        Ok(())
    }

    /// `<X_a>_0` for C, scaled by gamma0 in the logistic task.
    pub fn coordinator_data(&mut self) -> RingMatrix {
        let xa0 = self.xa0_for_c.take().expect("init_outgoing first");
        match self.cfg.task {
            Task::Linear => xa0,
            Task::Logistic => xa0.scalar_mul(self.schedule().gamma0()),
        }
    }

    pub fn schedule(&self) -> &MaskSchedule {
        self.schedule.as_ref().expect("init_incoming first")
    }

    fn batch(&self, t: usize) -> (RingMatrix, RingMatrix) {
        let (s, e) = self.plan.batch(t);
        (self.xa.row_range(s, e), self.xb0.as_ref().unwrap().row_range(s, e))
    }

    fn n_t(&self, t: usize) -> usize {
        let (s, e) = self.plan.batch(t);
        e - s
    }

    fn partial(&self, t: usize) -> RingMatrix {
        let (xa, xb0) = self.batch(t);
        xa.mat_mul(&self.wa0)
            .unwrap()
            .add(&xb0.mat_mul(self.wb0.as_ref().unwrap()).unwrap())
            .unwrap()
    }

    /// `F_A = X_a<w_a>_0 + <X_b>_0<w_b>_0 + alpha0`, scale `2^{2f}`.
    pub fn forward_linear(&self, t: usize) -> RingMatrix {
        self.partial(t).add(&self.schedule().alpha0(t, self.n_t(t))).unwrap()
    }

    /// `gamma0 * F'_A`.
    pub fn forward_gamma(&self, t: usize) -> RingMatrix {
        self.partial(t).scalar_mul(self.schedule().gamma0())
    }

    /// Unscales A's share of `Z`, truncates it to scale `2^f` and re-masks.
    pub fn rescale(&self, t: usize, z0: &RingMatrix) -> RingMatrix {
        let s = self.schedule();
        let p0 = z0.scalar_mul(s.gamma0_inv()).ceil_shift(self.cfg.frac_bits());
        p0.add(&s.rho(t, self.n_t(t))).unwrap().scalar_mul(s.gamma(t))
    }

    /// `F_A = gamma^-3<u>_0 + gamma^-1<v>_0 + alpha0` at scale `2^f`.
    pub fn forward_logistic(&self, t: usize, u0: &RingMatrix, v0: &RingMatrix) -> RingMatrix {
        let s = self.schedule();
        let f = self.cfg.frac_bits();
        let fc = self.cfg.coef_frac_bits;
        let gi = self.ring.inverse(s.gamma(t)).unwrap();
        let gi3 = self.ring.pow(gi, 3);
        let a = u0.scalar_mul(gi3).ceil_shift(2 * f + fc);
        let b = v0.scalar_mul(gi).ceil_shift(fc);
        a.add(&b).unwrap().add(&s.alpha0(t, self.n_t(t))).unwrap()
    }

    /// The mask the parties strip from `S` in the backward pass.
    pub fn alpha_f(&self, t: usize) -> RingMatrix {
        let alpha = self.schedule().alpha(t, self.n_t(t));
        match self.cfg.task {
            Task::Linear => alpha.floor_shift(self.cfg.frac_bits()),
            Task::Logistic => alpha,
        }
    }

    fn gamma0_inv(&self) -> u64 {
        match self.cfg.task {
            Task::Linear => 1,
            Task::Logistic => self.schedule().gamma0_inv(),
        }
    }

    /// `<g_a>_0 = X_a^T(<S>_0 - alpha) - r0`, `<g_b>_0 = H0 + <X_b>_0^T<S>_0`
    /// (H0 and r0 unscaled by gamma0^-1 in the logistic task).
    pub fn backward(&self, t: usize, s0: &RingMatrix, h0: &RingMatrix, r0: &RingMatrix) -> Result<GradientShares> {
        let (xa, xb0) = self.batch(t);
        let g = self.gamma0_inv();
        let ga = xa.transpose_mul(&s0.sub(&self.alpha_f(t))?)?.sub(&r0.scalar_mul(g))?;
        let gb = h0.scalar_mul(g).add(&xb0.transpose_mul(s0)?)?;
        Ok(GradientShares { index: 0, ga, gb })
    }

    pub fn update(&mut self, t: usize, g: &GradientShares) {
        let k = self.cfg.gradient_shift();
        let s = self.schedule();
        let (b0, b1) = (s.beta0(t), s.beta1(t));
        self.wa0 = self.wa0.sub(&g.ga.truncate_share(k, 0)).unwrap().add(&b0).unwrap();
        let wb0 = self.wb0.as_ref().unwrap();
        self.wb0 = Some(wb0.sub(&g.gb.truncate_share(k, 0)).unwrap().add(&b1).unwrap());
    }

    /// `<w_b>_0`, re-shared to C after each update.
    pub fn reshare(&self) -> RingMatrix {
        self.wb0.clone().expect("init_incoming first")
    }

    /// A's half of the final exchange.
    pub fn final_share(&self) -> RingMatrix {
        self.reshare()
    }

    /// `w_a = <w_a>_0 + <w_a>_1`.
    pub fn reconstruct(&self, wa1: &RingMatrix) -> Result<RingMatrix> {
        self.wa0.add(wa1)
    }

    pub fn weight_shares(&self) -> (&RingMatrix, Option<&RingMatrix>) {
        (&self.wa0, self.wb0.as_ref())
    }
}
