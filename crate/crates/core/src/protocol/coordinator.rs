//! Coordinator C: holds one share of each data block and of each weight
//! vector, plus its own `r` masks. It never sees alpha, beta or gamma.

use crate::error::{Error, Result};
use crate::linalg::RingMatrix;
use crate::ring::{encode, Ring, SeededRng};
use crate::sigmoid::SigmoidCoeffs;

use super::config::{BatchPlan, Task, TrainConfig};
use super::masks::{coordinator_r, split_rng};

/// What C sends to one party in the backward pass.
#[derive(Debug, Clone)]
pub struct BackwardMsg {
    pub s: RingMatrix,
    pub h: RingMatrix,
    pub r: RingMatrix,
}

/// Payloads C received, kept for statistical tests of its view.
#[derive(Debug, Clone, Default)]
pub struct ViewLog {
    pub fa: Vec<u64>,
    pub fb: Vec<u64>,
    pub reshare_deltas: Vec<u64>,
}

struct Coefficients {
    q0: u64,
    q1: u64,
    q2: u64,
}

pub struct Coordinator {
    cfg: TrainConfig,
    ring: Ring,
    plan: Option<BatchPlan>,
    xa0: Option<RingMatrix>,
    xb1: Option<RingMatrix>,
    wa1: Option<RingMatrix>,
    wb0: Option<RingMatrix>,
    s: Option<RingMatrix>,
    split: Option<(usize, SeededRng)>,
    coeffs: Option<Coefficients>,
    view: Option<ViewLog>,
}

impl Coordinator {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let ring = cfg.fixed.ring();
        let coeffs = match cfg.task {
            Task::Linear => None,
            Task::Logistic => {
                let c = SigmoidCoeffs::for_bound(cfg.sigmoid_bound)?;
                let cc = cfg.fixed.with_frac_bits(cfg.coef_frac_bits);
                Some(Coefficients {
                    q0: encode(c.q0, cc)?.value(),
                    q1: encode(c.q1, cc)?.value(),
                    q2: encode(c.q2, cfg.fixed)?.value(),
                })
            }
        };
        Ok(Coordinator {
            cfg,
            ring,
            plan: None,
            xa0: None,
            xb1: None,
            wa1: None,
            wb0: None,
            s: None,
            split: None,
            coeffs,
            view: None,
        })
    }

    pub fn record_view(&mut self) {
        self.view = Some(ViewLog::default());
    }

    pub fn view(&self) -> Option<&ViewLog> {
        self.view.as_ref()
    }

    /// `<X_a>_0` from A and `<X_b>_1` from B (gamma0-scaled when logistic).
    pub fn init_data(&mut self, xa0: RingMatrix, xb1: RingMatrix) -> Result<()> {
        if xa0.rows() != xb1.rows() {
            return Err(Error::Shape {
                op: "coordinator init",
                left: xa0.shape(),
                right: xb1.shape(),
            });
        }
        self.plan = Some(self.cfg.plan(xa0.rows()));
        self.xa0 = Some(xa0);
        self.xb1 = Some(xb1);
        Ok(())
    }

    pub fn plan(&self) -> &BatchPlan {
        self.plan.as_ref().expect("init_data first")
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.xa0.as_ref().unwrap().cols(), self.xb1.as_ref().unwrap().cols())
    }

    /// Refreshed `<w_b>_0` from A and `<w_a>_1` from B.
    pub fn receive_weights(&mut self, wb0: RingMatrix, wa1: RingMatrix) {
        if let (Some(view), Some(old_b), Some(old_a)) = (self.view.as_mut(), self.wb0.as_ref(), self.wa1.as_ref()) {
            view.reshare_deltas.extend(wb0.sub(old_b).unwrap().data());
            view.reshare_deltas.extend(wa1.sub(old_a).unwrap().data());
        }
        self.wb0 = Some(wb0);
        self.wa1 = Some(wa1);
    }

    fn batch(&self, t: usize) -> (RingMatrix, RingMatrix) {
        let (s, e) = self.plan().batch(t);
        (
            self.xa0.as_ref().unwrap().row_range(s, e),
            self.xb1.as_ref().unwrap().row_range(s, e),
        )
    }

    fn split_rng(&mut self, t: usize) -> &mut SeededRng {
        if self.split.as_ref().map(|(i, _)| *i) != Some(t) {
            self.split = Some((t, split_rng(&self.cfg, t)));
        }
        &mut self.split.as_mut().unwrap().1
    }

    fn split(&mut self, t: usize, v: &RingMatrix) -> (RingMatrix, RingMatrix) {
        let ring = self.ring;
        let s0 = RingMatrix::random(ring, v.rows(), v.cols(), self.split_rng(t));
        let s1 = v.sub(&s0).unwrap();
        (s0, s1)
    }

    fn own_term(&self, t: usize) -> RingMatrix {
        let (xa0, xb1) = self.batch(t);
        xa0.mat_mul(self.wa1.as_ref().unwrap())
            .unwrap()
            .add(&xb1.mat_mul(self.wb0.as_ref().unwrap()).unwrap())
            .unwrap()
    }

    fn log_f(&mut self, fa: &RingMatrix, fb: &RingMatrix) {
        if let Some(v) = self.view.as_mut() {
            v.fa.extend(fa.data());
            v.fb.extend(fb.data());
        }
    }

    /// `S = F_A + F_B + F_C`, brought from scale `2^{2f}` to `2^f`.
    pub fn aggregate_linear(&mut self, t: usize, fa: &RingMatrix, fb: &RingMatrix) -> Result<()> {
        self.log_f(fa, fb);
        let raw = fa.add(fb)?.add(&self.own_term(t))?;
        self.s = Some(raw.floor_shift(self.cfg.frac_bits()));
        Ok(())
    }

    /// `Z = gamma0 * Xw` from the gamma-scaled partial sums, split for the
    /// rescale round.
    pub fn gather(&mut self, t: usize, gfa: &RingMatrix, gfb: &RingMatrix) -> Result<(RingMatrix, RingMatrix)> {
        let z = gfa.add(gfb)?.add(&self.own_term(t))?;
        Ok(self.split(t, &z))
    }

    /// From `Z_f = gamma_t * Xw` computes `u = q0 Z_f^3`, `v = q1 Z_f` and
    /// splits both: returns `((u0, v0), (u1, v1))`.
    pub fn activate(
        &mut self,
        t: usize,
        ra: &RingMatrix,
        rb: &RingMatrix,
    ) -> Result<((RingMatrix, RingMatrix), (RingMatrix, RingMatrix))> {
        let c = self.coeffs.as_ref().expect("logistic task");
        let zf = ra.add(rb)?;
        let u = zf.cube_elementwise().scalar_mul(c.q0);
        let v = zf.scalar_mul(c.q1);
        let (u0, u1) = self.split(t, &u);
        let (v0, v1) = self.split(t, &v);
        Ok(((u0, v0), (u1, v1)))
    }

    /// `S = F_A + F_B + q2`.
    pub fn aggregate_logistic(&mut self, _t: usize, fa: &RingMatrix, fb: &RingMatrix) -> Result<()> {
        self.log_f(fa, fb);
        let q2 = self.coeffs.as_ref().expect("logistic task").q2;
        self.s = Some(fa.add(fb)?.add_scalar(q2));
        Ok(())
    }

    /// Splits `S` and builds `(to A, to B)`.
    pub fn backward(&mut self, t: usize) -> Result<(BackwardMsg, BackwardMsg)> {
        let s = self.s.take().expect("forward first");
        let (s0, s1) = self.split(t, &s);
        let (d1, d2) = self.dims();
        let (r0, r1) = coordinator_r(&self.cfg, self.ring, t, d1, d2);
        let (xa0, xb1) = self.batch(t);
        let h0 = xb1.transpose_mul(&s0)?.add(&r1)?;
        let h1 = xa0.transpose_mul(&s1)?.add(&r0)?;
        Ok((BackwardMsg { s: s0, h: h0, r: r0 }, BackwardMsg { s: s1, h: h1, r: r1 }))
    }

    /// Last masked sum, for tests driving the roles directly.
    pub fn masked_sum(&self) -> Option<&RingMatrix> {
        self.s.as_ref()
    }

    /// Every value C currently stores, by name.
    pub fn inventory(&self) -> Vec<(&'static str, &RingMatrix)> {
        let mut out = Vec::new();
        let data_names = match self.cfg.task {
            Task::Linear => ("xa_share0", "xb_share1"),
            Task::Logistic => ("gamma_xa_share0", "gamma_xb_share1"),
        };
        if let Some(m) = &self.xa0 {
            out.push((data_names.0, m));
        }
        if let Some(m) = &self.xb1 {
            out.push((data_names.1, m));
        }
        if let Some(m) = &self.wa1 {
            out.push(("wa_share1", m));
        }
        if let Some(m) = &self.wb0 {
            out.push(("wb_share0", m));
        }
        if let Some(m) = &self.s {
            out.push(("masked_sum", m));
        }
        out
    }
}
