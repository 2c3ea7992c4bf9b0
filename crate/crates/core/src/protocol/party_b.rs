//! Active party B: holds `X_b` and the labels `Y`.

use crate::error::{Error, Result};
use crate::linalg::RingMatrix;
use crate::ring::Ring;
use crate::transport::Role;

use super::config::{BatchPlan, Task, TrainConfig};
use super::masks::{party_b_masks, share_rng, MaskSchedule};
use super::GradientShares;

/// What B sends to A at init.
pub struct BInit {
    pub masks: RingMatrix,
    pub xb0: RingMatrix,
    pub wb0: RingMatrix,
}

pub struct PartyB {
    cfg: TrainConfig,
    ring: Ring,
    plan: BatchPlan,
    xb: RingMatrix,
    y: RingMatrix,
    xb1_for_c: Option<RingMatrix>,
    xa1: Option<RingMatrix>,
    wa1: Option<RingMatrix>,
    wb1: RingMatrix,
    own_masks: Option<RingMatrix>,
    schedule: Option<MaskSchedule>,
    w_init: Option<RingMatrix>,
}

impl PartyB {
    /// `xb` is the encoded `n x d2` block; `y` the `n x 1` labels, encoded at
    /// scale `2^{2f}` for the linear task and `2^f` for the logistic task.
    pub fn new(cfg: TrainConfig, xb: RingMatrix, y: RingMatrix) -> Result<Self> {
        cfg.validate()?;
        let ring = cfg.fixed.ring();
        if xb.ring() != ring || y.ring() != ring {
            return Err(Error::RingMismatch(xb.ring().bits(), ring.bits()));
        }
        if y.shape() != (xb.rows(), 1) {
            return Err(Error::Shape {
                op: "party B labels",
                left: xb.shape(),
                right: y.shape(),
            });
        }
        let plan = cfg.plan(xb.rows());
        let wb1 = RingMatrix::zeros(ring, xb.cols(), 1);
        Ok(PartyB {
            cfg,
            ring,
            plan,
            xb,
            y,
            xb1_for_c: None,
            xa1: None,
            wa1: None,
            wb1,
            own_masks: None,
            schedule: None,
            w_init: None,
        })
    }

    /// Starts from `w` instead of zero weights. Must precede init.
    pub fn with_initial_weights(mut self, w: RingMatrix) -> Result<Self> {
        if w.shape() != (self.xb.cols(), 1) {
            return Err(Error::Shape {
                op: "initial w_b",
                left: (self.xb.cols(), 1),
                right: w.shape(),
            });
        }
        self.w_init = Some(w);
        Ok(self)
    }

    pub fn plan(&self) -> &BatchPlan {
        &self.plan
    }

    pub fn init_outgoing(&mut self) -> BInit {
        let mut rng = share_rng(&self.cfg, Role::B);
        let (n, d2) = self.xb.shape();
        let xb0 = RingMatrix::random(self.ring, n, d2, &mut rng);
        let xb1 = self.xb.sub(&xb0).unwrap();
        let wb0 = RingMatrix::random(self.ring, d2, 1, &mut rng);
        self.wb1 = match &self.w_init {
            Some(w) => w.sub(&wb0).unwrap(),
            None => wb0.neg(),
        };
        let masks = party_b_masks(&self.cfg, self.ring, self.plan.max_batch(), d2, self.plan.total_iterations());
        self.xb1_for_c = Some(xb1);
        self.own_masks = Some(masks.clone());
        BInit { masks, xb0, wb0 }
    }

    pub fn init_incoming(&mut self, a_masks: RingMatrix, xa1: RingMatrix, wa1: RingMatrix) -> Result<()> {
        if xa1.rows() != self.xb.rows() || wa1.rows() != xa1.cols() {
            return Err(Error::Shape {
                op: "party B init",
                left: xa1.shape(),
                right: wa1.shape(),
            });
        }
        let own = self.own_masks.take().expect("init_outgoing first");
        self.schedule = Some(MaskSchedule::new(
            a_masks,
            own,
            self.plan.max_batch(),
            xa1.cols(),
            self.cfg.task == Task::Logistic,
        ));
        self.xa1 = Some(xa1);
        self.wa1 = Some(wa1);
        Ok(())
    }

    /// `<X_b>_1` for C, scaled by gamma0 in the logistic task.
    pub fn coordinator_data(&mut self) -> RingMatrix {
        let xb1 = self.xb1_for_c.take().expect("init_outgoing first");
        match self.cfg.task {
            Task::Linear => xb1,
            Task::Logistic => xb1.scalar_mul(self.schedule().gamma0()),
        }
    }

    pub fn schedule(&self) -> &MaskSchedule {
        self.schedule.as_ref().expect("init_incoming first")
    }

    fn range(&self, t: usize) -> (usize, usize) {
        self.plan.batch(t)
    }

    fn batch(&self, t: usize) -> (RingMatrix, RingMatrix) {
        let (s, e) = self.range(t);
        (self.xb.row_range(s, e), self.xa1.as_ref().unwrap().row_range(s, e))
    }

    fn n_t(&self, t: usize) -> usize {
        let (s, e) = self.range(t);
        e - s
    }

    fn labels(&self, t: usize) -> RingMatrix {
        let (s, e) = self.range(t);
        self.y.row_range(s, e)
    }

    fn partial(&self, t: usize) -> RingMatrix {
        let (xb, xa1) = self.batch(t);
        xb.mat_mul(&self.wb1)
            .unwrap()
            .add(&xa1.mat_mul(self.wa1.as_ref().unwrap()).unwrap())
            .unwrap()
    }

    /// `F_B = X_b<w_b>_1 + <X_a>_1<w_a>_1 - Y + alpha1`, scale `2^{2f}`.
    pub fn forward_linear(&self, t: usize) -> RingMatrix {
        self.partial(t)
            .sub(&self.labels(t))
            .unwrap()
            .add(&self.schedule().alpha1(t, self.n_t(t)))
            .unwrap()
    }

    pub fn forward_gamma(&self, t: usize) -> RingMatrix {
        self.partial(t).scalar_mul(self.schedule().gamma0())
    }

    pub fn rescale(&self, t: usize, z1: &RingMatrix) -> RingMatrix {
        let s = self.schedule();
        let p1 = z1.scalar_mul(s.gamma0_inv()).floor_shift(self.cfg.frac_bits());
        p1.sub(&s.rho(t, self.n_t(t))).unwrap().scalar_mul(s.gamma(t))
    }

    /// `F_B = gamma^-3<u>_1 + gamma^-1<v>_1 + alpha1 - Y` at scale `2^f`.
    pub fn forward_logistic(&self, t: usize, u1: &RingMatrix, v1: &RingMatrix) -> RingMatrix {
        let s = self.schedule();
        let f = self.cfg.frac_bits();
        let fc = self.cfg.coef_frac_bits;
        let gi = self.ring.inverse(s.gamma(t)).unwrap();
        let gi3 = self.ring.pow(gi, 3);
        let a = u1.scalar_mul(gi3).floor_shift(2 * f + fc);
        let b = v1.scalar_mul(gi).floor_shift(fc);
        a.add(&b)
            .unwrap()
            .add(&s.alpha1(t, self.n_t(t)))
            .unwrap()
            .sub(&self.labels(t))
            .unwrap()
    }

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

    /// `<g_a>_1 = H1 + <X_a>_1^T<S>_1`, `<g_b>_1 = X_b^T(<S>_1 - alpha) - r1`.
    pub fn backward(&self, t: usize, s1: &RingMatrix, h1: &RingMatrix, r1: &RingMatrix) -> Result<GradientShares> {
        let (xb, xa1) = self.batch(t);
        let g = self.gamma0_inv();
        let ga = h1.scalar_mul(g).add(&xa1.transpose_mul(s1)?)?;
        let gb = xb.transpose_mul(&s1.sub(&self.alpha_f(t))?)?.sub(&r1.scalar_mul(g))?;
        Ok(GradientShares { index: 1, ga, gb })
    }

    pub fn update(&mut self, t: usize, g: &GradientShares) {
        let k = self.cfg.gradient_shift();
        let s = self.schedule();
        let (b0, b1) = (s.beta0(t), s.beta1(t));
        let wa1 = self.wa1.as_ref().unwrap();
        self.wa1 = Some(wa1.sub(&g.ga.truncate_share(k, 1)).unwrap().sub(&b0).unwrap());
        self.wb1 = self.wb1.sub(&g.gb.truncate_share(k, 1)).unwrap().sub(&b1).unwrap();
    }

    /// `<w_a>_1`, re-shared to C after each update.
    pub fn reshare(&self) -> RingMatrix {
        self.wa1.clone().expect("init_incoming first")
    }

    pub fn final_share(&self) -> RingMatrix {
        self.reshare()
    }

    pub fn reconstruct(&self, wb0: &RingMatrix) -> Result<RingMatrix> {
        wb0.add(&self.wb1)
    }

    pub fn weight_shares(&self) -> (Option<&RingMatrix>, &RingMatrix) {
        (self.wa1.as_ref(), &self.wb1)
    }
}
