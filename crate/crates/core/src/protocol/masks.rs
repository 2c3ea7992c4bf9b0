//! Seeded randomness of every role.
//!
//! Each stream is keyed by `(seed, label, index)` so any iteration's masks can
//! be regenerated independently; the shadow trainer relies on this.

use crate::linalg::RingMatrix;
use crate::ring::{Ring, SeededRng};

use super::config::{MaskMode, Task, TrainConfig};
use crate::transport::Role;

pub const A_SHARE: &str = "a/share";
pub const B_SHARE: &str = "b/share";
pub const A_MASKS: &str = "a/masks";
pub const A_GAMMA0: &str = "a/gamma0";
pub const B_MASKS: &str = "b/masks";
pub const C_MASKS: &str = "c/masks";
pub const C_SPLIT: &str = "c/split";

pub fn share_rng(cfg: &TrainConfig, role: Role) -> SeededRng {
    let label = match role {
        Role::A => A_SHARE,
        Role::B => B_SHARE,
        Role::C => "c/share",
    };
    SeededRng::derive(cfg.seed, label, 0)
}

pub fn split_rng(cfg: &TrainConfig, t: usize) -> SeededRng {
    SeededRng::derive(cfg.mask_seed(), C_SPLIT, t as u64)
}

/// Column layout of the mask rows A and B exchange at init.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskLayout {
    pub batch: usize,
    pub d1: usize,
    pub d2: usize,
    pub logistic: bool,
}

impl MaskLayout {
    /// A's row: alpha0 | beta0 | (rho | gamma_t)
    pub fn a_width(&self) -> usize {
        self.batch + self.d1 + if self.logistic { self.batch + 1 } else { 0 }
    }

    /// B's row: alpha1 | beta1
    pub fn b_width(&self) -> usize {
        self.batch + self.d2
    }
}

fn zero_mode(cfg: &TrainConfig) -> bool {
    cfg.mask_mode == MaskMode::Zero
}

/// A's masks for `iterations` iterations plus a header row holding gamma0.
pub fn party_a_masks(cfg: &TrainConfig, ring: Ring, batch: usize, d1: usize, iterations: usize) -> RingMatrix {
    let logistic = cfg.task == Task::Logistic;
    let layout = MaskLayout {
        batch,
        d1,
        d2: 0,
        logistic,
    };
    let w = layout.a_width();
    let mut data = vec![0u64; (iterations + 1) * w];
    let zero = zero_mode(cfg);
    data[0] = if zero || !logistic {
        1
    } else {
        SeededRng::derive(cfg.mask_seed(), A_GAMMA0, 0).odd(ring)
    };
    if !zero {
        for t in 0..iterations {
            let mut rng = SeededRng::derive(cfg.mask_seed(), A_MASKS, t as u64);
            let row = &mut data[(t + 1) * w..(t + 2) * w];
            for v in row[..batch + d1].iter_mut() {
                *v = rng.uniform(ring);
            }
            if logistic {
                for v in row[batch + d1..2 * batch + d1].iter_mut() {
                    *v = rng.uniform(ring);
                }
                row[w - 1] = rng.odd(ring);
            }
        }
    } else if logistic {
        for t in 0..iterations {
            data[(t + 2) * w - 1] = 1;
        }
    }
    RingMatrix::from_vec(ring, iterations + 1, w, data).expect("mask shape")
}

pub fn party_b_masks(cfg: &TrainConfig, ring: Ring, batch: usize, d2: usize, iterations: usize) -> RingMatrix {
    let w = batch + d2;
    let mut data = vec![0u64; iterations * w];
    if !zero_mode(cfg) {
        for t in 0..iterations {
            let mut rng = SeededRng::derive(cfg.mask_seed(), B_MASKS, t as u64);
            for v in data[t * w..(t + 1) * w].iter_mut() {
                *v = rng.uniform(ring);
            }
        }
    }
    RingMatrix::from_vec(ring, iterations, w, data).expect("mask shape")
}

/// C's per-iteration `(r0, r1)` of lengths `d1`, `d2`.
pub fn coordinator_r(cfg: &TrainConfig, ring: Ring, t: usize, d1: usize, d2: usize) -> (RingMatrix, RingMatrix) {
    if zero_mode(cfg) {
        return (RingMatrix::zeros(ring, d1, 1), RingMatrix::zeros(ring, d2, 1));
    }
    let mut rng = SeededRng::derive(cfg.mask_seed(), C_MASKS, t as u64);
    let r0 = RingMatrix::random(ring, d1, 1, &mut rng);
    let r1 = RingMatrix::random(ring, d2, 1, &mut rng);
    (r0, r1)
}

/// The combined schedule both A and B hold after the exchange.
#[derive(Debug, Clone)]
pub struct MaskSchedule {
    ring: Ring,
    layout: MaskLayout,
    a: RingMatrix,
    b: RingMatrix,
    gamma0_inv: u64,
}

impl MaskSchedule {
    pub fn new(a: RingMatrix, b: RingMatrix, batch: usize, d1: usize, logistic: bool) -> Self {
        let ring = a.ring();
        let d2 = b.cols() - batch;
        let layout = MaskLayout {
            batch,
            d1,
            d2,
            logistic,
        };
        let gamma0_inv = ring.inverse(a.get(0, 0)).expect("gamma0 is odd");
        MaskSchedule {
            ring,
            layout,
            a,
            b,
            gamma0_inv,
        }
    }

    pub fn layout(&self) -> MaskLayout {
        self.layout
    }

    pub fn iterations(&self) -> usize {
        self.b.rows()
    }

    fn a_row(&self, t: usize) -> &[u64] {
        let w = self.a.cols();
        &self.a.data()[(t + 1) * w..(t + 2) * w]
    }

    fn b_row(&self, t: usize) -> &[u64] {
        let w = self.b.cols();
        &self.b.data()[t * w..(t + 1) * w]
    }

    fn column(&self, v: &[u64]) -> RingMatrix {
        RingMatrix::from_vec(self.ring, v.len(), 1, v.to_vec()).unwrap()
    }

    pub fn alpha0(&self, t: usize, n_t: usize) -> RingMatrix {
        self.column(&self.a_row(t)[..n_t])
    }

    pub fn alpha1(&self, t: usize, n_t: usize) -> RingMatrix {
        self.column(&self.b_row(t)[..n_t])
    }

    pub fn alpha(&self, t: usize, n_t: usize) -> RingMatrix {
        self.alpha0(t, n_t).add(&self.alpha1(t, n_t)).unwrap()
    }

    pub fn beta0(&self, t: usize) -> RingMatrix {
        let l = self.layout;
        self.column(&self.a_row(t)[l.batch..l.batch + l.d1])
    }

    pub fn beta1(&self, t: usize) -> RingMatrix {
        self.column(&self.b_row(t)[self.layout.batch..])
    }

    pub fn rho(&self, t: usize, n_t: usize) -> RingMatrix {
        let l = self.layout;
        let start = l.batch + l.d1;
        self.column(&self.a_row(t)[start..start + n_t])
    }

    pub fn gamma(&self, t: usize) -> u64 {
        if self.layout.logistic {
            *self.a_row(t).last().unwrap()
        } else {
            1
        }
    }

    pub fn gamma0(&self) -> u64 {
        self.a.get(0, 0)
    }

    pub fn gamma0_inv(&self) -> u64 {
        self.gamma0_inv
    }

    /// Every mask value of the schedule, for view-partition checks.
    pub fn all_values(&self) -> Vec<u64> {
        let mut v = self.a.data().to_vec();
        v.extend_from_slice(self.b.data());
        for t in 0..self.iterations() {
            let n = self.layout.batch;
            v.extend(self.alpha(t, n).data());
            let g = self.gamma(t);
            v.push(self.ring.inverse(g).unwrap());
            v.push(self.ring.pow(self.ring.inverse(g).unwrap(), 3));
        }
        v.push(self.gamma0_inv);
        v.retain(|&x| x > 1);
        v
    }
}
