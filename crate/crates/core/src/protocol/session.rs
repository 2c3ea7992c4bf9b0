//! Single-threaded driver that calls the role steps in protocol order,
//! without a transport. Tests use it to inspect intermediate values.

use crate::error::Result;
use crate::linalg::RingMatrix;

use super::config::{Task, TrainConfig};
use super::coordinator::Coordinator;
use super::party_a::PartyA;
use super::party_b::PartyB;
use super::GradientShares;

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub t: usize,
    /// Masked sum at C.
    pub s: RingMatrix,
    /// The mask A and B strip from `S`.
    pub alpha_f: RingMatrix,
    pub grad0: GradientShares,
    pub grad1: GradientShares,
}

pub struct LocalSession {
    cfg: TrainConfig,
    pub a: PartyA,
    pub b: PartyB,
    pub c: Coordinator,
    t: usize,
}

impl LocalSession {
    /// Builds the roles and runs initialization.
    pub fn new(cfg: TrainConfig, xa: RingMatrix, xb: RingMatrix, y: RingMatrix) -> Result<Self> {
        let a = PartyA::new(cfg.clone(), xa)?;
        let b = PartyB::new(cfg.clone(), xb, y)?;
        Self::from_parties(cfg, a, b)
    }

    /// Like [`LocalSession::new`] but starting from the given weights.
    pub fn with_weights(
        cfg: TrainConfig,
        xa: RingMatrix,
        xb: RingMatrix,
        y: RingMatrix,
        wa: RingMatrix,
        wb: RingMatrix,
    ) -> Result<Self> {
        let a = PartyA::new(cfg.clone(), xa)?.with_initial_weights(wa)?;
        let b = PartyB::new(cfg.clone(), xb, y)?.with_initial_weights(wb)?;
        Self::from_parties(cfg, a, b)
    }

    fn from_parties(cfg: TrainConfig, mut a: PartyA, mut b: PartyB) -> Result<Self> {
        let mut c = Coordinator::new(cfg.clone())?;
        let ai = a.init_outgoing();
        let bi = b.init_outgoing();
        b.init_incoming(ai.masks, ai.xa1, ai.wa1)?;
        a.init_incoming(bi.masks, bi.xb0, bi.wb0)?;
        c.init_data(a.coordinator_data(), b.coordinator_data())?;
        c.receive_weights(a.reshare(), b.reshare());
        Ok(LocalSession { cfg, a, b, c, t: 0 })
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn total_iterations(&self) -> usize {
        self.a.plan().total_iterations()
    }

    /// Forward pass only; leaves the masked sum at C.
    pub fn forward(&mut self) -> Result<RingMatrix> {
        let t = self.t;
        match self.cfg.task {
            Task::Linear => {
                let fa = self.a.forward_linear(t);
                let fb = self.b.forward_linear(t);
                self.c.aggregate_linear(t, &fa, &fb)?;
            }
            Task::Logistic => {
                let gfa = self.a.forward_gamma(t);
                let gfb = self.b.forward_gamma(t);
                let (z0, z1) = self.c.gather(t, &gfa, &gfb)?;
                let ra = self.a.rescale(t, &z0);
                let rb = self.b.rescale(t, &z1);
                let ((u0, v0), (u1, v1)) = self.c.activate(t, &ra, &rb)?;
                let fa = self.a.forward_logistic(t, &u0, &v0);
                let fb = self.b.forward_logistic(t, &u1, &v1);
                self.c.aggregate_logistic(t, &fa, &fb)?;
            }
        }
        Ok(self.c.masked_sum().expect("just aggregated").clone())
    }

    /// One full iteration: forward, backward, update, re-share.
    pub fn step(&mut self) -> Result<IterationTrace> {
        let t = self.t;
        let s = self.forward()?;
        let (ma, mb) = self.c.backward(t)?;
        let grad0 = self.a.backward(t, &ma.s, &ma.h, &ma.r)?;
        let grad1 = self.b.backward(t, &mb.s, &mb.h, &mb.r)?;
        self.a.update(t, &grad0);
        self.b.update(t, &grad1);
        self.c.receive_weights(self.a.reshare(), self.b.reshare());
        self.t += 1;
        Ok(IterationTrace {
            t,
            s,
            alpha_f: self.a.alpha_f(t),
            grad0,
            grad1,
        })
    }

    pub fn run(&mut self) -> Result<()> {
        while self.t < self.total_iterations() {
            self.step()?;
        }
        Ok(())
    }

    /// Final reconstruction: A learns `w_a`, B learns `w_b`.
    pub fn weights(&self) -> Result<(RingMatrix, RingMatrix)> {
        let wa = self.a.reconstruct(&self.b.final_share())?;
        let wb = self.b.reconstruct(&self.a.final_share())?;
        Ok((wa, wb))
    }
}
