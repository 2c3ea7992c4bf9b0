//! Runs one role against a transport endpoint, or all three on threads.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::linalg::RingMatrix;
use crate::transport::{inproc, CommLedger, Endpoint, Kind, Phase, Role, TranscriptEntry};

use super::config::{config_hash, Task, TrainConfig};
use super::coordinator::{Coordinator, ViewLog};
use super::party_a::PartyA;
use super::party_b::PartyB;

pub enum RoleInput {
    A { xa: RingMatrix },
    B { xb: RingMatrix, y: RingMatrix },
    C,
}

#[derive(Debug, Clone)]
pub struct RoleOutcome {
    pub role: Role,
    /// `w_a` for A, `w_b` for B, nothing for C.
    pub weights: Option<RingMatrix>,
    pub ledger: CommLedger,
    pub transcript: Vec<TranscriptEntry>,
    pub transcript_digest: String,
    /// Wall time of each training iteration as seen by this role.
    pub iteration_times: Vec<Duration>,
    pub iters_per_epoch: usize,
    pub view: Option<ViewLog>,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub latency: Duration,
    pub timeout: Duration,
    /// Keep C's received payloads for statistical checks.
    pub record_view: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            latency: Duration::ZERO,
            timeout: Duration::from_secs(120),
            record_view: false,
        }
    }
}

fn it(t: usize) -> u32 {
    t as u32
}

fn finish(role: Role, ep: &Endpoint, weights: Option<RingMatrix>, times: Vec<Duration>, ipe: usize, view: Option<ViewLog>) -> RoleOutcome {
    RoleOutcome {
        role,
        weights,
        ledger: ep.ledger().clone(),
        transcript: ep.transcript().to_vec(),
        transcript_digest: ep.transcript_digest(),
        iteration_times: times,
        iters_per_epoch: ipe,
        view,
    }
}

fn run_a(cfg: &TrainConfig, xa: RingMatrix, ep: &mut Endpoint) -> Result<RoleOutcome> {
    let mut a = PartyA::new(cfg.clone(), xa)?;
    let init = a.init_outgoing();
    ep.send(Role::B, Phase::Init, Kind::Mask, 0, &init.masks)?;
    ep.send(Role::B, Phase::Init, Kind::XShare, 0, &init.xa1)?;
    ep.send(Role::B, Phase::Init, Kind::WShare, 0, &init.wa1)?;
    let b_masks = ep.recv(Role::B, Phase::Init, Kind::Mask, 0)?;
    let xb0 = ep.recv(Role::B, Phase::Init, Kind::XShare, 0)?;
    let wb0 = ep.recv(Role::B, Phase::Init, Kind::WShare, 0)?;
    a.init_incoming(b_masks, xb0, wb0)?;
    let xa0 = a.coordinator_data();
    ep.send(Role::C, Phase::Init, Kind::XShare, 0, &xa0)?;
    ep.send(Role::C, Phase::Init, Kind::WShare, 0, &a.reshare())?;

    let total = a.plan().total_iterations();
    let mut times = Vec::with_capacity(total);
    for t in 0..total {
        let start = Instant::now();
        match cfg.task {
            Task::Linear => ep.send(Role::C, Phase::Forward1, Kind::FA, it(t), &a.forward_linear(t))?,
            Task::Logistic => {
                ep.send(Role::C, Phase::Forward1, Kind::GammaFA, it(t), &a.forward_gamma(t))?;
                let z0 = ep.recv(Role::C, Phase::Forward1, Kind::ZShare, it(t))?;
                ep.send(Role::C, Phase::Forward1, Kind::Rescaled, it(t), &a.rescale(t, &z0))?;
                let u0 = ep.recv(Role::C, Phase::Forward2, Kind::UShare, it(t))?;
                let v0 = ep.recv(Role::C, Phase::Forward2, Kind::VShare, it(t))?;
                ep.send(Role::C, Phase::Forward2, Kind::FA, it(t), &a.forward_logistic(t, &u0, &v0))?;
            }
        }
        let s0 = ep.recv(Role::C, Phase::Backward, Kind::SShare, it(t))?;
        let h0 = ep.recv(Role::C, Phase::Backward, Kind::H0, it(t))?;
        let r0 = ep.recv(Role::C, Phase::Backward, Kind::R0, it(t))?;
        let g = a.backward(t, &s0, &h0, &r0)?;
        a.update(t, &g);
        ep.send(Role::C, Phase::Reshare, Kind::WShare, it(t), &a.reshare())?;
        times.push(start.elapsed());
    }
    ep.send(Role::B, Phase::Reconstruct, Kind::WShare, it(total), &a.final_share())?;
    let wa1 = ep.recv(Role::B, Phase::Reconstruct, Kind::WShare, it(total))?;
    let wa = a.reconstruct(&wa1)?;
    Ok(finish(Role::A, ep, Some(wa), times, a.plan().iters_per_epoch(), None))
}

fn run_b(cfg: &TrainConfig, xb: RingMatrix, y: RingMatrix, ep: &mut Endpoint) -> Result<RoleOutcome> {
    let mut b = PartyB::new(cfg.clone(), xb, y)?;
    let init = b.init_outgoing();
    ep.send(Role::A, Phase::Init, Kind::Mask, 0, &init.masks)?;
    ep.send(Role::A, Phase::Init, Kind::XShare, 0, &init.xb0)?;
    ep.send(Role::A, Phase::Init, Kind::WShare, 0, &init.wb0)?;
    let a_masks = ep.recv(Role::A, Phase::Init, Kind::Mask, 0)?;
    let xa1 = ep.recv(Role::A, Phase::Init, Kind::XShare, 0)?;
    let wa1 = ep.recv(Role::A, Phase::Init, Kind::WShare, 0)?;
    b.init_incoming(a_masks, xa1, wa1)?;
    let xb1 = b.coordinator_data();
    ep.send(Role::C, Phase::Init, Kind::XShare, 0, &xb1)?;
    ep.send(Role::C, Phase::Init, Kind::WShare, 0, &b.reshare())?;

    let total = b.plan().total_iterations();
    let mut times = Vec::with_capacity(total);
    for t in 0..total {
        let start = Instant::now();
        match cfg.task {
            Task::Linear => ep.send(Role::C, Phase::Forward1, Kind::FB, it(t), &b.forward_linear(t))?,
            Task::Logistic => {
                ep.send(Role::C, Phase::Forward1, Kind::GammaFB, it(t), &b.forward_gamma(t))?;
                let z1 = ep.recv(Role::C, Phase::Forward1, Kind::ZShare, it(t))?;
                ep.send(Role::C, Phase::Forward1, Kind::Rescaled, it(t), &b.rescale(t, &z1))?;
                let u1 = ep.recv(Role::C, Phase::Forward2, Kind::UShare, it(t))?;
                let v1 = ep.recv(Role::C, Phase::Forward2, Kind::VShare, it(t))?;
                ep.send(Role::C, Phase::Forward2, Kind::FB, it(t), &b.forward_logistic(t, &u1, &v1))?;
            }
        }
        let s1 = ep.recv(Role::C, Phase::Backward, Kind::SShare, it(t))?;
        let h1 = ep.recv(Role::C, Phase::Backward, Kind::H1, it(t))?;
        let r1 = ep.recv(Role::C, Phase::Backward, Kind::R1, it(t))?;
        let g = b.backward(t, &s1, &h1, &r1)?;
        b.update(t, &g);
        ep.send(Role::C, Phase::Reshare, Kind::WShare, it(t), &b.reshare())?;
        times.push(start.elapsed());
    }
    ep.send(Role::A, Phase::Reconstruct, Kind::WShare, it(total), &b.final_share())?;
    let wb0 = ep.recv(Role::A, Phase::Reconstruct, Kind::WShare, it(total))?;
    let wb = b.reconstruct(&wb0)?;
    Ok(finish(Role::B, ep, Some(wb), times, b.plan().iters_per_epoch(), None))
}

fn run_c(cfg: &TrainConfig, ep: &mut Endpoint, record_view: bool) -> Result<RoleOutcome> {
    let mut c = Coordinator::new(cfg.clone())?;
    if record_view {
        c.record_view();
    }
    let xa0 = ep.recv(Role::A, Phase::Init, Kind::XShare, 0)?;
    let wb0 = ep.recv(Role::A, Phase::Init, Kind::WShare, 0)?;
    let xb1 = ep.recv(Role::B, Phase::Init, Kind::XShare, 0)?;
    let wa1 = ep.recv(Role::B, Phase::Init, Kind::WShare, 0)?;
    c.init_data(xa0, xb1)?;
    c.receive_weights(wb0, wa1);

    let total = c.plan().total_iterations();
    let mut times = Vec::with_capacity(total);
    for t in 0..total {
        let start = Instant::now();
        match cfg.task {
            Task::Linear => {
                let fa = ep.recv(Role::A, Phase::Forward1, Kind::FA, it(t))?;
                let fb = ep.recv(Role::B, Phase::Forward1, Kind::FB, it(t))?;
                c.aggregate_linear(t, &fa, &fb)?;
            }
            Task::Logistic => {
                let gfa = ep.recv(Role::A, Phase::Forward1, Kind::GammaFA, it(t))?;
                let gfb = ep.recv(Role::B, Phase::Forward1, Kind::GammaFB, it(t))?;
                let (z0, z1) = c.gather(t, &gfa, &gfb)?;
                ep.send(Role::A, Phase::Forward1, Kind::ZShare, it(t), &z0)?;
                ep.send(Role::B, Phase::Forward1, Kind::ZShare, it(t), &z1)?;
                let ra = ep.recv(Role::A, Phase::Forward1, Kind::Rescaled, it(t))?;
                let rb = ep.recv(Role::B, Phase::Forward1, Kind::Rescaled, it(t))?;
                let ((u0, v0), (u1, v1)) = c.activate(t, &ra, &rb)?;
                ep.send(Role::A, Phase::Forward2, Kind::UShare, it(t), &u0)?;
                ep.send(Role::A, Phase::Forward2, Kind::VShare, it(t), &v0)?;
                ep.send(Role::B, Phase::Forward2, Kind::UShare, it(t), &u1)?;
                ep.send(Role::B, Phase::Forward2, Kind::VShare, it(t), &v1)?;
                let fa = ep.recv(Role::A, Phase::Forward2, Kind::FA, it(t))?;
                let fb = ep.recv(Role::B, Phase::Forward2, Kind::FB, it(t))?;
                c.aggregate_logistic(t, &fa, &fb)?;
            }
        }
        let (ma, mb) = c.backward(t)?;
        ep.send(Role::A, Phase::Backward, Kind::SShare, it(t), &ma.s)?;
        ep.send(Role::A, Phase::Backward, Kind::H0, it(t), &ma.h)?;
        ep.send(Role::A, Phase::Backward, Kind::R0, it(t), &ma.r)?;
        ep.send(Role::B, Phase::Backward, Kind::SShare, it(t), &mb.s)?;
        ep.send(Role::B, Phase::Backward, Kind::H1, it(t), &mb.h)?;
        ep.send(Role::B, Phase::Backward, Kind::R1, it(t), &mb.r)?;
        let wb0 = ep.recv(Role::A, Phase::Reshare, Kind::WShare, it(t))?;
        let wa1 = ep.recv(Role::B, Phase::Reshare, Kind::WShare, it(t))?;
        c.receive_weights(wb0, wa1);
        times.push(start.elapsed());
    }
    let ipe = c.plan().iters_per_epoch();
    Ok(finish(Role::C, ep, None, times, ipe, c.view().cloned()))
}

/// Handshakes, then runs the role to completion.
pub fn run_role(
    cfg: &TrainConfig,
    input: RoleInput,
    ep: &mut Endpoint,
    config_hash: &[u8; 32],
    record_view: bool,
) -> Result<RoleOutcome> {
    ep.handshake(config_hash)?;
    match (input, ep.role()) {
        (RoleInput::A { xa }, Role::A) => run_a(cfg, xa, ep),
        (RoleInput::B { xb, y }, Role::B) => run_b(cfg, xb, y, ep),
        (RoleInput::C, Role::C) => run_c(cfg, ep, record_view),
        (_, role) => Err(Error::config("role", format!("input does not match role {}", role.name()))),
    }
}

/// Runs A, B and C on three threads over in-process channels.
pub fn simulate(cfg: &TrainConfig, xa: RingMatrix, xb: RingMatrix, y: RingMatrix, opts: &SimOptions) -> Result<[RoleOutcome; 3]> {
    cfg.validate()?;
    let hash = config_hash(&cfg.to_pairs());
    let [mut ea, mut eb, mut ec] = inproc::mesh(cfg.fixed.ring(), opts.latency, opts.timeout);
    let (ra, rb, rc) = std::thread::scope(|s| {
        let ha = s.spawn(|| run_role(cfg, RoleInput::A { xa }, &mut ea, &hash, false));
        let hb = s.spawn(|| run_role(cfg, RoleInput::B { xb, y }, &mut eb, &hash, false));
        let hc = s.spawn(|| run_role(cfg, RoleInput::C, &mut ec, &hash, opts.record_view));
        (ha.join(), hb.join(), hc.join())
    });
    let unwrap = |r: std::thread::Result<Result<RoleOutcome>>| r.unwrap_or_else(|p| std::panic::resume_unwind(p));
    let (a, b, c) = (unwrap(ra), unwrap(rb), unwrap(rc));
    // Report the first failure in protocol order rather than a downstream
    // disconnect.
    Ok([a?, b?, c?])
}
