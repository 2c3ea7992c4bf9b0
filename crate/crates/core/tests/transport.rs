use std::collections::BTreeMap;
use std::net::TcpListener;
use std::time::{Duration, Instant};

use proptest::prelude::*;

use vfl_core::data::{encode_features, encode_labels, split_vertical, synth};
use vfl_core::linalg::RingMatrix;
use vfl_core::protocol::config::config_hash;
use vfl_core::protocol::{run_role, simulate, RoleInput, RoleOutcome, SimOptions, Task, TrainConfig};
use vfl_core::ring::{FixedPointConfig, Ring, SeededRng};
use vfl_core::transport::frame::{read_frame, write_frame};
use vfl_core::transport::tcp::{connect, TcpOptions};
use vfl_core::transport::{inproc, Kind, Phase, ProtocolMessage, Role};
use vfl_core::{Error, TransportError};

struct Inputs {
    xa: RingMatrix,
    xb: RingMatrix,
    y: RingMatrix,
}

fn inputs(cfg: &TrainConfig, n: usize, d: usize, seed: u64) -> Inputs {
    let ds = synth(n, d, cfg.task, 0.0, seed).unwrap();
    let p = split_vertical(&ds, d / 2).unwrap();
    Inputs {
        xa: encode_features(&p.xa, cfg.fixed).unwrap(),
        xb: encode_features(&p.xb, cfg.fixed).unwrap(),
        y: encode_labels(&p.y, cfg.task, cfg.fixed).unwrap(),
    }
}

fn cfg(task: Task, epochs: usize, batch: Option<usize>) -> TrainConfig {
    TrainConfig {
        task,
        epochs,
        batch_size: batch,
        lr_pow2: 6,
        fixed: FixedPointConfig::new(64, 10).unwrap(),
        coef_frac_bits: 14,
        seed: 5,
        ..Default::default()
    }
}

fn sim(c: &TrainConfig, i: &Inputs, latency_ms: u64) -> [RoleOutcome; 3] {
    let opts = SimOptions {
        latency: Duration::from_millis(latency_ms),
        ..Default::default()
    };
    simulate(c, i.xa.clone(), i.xb.clone(), i.y.clone(), &opts).unwrap()
}

fn free_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

/// Runs the three roles over loopback TCP, each with its own config.
fn tcp_run(cfgs: [TrainConfig; 3], i: &Inputs) -> [vfl_core::Result<RoleOutcome>; 3] {
    tcp_run_with(cfgs, i, false)
}

/// With `ghost`, a dialer connects to C and hangs up before the real roles
/// start, as a crashed B would.
fn tcp_run_with(cfgs: [TrainConfig; 3], i: &Inputs, ghost: bool) -> [vfl_core::Result<RoleOutcome>; 3] {
    let b_addr = free_port();
    let c_addr = free_port();
    let peers: BTreeMap<Role, String> = [(Role::B, b_addr.clone()), (Role::C, c_addr.clone())].into();
    let listen = [None, Some(b_addr), Some(c_addr)];
    std::thread::scope(|s| {
        let mut handles: Vec<_> = Role::ALL
            .into_iter()
            .zip(cfgs)
            .rev()
            .map(|(role, c)| {
                let opts = TcpOptions {
                    listen: listen[role.index()].clone(),
                    peers: peers.clone(),
                    latency: Duration::ZERO,
                    timeout: Duration::from_secs(20),
                };
                let input = match role {
                    Role::A => RoleInput::A { xa: i.xa.clone() },
                    Role::B => RoleInput::B {
                        xb: i.xb.clone(),
                        y: i.y.clone(),
                    },
                    Role::C => RoleInput::C,
                };
                let h = s.spawn(move || {
                    let mut ep = connect(role, c.fixed.ring(), &opts)?;
                    let hash = config_hash(&c.to_pairs());
                    run_role(&c, input, &mut ep, &hash, false)
                });
                if ghost && role == Role::C {
                    let deadline = Instant::now() + Duration::from_secs(5);
                    while std::net::TcpStream::connect(&peers[&Role::C]).is_err() {
                        assert!(Instant::now() < deadline, "C never listened");
                        std::thread::sleep(Duration::from_millis(10));
                    }
                }
                h
            })
            .collect();
        handles.reverse();
        let mut out = handles.into_iter().map(|h| h.join().unwrap());
        [out.next().unwrap(), out.next().unwrap(), out.next().unwrap()]
    })
}

#[test]
fn tcp_reproduces_inproc_transcript_and_model() {
    for task in [Task::Linear, Task::Logistic] {
        let c = cfg(task, 2, Some(8));
        let i = inputs(&c, 20, 4, 1);
        let local = sim(&c, &i, 0);
        let tcp = tcp_run([c.clone(), c.clone(), c.clone()], &i);
        for (l, t) in local.iter().zip(tcp) {
            let t = t.unwrap();
            assert_eq!(l.weights, t.weights);
            assert_eq!(l.transcript, t.transcript);
            assert_eq!(l.transcript_digest, t.transcript_digest);
            assert_eq!(l.ledger, t.ledger);
        }
    }
}

#[test]
fn restarted_dialer_before_init_handshakes_cleanly() {
    let c = cfg(Task::Linear, 2, Some(8));
    let i = inputs(&c, 20, 4, 1);
    let local = sim(&c, &i, 0);
    let tcp = tcp_run_with([c.clone(), c.clone(), c.clone()], &i, true);
    for (l, t) in local.iter().zip(tcp) {
        assert_eq!(l.weights, t.unwrap().weights);
    }
}

#[test]
fn tcp_config_mismatch_aborts_before_data() {
    let c = cfg(Task::Linear, 1, None);
    let i = inputs(&c, 8, 4, 1);
    let other = TrainConfig {
        lr_pow2: 9,
        ..c.clone()
    };
    let [a, b, cc] = tcp_run([c.clone(), other, c], &i);
    for r in [a, b, cc] {
        match r {
            Err(Error::Transport {
                phase: Phase::Init,
                source: TransportError::ConfigMismatch(_),
            }) => {}
            other => panic!("expected config mismatch, got {:?}", other.map(|o| o.role)),
        }
    }
}

#[test]
fn inproc_config_mismatch_is_detected() {
    let ring = Ring::new(64).unwrap();
    let [mut a, mut b, mut c] = inproc::mesh(ring, Duration::ZERO, Duration::from_secs(5));
    let ok = [1u8; 32];
    let bad = [2u8; 32];
    let (ra, rb, rc) = std::thread::scope(|s| {
        let ha = s.spawn(|| a.handshake(&ok));
        let hb = s.spawn(|| b.handshake(&bad));
        let hc = s.spawn(|| c.handshake(&ok));
        (ha.join().unwrap(), hb.join().unwrap(), hc.join().unwrap())
    });
    assert!(ra.is_err() && rb.is_err() && rc.is_err());
    assert!(a.ledger().is_empty());
}

#[test]
fn one_linear_forward_sends_two_messages_to_c() {
    let c = cfg(Task::Linear, 1, None);
    let n = 12;
    let i = inputs(&c, n, 4, 2);
    let [a, b, _] = sim(&c, &i, 0);
    for (o, kind) in [(&a, Kind::FA), (&b, Kind::FB)] {
        let fwd: Vec<_> = o
            .transcript
            .iter()
            .filter(|e| e.iteration == 0 && e.receiver == Role::C && matches!(e.phase, Phase::Forward1 | Phase::Forward2))
            .collect();
        assert_eq!(fwd.len(), 1);
        assert_eq!((fwd[0].kind, fwd[0].rows as usize, fwd[0].cols), (kind, n, 1));
    }
}

#[test]
fn logistic_forward_has_two_extra_rounds() {
    let c = cfg(Task::Logistic, 1, None);
    let i = inputs(&c, 12, 4, 2);
    let [a, _, cc] = sim(&c, &i, 0);
    let to_c: Vec<Kind> = a
        .transcript
        .iter()
        .filter(|e| e.iteration == 0 && e.receiver == Role::C && matches!(e.phase, Phase::Forward1 | Phase::Forward2))
        .map(|e| e.kind)
        .collect();
    assert_eq!(to_c, vec![Kind::GammaFA, Kind::Rescaled, Kind::FA]);
    let from_c: Vec<Kind> = cc
        .transcript
        .iter()
        .filter(|e| e.iteration == 0 && e.receiver == Role::A && matches!(e.phase, Phase::Forward1 | Phase::Forward2))
        .map(|e| e.kind)
        .collect();
    assert_eq!(from_c, vec![Kind::ZShare, Kind::UShare, Kind::VShare]);
}

#[test]
fn transcripts_only_use_protocol_kinds_and_are_deterministic() {
    let c = cfg(Task::Logistic, 2, Some(5));
    let i = inputs(&c, 11, 4, 3);
    let r1 = sim(&c, &i, 0);
    let r2 = sim(&c, &i, 0);
    for (x, y) in r1.iter().zip(&r2) {
        assert_eq!(x.transcript_digest, y.transcript_digest);
        assert!(x.transcript.iter().all(|e| Kind::PROTOCOL.contains(&e.kind)));
    }
    let other = TrainConfig { seed: 6, ..c };
    let r3 = sim(&other, &i, 0);
    assert_ne!(r1[0].transcript_digest, r3[0].transcript_digest);
}

fn per_epoch(task: Task, n: usize, d: usize) -> u64 {
    let c = cfg(task, 2, None);
    let i = inputs(&c, n, d, 4);
    let outs = sim(&c, &i, 0);
    let mut ledger = outs[0].ledger.clone();
    ledger.merge(&outs[1].ledger);
    ledger.merge(&outs[2].ledger);
    let e = ledger.elements_per_epoch(outs[0].iters_per_epoch, 2);
    assert_eq!(e[0], e[1], "epochs differ");
    e[0]
}

#[test]
fn per_epoch_counts_grow_affinely() {
    for (n, d) in [(16usize, 4usize), (24, 6)] {
        let base = per_epoch(Task::Linear, n, d);
        let n_coef = (per_epoch(Task::Linear, 2 * n, d) - base) / n as u64;
        let d_coef = (per_epoch(Task::Linear, n, 2 * d) - base) / d as u64;
        assert_eq!((per_epoch(Task::Linear, 2 * n, d) - base) % n as u64, 0);
        assert_eq!((n_coef, d_coef), (4, 3), "grid ({n}, {d})");
        assert_eq!(base, 4 * n as u64 + 3 * d as u64);
        let extra = per_epoch(Task::Logistic, n, d) - base;
        assert_eq!(extra, 10 * n as u64);
        assert_eq!(per_epoch(Task::Logistic, n, 2 * d) - per_epoch(Task::Linear, n, 2 * d), extra);
    }
}

#[test]
fn latency_changes_time_not_traffic() {
    let c = cfg(Task::Linear, 2, None);
    let i = inputs(&c, 10, 4, 5);
    let t0 = Instant::now();
    let fast = sim(&c, &i, 0);
    let fast_t = t0.elapsed();
    let t1 = Instant::now();
    let slow = sim(&c, &i, 20);
    let slow_t = t1.elapsed();
    for (f, s) in fast.iter().zip(&slow) {
        assert_eq!(f.ledger, s.ledger);
        assert_eq!(f.weights, s.weights);
    }
    // at least 2 hops per iteration plus 2 for init
    assert!(slow_t >= fast_t + Duration::from_millis(20 * 6), "{slow_t:?} vs {fast_t:?}");
}

#[test]
fn empty_ledger_before_training() {
    let ring = Ring::new(64).unwrap();
    let eps = inproc::mesh(ring, Duration::ZERO, Duration::from_secs(1));
    for e in &eps {
        assert!(e.ledger().is_empty());
        assert_eq!(e.ledger().total().elements, 0);
    }
}

#[test]
fn timeout_names_the_silent_peer() {
    let ring = Ring::new(64).unwrap();
    let [mut a, _b, _c] = inproc::mesh(ring, Duration::ZERO, Duration::from_millis(50));
    match a.recv(Role::C, Phase::Backward, Kind::SShare, 0) {
        Err(Error::Transport {
            source: TransportError::Timeout(Role::C),
            ..
        }) => {}
        other => panic!("{other:?}"),
    }
}

proptest! {
    #[test]
    fn frame_roundtrip(seed: u64, rows in 0usize..6, cols in 0usize..6, it: u32, kind in 0u8..16, phase in 0u8..6) {
        let ring = Ring::new(64).unwrap();
        let mut rng = SeededRng::new(seed);
        let m = RingMatrix::random(ring, rows, cols, &mut rng);
        let msg = ProtocolMessage::new(
            it,
            Phase::from_u8(phase).unwrap(),
            Role::A,
            Role::C,
            Kind::from_u8(kind).unwrap(),
            &m,
        );
        let mut buf = Vec::new();
        write_frame(&mut buf, &msg.encode()).unwrap();
        prop_assert_eq!(buf.len(), msg.wire_len());
        let frame = read_frame(&mut buf.as_slice()).unwrap();
        let back = ProtocolMessage::decode(&frame).unwrap();
        prop_assert_eq!(back.into_matrix(ring).unwrap(), m);
    }
}
