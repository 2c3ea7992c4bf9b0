use std::time::Instant;

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use vfl_core::data::{
    encode_features, encode_labels, plaintext_train, split_vertical, synth, synth_with, Activation, Dataset, ShadowTrainer,
    SynthOptions,
};
use vfl_core::linalg::RingMatrix;
use vfl_core::protocol::{simulate, LocalSession, MaskMode, SimOptions, Task, TrainConfig};
use vfl_core::ring::{FixedPointConfig, SeededRng};
use vfl_core::sharing::{beaver_mul, BeaverTriple, ShareMatrix};
use vfl_core::sigmoid::{sigmoid_approx, SigmoidCoeffs};

struct Encoded {
    xa: RingMatrix,
    xb: RingMatrix,
    y: RingMatrix,
}

fn encode(ds: &Dataset, cfg: &TrainConfig, d1: usize) -> Encoded {
    let p = split_vertical(ds, d1).unwrap();
    Encoded {
        xa: encode_features(&p.xa, cfg.fixed).unwrap(),
        xb: encode_features(&p.xb, cfg.fixed).unwrap(),
        y: encode_labels(&p.y, cfg.task, cfg.fixed).unwrap(),
    }
}

fn joined(wa: &RingMatrix, wb: &RingMatrix) -> Vec<u64> {
    wa.data().iter().chain(wb.data()).copied().collect()
}

fn session_weights(s: &LocalSession) -> Vec<u64> {
    let (wa0, _) = s.a.weight_shares();
    let (wa1, wb1) = s.b.weight_shares();
    let wb0 = s.a.weight_shares().1.unwrap();
    let wa = wa0.add(wa1.unwrap()).unwrap();
    let wb = wb0.add(wb1).unwrap();
    joined(&wa, &wb)
}

fn assert_shadow_equal(cfg: &TrainConfig, ds: &Dataset, d1: usize) -> (LocalSession, ShadowTrainer) {
    let e = encode(ds, cfg, d1);
    let mut session = LocalSession::new(cfg.clone(), e.xa.clone(), e.xb.clone(), e.y.clone()).unwrap();
    let mut shadow = ShadowTrainer::new(cfg.clone(), e.xa, e.xb, e.y).unwrap();
    for t in 0..session.total_iterations() {
        let trace = session.step().unwrap();
        let step = shadow.step().unwrap();
        assert_eq!(
            trace.s.sub(&trace.alpha_f).unwrap(),
            step.residual,
            "residual differs at iteration {t}"
        );
        let (wa, wb) = shadow.weights();
        assert_eq!(session_weights(&session), joined(wa, wb), "weights differ at iteration {t}");
    }
    (session, shadow)
}

#[test]
fn linear_protocol_equals_shadow_and_tracks_float() {
    let start = Instant::now();
    let cfg = TrainConfig {
        task: Task::Linear,
        epochs: 10,
        lr_pow2: 7,
        fixed: FixedPointConfig::new(64, 13).unwrap(),
        seed: 11,
        ..Default::default()
    };
    let ds = synth(256, 32, Task::Linear, 0.0, 5).unwrap();
    let (session, _) = assert_shadow_equal(&cfg, &ds, 16);
    let (wa, wb) = session.weights().unwrap();
    let got: Vec<f64> = wa.decode(cfg.fixed).into_iter().chain(wb.decode(cfg.fixed)).collect();
    let float = plaintext_train(&ds.x, &ds.y, &cfg, &Activation::Exact).unwrap();
    let worst = got
        .iter()
        .zip(&float.weights)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= (-9f64).exp2(), "max |dw| = {worst}");
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn logistic_protocol_equals_shadow() {
    let cfg = TrainConfig {
        task: Task::Logistic,
        epochs: 3,
        lr_pow2: 6,
        batch_size: Some(24),
        fixed: FixedPointConfig::new(64, 10).unwrap(),
        coef_frac_bits: 14,
        seed: 3,
        ..Default::default()
    };
    let ds = synth(100, 6, Task::Logistic, 0.0, 9).unwrap();
    assert_shadow_equal(&cfg, &ds, 2);
}

#[test]
fn minibatch_linear_equals_shadow() {
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: Some(7),
        lr_pow2: 5,
        seed: 1,
        ..Default::default()
    };
    let ds = synth(30, 5, Task::Linear, 0.05, 2).unwrap();
    assert_shadow_equal(&cfg, &ds, 3);
}

#[test]
fn threaded_runner_matches_local_session() {
    for task in [Task::Linear, Task::Logistic] {
        let cfg = TrainConfig {
            task,
            epochs: 2,
            batch_size: Some(16),
            lr_pow2: 6,
            fixed: FixedPointConfig::new(64, 10).unwrap(),
            coef_frac_bits: 14,
            seed: 21,
            ..Default::default()
        };
        let ds = synth(40, 6, task, 0.0, 4).unwrap();
        let e = encode(&ds, &cfg, 3);
        let mut session = LocalSession::new(cfg.clone(), e.xa.clone(), e.xb.clone(), e.y.clone()).unwrap();
        session.run().unwrap();
        let (wa, wb) = session.weights().unwrap();
        let [a, b, c] = simulate(&cfg, e.xa, e.xb, e.y, &SimOptions::default()).unwrap();
        assert_eq!(a.weights.unwrap(), wa);
        assert_eq!(b.weights.unwrap(), wb);
        assert!(c.weights.is_none());
        assert_eq!(a.iteration_times.len(), session.total_iterations());
    }
}

/// Integer mode, no truncation anywhere: masks must cancel exactly.
#[test]
fn masks_cancel_exactly_without_truncation() {
    let cfg = TrainConfig {
        epochs: 3,
        lr_pow2: 0,
        fixed: FixedPointConfig::new(64, 0).unwrap(),
        seed: 8,
        ..Default::default()
    };
    let mut rng = SeededRng::new(1);
    let ring = cfg.fixed.ring();
    let xa = RingMatrix::from_fn(ring, 12, 3, |_, _| ring.from_signed(rng.below(7) as i64 - 3));
    let xb = RingMatrix::from_fn(ring, 12, 2, |_, _| ring.from_signed(rng.below(7) as i64 - 3));
    let y = RingMatrix::from_fn(ring, 12, 1, |_, _| ring.from_signed(rng.below(21) as i64 - 10));
    let mut results = Vec::new();
    for mask_seed in 0..5 {
        let cfg = TrainConfig {
            mask_seed: Some(1000 + mask_seed),
            ..cfg.clone()
        };
        let mut s = LocalSession::new(cfg, xa.clone(), xb.clone(), y.clone()).unwrap();
        s.run().unwrap();
        let (wa, wb) = s.weights().unwrap();
        results.push(joined(&wa, &wb));
    }
    let mut zero = LocalSession::new(
        TrainConfig {
            mask_mode: MaskMode::Zero,
            ..cfg.clone()
        },
        xa,
        xb,
        y,
    )
    .unwrap();
    zero.run().unwrap();
    let (wa, wb) = zero.weights().unwrap();
    results.push(joined(&wa, &wb));
    assert!(results.windows(2).all(|w| w[0] == w[1]));
}

/// With truncation, re-randomized masks move each weight by at most two
/// ulps per epoch.
#[test]
fn mask_drift_is_bounded_with_truncation() {
    let epochs = 5;
    let base = TrainConfig {
        epochs,
        lr_pow2: 6,
        seed: 4,
        ..Default::default()
    };
    let ds = synth(64, 8, Task::Linear, 0.1, 3).unwrap();
    let e = encode(&ds, &base, 4);
    let ring = base.fixed.ring();
    let run = |mask_seed: u64| {
        let cfg = TrainConfig {
            mask_seed: Some(mask_seed),
            ..base.clone()
        };
        let mut s = LocalSession::new(cfg, e.xa.clone(), e.xb.clone(), e.y.clone()).unwrap();
        s.run().unwrap();
        let (wa, wb) = s.weights().unwrap();
        joined(&wa, &wb)
    };
    let reference = run(0);
    for seed in 1..5 {
        for (a, b) in run(seed).iter().zip(&reference) {
            let drift = ring.to_signed(ring.sub(*a, *b)).unsigned_abs();
            assert!(drift <= 2 * epochs as u64, "drift {drift} ulps");
        }
    }
}

/// Classic two-party pipeline: every product of shared operands is done with
/// a dealt Beaver triple. Returns the reconstructed `X_a^T E` and `X_b^T E`.
fn beaver_gradients(
    xa: (&RingMatrix, &RingMatrix),
    xb: (&RingMatrix, &RingMatrix),
    e: (&RingMatrix, &RingMatrix),
    rng: &mut SeededRng,
) -> (RingMatrix, RingMatrix) {
    let ring = e.0.ring();
    let s = |i, m: &RingMatrix| ShareMatrix::new(i, m.clone());
    let mul = |x: (&RingMatrix, &RingMatrix), rng: &mut SeededRng| {
        let xt = (s(0, &x.0.transpose()), s(1, &x.1.transpose()));
        let et = (s(0, e.0), s(1, e.1));
        let triple = BeaverTriple::deal(ring, xt.0.payload.rows(), xt.0.payload.cols(), 1, rng);
        let (z0, z1) = beaver_mul((&xt.0, &xt.1), (&et.0, &et.1), &triple).unwrap();
        z0.payload.add(&z1.payload).unwrap()
    };
    (mul(xa, rng), mul(xb, rng))
}

fn beaver_case(task: Task, seed: u64) {
    let cfg = TrainConfig {
        task,
        epochs: 1,
        fixed: FixedPointConfig::new(64, 10).unwrap(),
        coef_frac_bits: 14,
        seed,
        ..Default::default()
    };
    let mut rng = SeededRng::new(seed);
    let n = 2 + rng.below(6);
    let d1 = 1 + rng.below(4);
    let d2 = 1 + rng.below(4);
    let ds = synth_with(&SynthOptions::new(n, d1 + d2, task, 0.0, seed)).unwrap();
    let e = encode(&ds, &cfg, d1);
    let w: Vec<f64> = (0..d1 + d2).map(|_| rng.range_f64(-0.5, 0.5)).collect();
    let wa = RingMatrix::encode(cfg.fixed, d1, 1, &w[..d1]).unwrap();
    let wb = RingMatrix::encode(cfg.fixed, d2, 1, &w[d1..]).unwrap();
    let mut session =
        LocalSession::with_weights(cfg.clone(), e.xa.clone(), e.xb.clone(), e.y, wa.clone(), wb.clone()).unwrap();

    // Shares as the protocol holds them.
    let inv = session.c.inventory();
    let get = |name: &str| inv.iter().find(|(k, _)| k.ends_with(name)).unwrap().1.clone();
    let g0i = match task {
        Task::Linear => 1,
        Task::Logistic => session.a.schedule().gamma0_inv(),
    };
    let xa0 = get("xa_share0").scalar_mul(g0i);
    let xb1 = get("xb_share1").scalar_mul(g0i);
    let xa1 = e.xa.sub(&xa0).unwrap();
    let xb0 = e.xb.sub(&xb1).unwrap();

    // Forward products through triples must give the same linear predictor
    // C aggregates (checked on the linear task where it is visible).
    if task == Task::Linear {
        let (wa0, wb0) = session.a.weight_shares();
        let (wa1, wb1) = session.b.weight_shares();
        let mut prod = |x0: &RingMatrix, x1: &RingMatrix, w0: &RingMatrix, w1: &RingMatrix| {
            let triple = BeaverTriple::deal(x0.ring(), x0.rows(), x0.cols(), 1, &mut rng);
            let (z0, z1) = beaver_mul(
                (&ShareMatrix::new(0, x0.clone()), &ShareMatrix::new(1, x1.clone())),
                (&ShareMatrix::new(0, w0.clone()), &ShareMatrix::new(1, w1.clone())),
                &triple,
            )
            .unwrap();
            z0.payload.add(&z1.payload).unwrap()
        };
        let xw = prod(&xa0, &xa1, wa0, wa1.unwrap()).add(&prod(&xb0, &xb1, wb0.unwrap(), wb1)).unwrap();
        let trace_s = session.forward().unwrap();
        let y = encode(&ds, &cfg, d1).y;
        let alpha = session.a.schedule().alpha(0, n);
        let expect = xw.sub(&y).unwrap().add(&alpha).unwrap().floor_shift(cfg.frac_bits());
        assert_eq!(trace_s, expect, "forward, seed {seed}");
        session = LocalSession::with_weights(cfg.clone(), e.xa.clone(), e.xb.clone(), encode(&ds, &cfg, d1).y, wa, wb).unwrap();
    }

    let trace = session.step().unwrap();
    let (s0, s1) = {
        let mut split = vfl_core::protocol::masks::split_rng(&cfg, 0);
        let skip = if task == Task::Logistic { 3 } else { 0 };
        for _ in 0..skip {
            RingMatrix::random(trace.s.ring(), n, 1, &mut split);
        }
        let s0 = RingMatrix::random(trace.s.ring(), n, 1, &mut split);
        let s1 = trace.s.sub(&s0).unwrap();
        (s0, s1)
    };
    let e0 = s0.sub(&trace.alpha_f).unwrap();
    let (ga, gb) = beaver_gradients((&xa0, &xa1), (&xb0, &xb1), (&e0, &s1), &mut rng);
    assert_eq!(trace.grad0.ga.add(&trace.grad1.ga).unwrap(), ga, "g_a, seed {seed}");
    assert_eq!(trace.grad0.gb.add(&trace.grad1.gb).unwrap(), gb, "g_b, seed {seed}");
}

#[test]
fn triple_free_gradients_equal_beaver_reference() {
    for seed in 0..100 {
        let task = if seed % 2 == 0 { Task::Linear } else { Task::Logistic };
        beaver_case(task, seed);
    }
}

fn chi_square_uniform_bytes(values: &[u64]) -> (f64, f64) {
    let mut counts = [0u64; 256];
    for v in values {
        counts[(v & 0xff) as usize] += 1;
    }
    let expected = values.len() as f64 / 256.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new(255.0).unwrap().inverse_cdf(0.99);
    (stat, critical)
}

#[test]
fn coordinator_view_is_uniform() {
    for task in [Task::Linear, Task::Logistic] {
        // Structured, low-entropy data so that any leak would show.
        let cfg = TrainConfig {
            task,
            epochs: 40,
            batch_size: Some(64),
            lr_pow2: 8,
            fixed: FixedPointConfig::new(64, 10).unwrap(),
            coef_frac_bits: 14,
            seed: 17,
            ..Default::default()
        };
        let ds = synth(256, 64, task, 0.0, 1).unwrap();
        let e = encode(&ds, &cfg, 32);
        let opts = SimOptions {
            record_view: true,
            ..Default::default()
        };
        let [_, _, c] = simulate(&cfg, e.xa, e.xb, e.y, &opts).unwrap();
        let view = c.view.unwrap();
        for (name, vals) in [("F_A", &view.fa), ("F_B", &view.fb), ("re-share", &view.reshare_deltas)] {
            let (stat, critical) = chi_square_uniform_bytes(vals);
            assert!(vals.len() >= 10_000, "{name}: only {} samples", vals.len());
            assert!(stat < critical, "{task} {name}: chi2 {stat} >= {critical}");
        }
    }
}

#[test]
fn coordinator_state_holds_no_masks() {
    for task in [Task::Linear, Task::Logistic] {
        let cfg = TrainConfig {
            task,
            epochs: 2,
            fixed: FixedPointConfig::new(64, 10).unwrap(),
            coef_frac_bits: 14,
            seed: 2,
            ..Default::default()
        };
        let ds = synth(16, 4, task, 0.0, 1).unwrap();
        let e = encode(&ds, &cfg, 2);
        let mut s = LocalSession::new(cfg, e.xa, e.xb, e.y).unwrap();
        let masks = s.a.schedule().all_values();
        assert!(masks.len() > 30);
        let check = |s: &LocalSession| {
            for (name, m) in s.c.inventory() {
                for v in m.data() {
                    assert!(!masks.contains(v), "{name} holds a mask value");
                }
            }
        };
        check(&s);
        s.forward().unwrap();
        check(&s);
        s.run().unwrap();
        check(&s);
    }
}

#[test]
fn secure_activation_matches_real_polynomial() {
    let coeffs = SigmoidCoeffs::for_bound(8.0).unwrap();
    let cfg = TrainConfig {
        task: Task::Logistic,
        epochs: 1,
        fixed: FixedPointConfig::new(64, 12).unwrap(),
        coef_frac_bits: 16,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for seed in 0..40 {
        let cfg = TrainConfig { seed, ..cfg.clone() };
        let mut rng = SeededRng::new(seed);
        let (n, d1, d2) = (32, 3, 3);
        let x: Vec<f64> = (0..n * (d1 + d2)).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let w: Vec<f64> = (0..d1 + d2).map(|_| rng.range_f64(-0.5, 0.5)).collect();
        let xm = vfl_core::data::Matrix::from_vec(n, d1 + d2, x).unwrap();
        let mut ds = Dataset::new(xm, vec![0.0; n]).unwrap();
        ds.y = (0..n).map(|i| (i % 2) as f64).collect();
        let e = encode(&ds, &cfg, d1);
        let wa = RingMatrix::encode(cfg.fixed, d1, 1, &w[..d1]).unwrap();
        let wb = RingMatrix::encode(cfg.fixed, d2, 1, &w[d1..]).unwrap();
        // Real predictor on the encoded operands, as the polynomial input.
        let xa = e.xa.decode(cfg.fixed);
        let xb = e.xb.decode(cfg.fixed);
        let (wad, wbd) = (wa.decode(cfg.fixed), wb.decode(cfg.fixed));
        let mut s = LocalSession::with_weights(cfg.clone(), e.xa.clone(), e.xb.clone(), e.y.clone(), wa, wb).unwrap();
        let masked = s.forward().unwrap();
        let yhat = masked.sub(&s.a.alpha_f(0)).unwrap().add(&e.y).unwrap().decode(cfg.fixed);
        for i in 0..n {
            let z: f64 = (0..d1).map(|j| xa[i * d1 + j] * wad[j]).sum::<f64>()
                + (0..d2).map(|j| xb[i * d2 + j] * wbd[j]).sum::<f64>();
            assert!(z.abs() <= 3.0);
            worst = worst.max((yhat[i] - sigmoid_approx(&coeffs, z)).abs());
        }
    }
    assert!(worst <= (-10f64).exp2(), "worst activation error {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shadow_equality_holds_for_random_configs(
        seed in 0u64..1000,
        n in 4usize..40,
        d1 in 1usize..4,
        d2 in 1usize..4,
        batch in 1usize..20,
        logistic in any::<bool>(),
    ) {
        let task = if logistic { Task::Logistic } else { Task::Linear };
        let cfg = TrainConfig {
            task,
            epochs: 2,
            batch_size: Some(batch),
            lr_pow2: 6,
            fixed: FixedPointConfig::new(64, 10).unwrap(),
            coef_frac_bits: 14,
            seed,
            ..Default::default()
        };
        let ds = synth_with(&SynthOptions::new(n, d1 + d2, task, 0.0, seed)).unwrap();
        assert_shadow_equal(&cfg, &ds, d1);
    }
}
