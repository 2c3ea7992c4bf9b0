//! Step-level checks that drive the three roles directly.

use vfl_core::data::{accuracy, encode_labels, Matrix};
use vfl_core::linalg::RingMatrix;
use vfl_core::protocol::{
    simulate, GradientShares, LocalSession, MaskMode, PartyA, PartyB, SimOptions, Task, TrainConfig,
};
use vfl_core::ring::{FixedPointConfig, SeededRng};
use vfl_core::sigmoid::{sigmoid_approx, SigmoidCoeffs};

/// A small random instance with plaintext copies kept for the oracles.
struct Instance {
    x: Matrix,
    w: Vec<f64>,
    y: Vec<f64>,
    d1: usize,
    xa: RingMatrix,
    xb: RingMatrix,
    wa: RingMatrix,
    wb: RingMatrix,
    y_enc: RingMatrix,
}

fn instance(cfg: &TrainConfig, n: usize, d1: usize, d2: usize, seed: u64) -> Instance {
    let d = d1 + d2;
    let mut rng = SeededRng::new(seed);
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.range_f64(-0.5, 0.5)).collect()).unwrap();
    let w: Vec<f64> = (0..d).map(|_| rng.range_f64(-0.5, 0.5)).collect();
    let y: Vec<f64> = match cfg.task {
        Task::Linear => (0..n).map(|_| rng.range_f64(-1.0, 1.0)).collect(),
        Task::Logistic => (0..n).map(|i| (i % 2) as f64).collect(),
    };
    let enc = |m: &Matrix| RingMatrix::encode(cfg.fixed, m.rows, m.cols, &m.data).unwrap();
    let col = |v: &[f64]| RingMatrix::encode(cfg.fixed, v.len(), 1, v).unwrap();
    Instance {
        xa: enc(&x.col_range(0, d1)),
        xb: enc(&x.col_range(d1, d)),
        wa: col(&w[..d1]),
        wb: col(&w[d1..]),
        y_enc: encode_labels(&y, cfg.task, cfg.fixed).unwrap(),
        x,
        w,
        y,
        d1,
    }
}

impl Instance {
    fn session(&self, cfg: &TrainConfig) -> LocalSession {
        LocalSession::with_weights(
            cfg.clone(),
            self.xa.clone(),
            self.xb.clone(),
            self.y_enc.clone(),
            self.wa.clone(),
            self.wb.clone(),
        )
        .unwrap()
    }

    /// `X_a w_a + X_b w_b` in the ring, scale `2^{2f}`.
    fn xw_ring(&self) -> RingMatrix {
        self.xa
            .mat_mul(&self.wa)
            .unwrap()
            .add(&self.xb.mat_mul(&self.wb).unwrap())
            .unwrap()
    }

    fn xw_float(&self) -> Vec<f64> {
        self.x.mul_vec(&self.w)
    }
}

fn cfg(task: Task, mode: MaskMode) -> TrainConfig {
    TrainConfig {
        task,
        epochs: 1,
        lr_pow2: 4,
        fixed: FixedPointConfig::new(64, 13).unwrap(),
        coef_frac_bits: 16,
        seed: 21,
        mask_mode: mode,
        ..Default::default()
    }
}

fn named<'a>(s: &'a LocalSession, name: &str) -> &'a RingMatrix {
    s.c.inventory().into_iter().find(|(n, _)| *n == name).unwrap().1
}

/// The part of the linear forward sum C adds itself.
fn coordinator_term(s: &LocalSession) -> RingMatrix {
    named(s, "xa_share0")
        .mat_mul(named(s, "wa_share1"))
        .unwrap()
        .add(&named(s, "xb_share1").mat_mul(named(s, "wb_share0")).unwrap())
        .unwrap()
}

fn assert_close(got: &[f64], want: &[f64], tol: f64, what: &str) {
    assert_eq!(got.len(), want.len());
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= tol, "{what}[{i}]: {g} vs {w} (tol {tol})");
    }
}

#[test]
fn schedules_agree_and_gammas_are_odd() {
    let c = TrainConfig {
        epochs: 3,
        batch_size: Some(4),
        ..cfg(Task::Logistic, MaskMode::Random)
    };
    let inst = instance(&c, 10, 3, 2, 1);
    let s = inst.session(&c);
    let (sa, sb) = (s.a.schedule(), s.b.schedule());
    assert_eq!(sa.all_values(), sb.all_values());
    assert_eq!(sa.gamma0() & 1, 1);
    for t in 0..s.total_iterations() {
        assert_eq!(sa.gamma(t) & 1, 1, "gamma at {t}");
        assert_eq!(sa.gamma(t), sb.gamma(t));
        assert_eq!(sa.alpha(t, 4), sb.alpha(t, 4));
        assert_eq!((sa.beta0(t), sa.beta1(t)), (sb.beta0(t), sb.beta1(t)));
    }
}

#[test]
fn init_shares_reconstruct() {
    for task in [Task::Linear, Task::Logistic] {
        let c = cfg(task, MaskMode::Random);
        let inst = instance(&c, 6, 2, 3, 2);
        let mut a = PartyA::new(c.clone(), inst.xa.clone()).unwrap();
        let mut b = PartyB::new(c.clone(), inst.xb.clone(), inst.y_enc.clone()).unwrap();
        let ai = a.init_outgoing();
        let bi = b.init_outgoing();
        let (xa1, wa1, xb0, wb0) = (ai.xa1.clone(), ai.wa1.clone(), bi.xb0.clone(), bi.wb0.clone());
        b.init_incoming(ai.masks, ai.xa1, ai.wa1).unwrap();
        a.init_incoming(bi.masks, bi.xb0, bi.wb0).unwrap();
        let ring = c.fixed.ring();
        let unscale = match task {
            Task::Linear => 1,
            Task::Logistic => ring.inverse(a.schedule().gamma0()).unwrap(),
        };
        let xa0 = a.coordinator_data().scalar_mul(unscale);
        let xb1 = b.coordinator_data().scalar_mul(unscale);
        assert_eq!(xa0.add(&xa1).unwrap(), inst.xa, "{task:?}");
        assert_eq!(xb0.add(&xb1).unwrap(), inst.xb, "{task:?}");
        // zero secrets behind uniform shares
        let zeros_a = RingMatrix::zeros(ring, 2, 1);
        assert_eq!(a.weight_shares().0.add(&wa1).unwrap(), zeros_a);
        assert_eq!(b.weight_shares().1.add(&wb0).unwrap(), RingMatrix::zeros(ring, 3, 1));
        assert_ne!(wa1, zeros_a);
    }
}

#[test]
fn zero_epochs_reconstruct_zero_weights() {
    let c = TrainConfig {
        epochs: 0,
        ..cfg(Task::Linear, MaskMode::Random)
    };
    let inst = instance(&c, 5, 2, 2, 3);
    let out = simulate(&c, inst.xa, inst.xb, inst.y_enc, &SimOptions::default()).unwrap();
    let ring = c.fixed.ring();
    assert_eq!(out[0].weights.as_ref().unwrap(), &RingMatrix::zeros(ring, 2, 1));
    assert_eq!(out[1].weights.as_ref().unwrap(), &RingMatrix::zeros(ring, 2, 1));
    assert!(out[2].weights.is_none());
}

#[test]
fn linear_zero_masks_zero_weights_gives_minus_y() {
    let c = cfg(Task::Linear, MaskMode::Zero);
    let inst = instance(&c, 8, 2, 3, 4);
    let mut s = LocalSession::new(c.clone(), inst.xa.clone(), inst.xb.clone(), inst.y_enc.clone()).unwrap();
    let got = s.forward().unwrap().decode(c.fixed);
    let want: Vec<f64> = inst.y.iter().map(|v| -v).collect();
    assert_close(&got, &want, (-(c.frac_bits() as f64)).exp2(), "S");
}

#[test]
fn linear_zero_masks_tracks_plaintext_residual() {
    let c = cfg(Task::Linear, MaskMode::Zero);
    let inst = instance(&c, 12, 3, 4, 5);
    let got = inst.session(&c).forward().unwrap().decode(c.fixed);
    let want: Vec<f64> = inst.xw_float().iter().zip(&inst.y).map(|(z, y)| z - y).collect();
    assert_close(&got, &want, (2.0 - c.frac_bits() as f64).exp2(), "S");
}

#[test]
fn linear_mask_is_removed_exactly() {
    let c = cfg(Task::Linear, MaskMode::Random);
    let f = c.frac_bits();
    let inst = instance(&c, 9, 3, 2, 6);
    let mut s = inst.session(&c);
    let fa = s.a.forward_linear(0);
    let fb = s.b.forward_linear(0);
    let alpha = s.a.schedule().alpha(0, 9);
    // before C's rescale, S - alpha is the residual at scale 2^{2f}, ring-exact
    let raw = fa.add(&fb).unwrap().add(&coordinator_term(&s)).unwrap();
    let residual = inst.xw_ring().sub(&inst.y_enc).unwrap();
    assert_eq!(raw.sub(&alpha).unwrap(), residual);
    // after it, stripping floor(alpha) leaves the residual up to the one carry bit
    s.c.aggregate_linear(0, &fa, &fb).unwrap();
    let diff = s
        .c
        .masked_sum()
        .unwrap()
        .sub(&s.a.alpha_f(0))
        .unwrap()
        .sub(&residual.floor_shift(f))
        .unwrap();
    assert!(diff.data().iter().all(|&v| v <= 1), "{:?}", diff.data());
    assert!(alpha.data().iter().any(|&v| v != 0));
}

#[test]
fn logistic_zero_masks_zero_weights_gives_half_minus_y() {
    let c = cfg(Task::Logistic, MaskMode::Zero);
    let inst = instance(&c, 8, 2, 2, 7);
    let mut s = LocalSession::new(c.clone(), inst.xa.clone(), inst.xb.clone(), inst.y_enc.clone()).unwrap();
    let got = s.forward().unwrap().decode(c.fixed);
    let want: Vec<f64> = inst.y.iter().map(|v| 0.5 - v).collect();
    assert_close(&got, &want, (1.0 - c.frac_bits() as f64).exp2(), "S");
}

#[test]
fn logistic_zero_masks_tracks_polynomial() {
    let c = cfg(Task::Logistic, MaskMode::Zero);
    let coeffs = SigmoidCoeffs::for_bound(c.sigmoid_bound).unwrap();
    for seed in 0..5 {
        let inst = instance(&c, 16, 3, 3, 100 + seed);
        let got = inst.session(&c).forward().unwrap().decode(c.fixed);
        let want: Vec<f64> = inst
            .xw_float()
            .iter()
            .zip(&inst.y)
            .map(|(&z, y)| sigmoid_approx(&coeffs, z) - y)
            .collect();
        assert_close(&got, &want, (3.0 - c.frac_bits() as f64).exp2(), "S");
    }
}

#[test]
fn logistic_pre_activation_unmasks_with_gamma_inverse() {
    let c = cfg(Task::Logistic, MaskMode::Random);
    let inst = instance(&c, 10, 2, 3, 8);
    let mut s = inst.session(&c);
    let gfa = s.a.forward_gamma(0);
    let gfb = s.b.forward_gamma(0);
    let (z0, z1) = s.c.gather(0, &gfa, &gfb).unwrap();
    let ring = c.fixed.ring();
    let g0 = s.a.schedule().gamma0();
    assert_ne!(g0, 1);
    let z = z0.add(&z1).unwrap();
    assert_ne!(z, inst.xw_ring());
    let unmasked = z.scalar_mul(ring.inverse(g0).unwrap());
    assert_eq!(unmasked, inst.xw_ring());
    let decoded = unmasked.decode(c.fixed.with_frac_bits(2 * c.frac_bits()));
    assert_close(&decoded, &inst.xw_float(), (-(c.frac_bits() as f64)).exp2(), "Xw");
}

/// Drives C to `S = alpha` (zero residual) and runs the backward pass.
fn zero_residual_gradients(task: Task) -> (GradientShares, GradientShares, RingMatrix) {
    let c = cfg(task, MaskMode::Random);
    let inst = instance(&c, 7, 3, 2, 9);
    let mut s = inst.session(&c);
    let ring = c.fixed.ring();
    let alpha_f = s.a.alpha_f(0);
    let fb = RingMatrix::zeros(ring, 7, 1);
    match task {
        Task::Linear => {
            let fa = alpha_f.scalar_mul(1 << c.frac_bits()).sub(&coordinator_term(&s)).unwrap();
            s.c.aggregate_linear(0, &fa, &fb).unwrap();
        }
        Task::Logistic => {
            let half = 1u64 << (c.frac_bits() - 1);
            let fa = alpha_f.add_scalar(ring.neg(half));
            s.c.aggregate_logistic(0, &fa, &fb).unwrap();
        }
    }
    assert_eq!(s.c.masked_sum().unwrap(), &alpha_f);
    let (ma, mb) = s.c.backward(0).unwrap();
    let g0 = s.a.backward(0, &ma.s, &ma.h, &ma.r).unwrap();
    let g1 = s.b.backward(0, &mb.s, &mb.h, &mb.r).unwrap();
    (g0, g1, alpha_f)
}

#[test]
fn zero_residual_gives_zero_gradient() {
    for task in [Task::Linear, Task::Logistic] {
        let (g0, g1, _) = zero_residual_gradients(task);
        assert!(g0.ga.add(&g1.ga).unwrap().data().iter().all(|&v| v == 0), "{task:?}");
        assert!(g0.gb.add(&g1.gb).unwrap().data().iter().all(|&v| v == 0), "{task:?}");
        assert!(g0.ga.data().iter().any(|&v| v != 0), "shares should not be trivially zero");
    }
}

#[test]
fn gradients_equal_ring_exact_formula() {
    for task in [Task::Linear, Task::Logistic] {
        for seed in 0..4 {
            let c = TrainConfig {
                epochs: 2,
                ..cfg(task, MaskMode::Random)
            };
            let inst = instance(&c, 11, 2, 4, 30 + seed);
            let mut s = inst.session(&c);
            for _ in 0..2 {
                let tr = s.step().unwrap();
                let e = tr.s.sub(&tr.alpha_f).unwrap();
                let ga = tr.grad0.ga.add(&tr.grad1.ga).unwrap();
                let gb = tr.grad0.gb.add(&tr.grad1.gb).unwrap();
                assert_eq!(ga, inst.xa.transpose_mul(&e).unwrap(), "{task:?} seed {seed}");
                assert_eq!(gb, inst.xb.transpose_mul(&e).unwrap(), "{task:?} seed {seed}");
            }
        }
    }
}

#[test]
fn coordinator_r_cancels() {
    for task in [Task::Linear, Task::Logistic] {
        let c = cfg(task, MaskMode::Random);
        let ring = c.fixed.ring();
        let inst = instance(&c, 8, 3, 2, 10);
        let mut s = inst.session(&c);
        s.forward().unwrap();
        let (ma, mb) = s.c.backward(0).unwrap();
        let sum = |ma: &vfl_core::protocol::BackwardMsg, mb: &vfl_core::protocol::BackwardMsg| {
            let g0 = s.a.backward(0, &ma.s, &ma.h, &ma.r).unwrap();
            let g1 = s.b.backward(0, &mb.s, &mb.h, &mb.r).unwrap();
            (g0.ga.add(&g1.ga).unwrap(), g0.gb.add(&g1.gb).unwrap())
        };
        let base = sum(&ma, &mb);
        let mut rng = SeededRng::new(77);
        for _ in 0..5 {
            let d0 = RingMatrix::random(ring, 3, 1, &mut rng);
            let d1 = RingMatrix::random(ring, 2, 1, &mut rng);
            let (mut a2, mut b2) = (ma.clone(), mb.clone());
            a2.r = a2.r.add(&d0).unwrap();
            b2.h = b2.h.add(&d0).unwrap();
            b2.r = b2.r.add(&d1).unwrap();
            a2.h = a2.h.add(&d1).unwrap();
            assert_eq!(sum(&a2, &b2), base, "{task:?}");
        }
    }
}

fn logical_weights(s: &LocalSession) -> (RingMatrix, RingMatrix) {
    s.weights().unwrap()
}

#[test]
fn zero_gradient_update_keeps_weights_despite_beta() {
    let c = cfg(Task::Linear, MaskMode::Random);
    let ring = c.fixed.ring();
    let inst = instance(&c, 6, 2, 3, 11);
    let mut s = inst.session(&c);
    assert!(s.a.schedule().beta0(0).data().iter().any(|&v| v != 0));
    let before = logical_weights(&s);
    let zero = |index| GradientShares {
        index,
        ga: RingMatrix::zeros(ring, 2, 1),
        gb: RingMatrix::zeros(ring, 3, 1),
    };
    let shares_before = s.a.weight_shares().0.clone();
    s.a.update(0, &zero(0));
    s.b.update(0, &zero(1));
    assert_ne!(s.a.weight_shares().0, &shares_before);
    assert_eq!(logical_weights(&s), before);
    assert_eq!(before, (inst.wa.clone(), inst.wb.clone()));
}

#[test]
fn beta_does_not_change_the_update() {
    let ring = FixedPointConfig::new(64, 13).unwrap().ring();
    let mut rng = SeededRng::new(12);
    let g0 = GradientShares {
        index: 0,
        ga: RingMatrix::random(ring, 2, 1, &mut rng),
        gb: RingMatrix::random(ring, 3, 1, &mut rng),
    };
    let g1 = GradientShares {
        index: 1,
        ga: RingMatrix::random(ring, 2, 1, &mut rng),
        gb: RingMatrix::random(ring, 3, 1, &mut rng),
    };
    let mut results = Vec::new();
    for mask_seed in [1, 2, 3] {
        let c = TrainConfig {
            mask_seed: Some(mask_seed),
            ..cfg(Task::Linear, MaskMode::Random)
        };
        let inst = instance(&c, 6, 2, 3, 13);
        let mut s = inst.session(&c);
        s.a.update(0, &g0);
        s.b.update(0, &g1);
        results.push(logical_weights(&s));
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(results[0], results[2]);
}

#[test]
fn one_step_matches_hand_computation() {
    // one feature per party, three samples
    let c = TrainConfig {
        lr_pow2: 3,
        fixed: FixedPointConfig::new(64, 16).unwrap(),
        ..cfg(Task::Linear, MaskMode::Random)
    };
    let x = [[0.5, -1.0], [0.25, 0.75], [-0.5, 0.5]];
    let y = [1.0, -0.5, 0.25];
    let w = [0.5, -0.25];
    let enc = |v: &[f64]| RingMatrix::encode(c.fixed, v.len(), 1, v).unwrap();
    let xa = enc(&[x[0][0], x[1][0], x[2][0]]);
    let xb = enc(&[x[0][1], x[1][1], x[2][1]]);
    let y_enc = encode_labels(&y, Task::Linear, c.fixed).unwrap();
    let mut s = LocalSession::with_weights(c.clone(), xa, xb, y_enc, enc(&w[..1]), enc(&w[1..])).unwrap();
    s.step().unwrap();
    let (wa, wb) = s.weights().unwrap();
    // residuals: 0.5*0.5 + 0.25 - 1 = -0.5; 0.125 - 0.1875 + 0.5 = 0.4375; -0.25 - 0.125 - 0.25 = -0.625
    // g = X^T r = (-0.25 + 0.109375 + 0.3125, 0.5 + 0.328125 - 0.3125) = (0.171875, 0.515625)
    let want = [0.5 - 0.171875 / 8.0, -0.25 - 0.515625 / 8.0];
    let got = [wa.decode(c.fixed)[0], wb.decode(c.fixed)[0]];
    assert_close(&got, &want, 4.0 * (-16f64).exp2(), "w");
}

#[test]
fn reshare_restores_share_distribution() {
    for task in [Task::Linear, Task::Logistic] {
        let c = TrainConfig {
            epochs: 2,
            ..cfg(task, MaskMode::Random)
        };
        let inst = instance(&c, 8, 2, 2, 14);
        let mut s = inst.session(&c);
        for _ in 0..2 {
            s.step().unwrap();
            let (wa, wb) = logical_weights(&s);
            assert_eq!(named(&s, "wa_share1").add(s.a.weight_shares().0).unwrap(), wa);
            assert_eq!(named(&s, "wb_share0").add(s.b.weight_shares().1).unwrap(), wb);
        }
    }
}

#[test]
fn party_a_never_holds_w_b() {
    let c = TrainConfig {
        epochs: 3,
        ..cfg(Task::Linear, MaskMode::Random)
    };
    let inst = instance(&c, 8, 2, 3, 15);
    let mut s = inst.session(&c);
    s.run().unwrap();
    let (_, wb) = logical_weights(&s);
    let (wa0, wb0) = s.a.weight_shares();
    assert_ne!(wb0.unwrap(), &wb);
    assert_ne!(wa0.data(), wb.data());
}

#[test]
fn separable_toy_logistic_reaches_full_training_accuracy() {
    let c = TrainConfig {
        task: Task::Logistic,
        epochs: 30,
        lr_pow2: 5,
        fixed: FixedPointConfig::new(64, 10).unwrap(),
        coef_frac_bits: 14,
        seed: 3,
        ..Default::default()
    };
    // two well separated clusters around (1, 1) and (-1, -1)
    let n = 40;
    let mut rng = SeededRng::new(4);
    let mut data = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        data.push(sign * rng.range_f64(0.5, 1.5));
        data.push(sign * rng.range_f64(0.5, 1.5));
        y.push(if sign > 0.0 { 1.0 } else { 0.0 });
    }
    let x = Matrix::from_vec(n, 2, data).unwrap();
    let enc = |m: &Matrix| RingMatrix::encode(c.fixed, m.rows, m.cols, &m.data).unwrap();
    let out = simulate(
        &c,
        enc(&x.col_range(0, 1)),
        enc(&x.col_range(1, 2)),
        encode_labels(&y, c.task, c.fixed).unwrap(),
        &SimOptions::default(),
    )
    .unwrap();
    let w: Vec<f64> = [&out[0], &out[1]]
        .iter()
        .flat_map(|o| o.weights.as_ref().unwrap().decode(c.fixed))
        .collect();
    assert_eq!(accuracy(&x, &y, &w), 1.0, "weights {w:?}");
}

#[test]
fn synthetic_instance_helper_is_consistent() {
    // guard for the helper: encoded blocks decode back to the float matrix
    let c = cfg(Task::Linear, MaskMode::Random);
    let inst = instance(&c, 4, 2, 2, 16);
    let back = inst.xa.decode(c.fixed);
    for (i, v) in back.iter().enumerate() {
        assert!((v - inst.x.get(i / inst.d1, i % inst.d1)).abs() <= (-14f64).exp2());
    }
}
