//! Float gradient descent with the same batching and step rule as the
//! protocol. This is the accuracy yardstick, not the exact-equality oracle.

use crate::error::{Error, Result};
use crate::protocol::{Task, TrainConfig};
use crate::sigmoid::{sigmoid_exact, SigmoidCoeffs};

use super::dataset::Matrix;

#[derive(Debug, Clone, Copy)]
pub enum Activation {
    Exact,
    Approx(SigmoidCoeffs),
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Exact => sigmoid_exact(z),
            Activation::Approx(c) => c.eval(z),
        }
    }
}

/// `Xw` for linear, `sigma(Xw)` for logistic.
pub fn predict(x: &Matrix, w: &[f64], task: Task, act: &Activation) -> Vec<f64> {
    let z = x.mul_vec(w);
    match task {
        Task::Linear => z,
        Task::Logistic => z.into_iter().map(|v| act.apply(v)).collect(),
    }
}

/// `1/2 ||Xw - Y||^2` for linear; summed cross-entropy with the exact
/// sigmoid for logistic.
pub fn loss(x: &Matrix, y: &[f64], w: &[f64], task: Task) -> f64 {
    let z = x.mul_vec(w);
    match task {
        Task::Linear => 0.5 * z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
        // log(1 + e^z) - y z, computed without overflow
        Task::Logistic => z
            .iter()
            .zip(y)
            .map(|(&v, &t)| v.max(0.0) + (-v.abs()).exp().ln_1p() - t * v)
            .sum(),
    }
}

/// `X^T(Y_hat - Y)`
pub fn gradient(x: &Matrix, y: &[f64], w: &[f64], task: Task, act: &Activation) -> Vec<f64> {
    let r: Vec<f64> = predict(x, w, task, act).iter().zip(y).map(|(p, t)| p - t).collect();
    x.t_mul_vec(&r)
}

/// Fraction of rows where `Xw > 0` agrees with `y = 1`.
pub fn accuracy(x: &Matrix, y: &[f64], w: &[f64]) -> f64 {
    let z = x.mul_vec(w);
    let hits = z.iter().zip(y).filter(|(v, t)| (**v > 0.0) == (**t > 0.5)).count();
    hits as f64 / y.len() as f64
}

#[derive(Debug, Clone)]
pub struct FloatRun {
    pub weights: Vec<f64>,
    /// Full-data loss after each epoch.
    pub losses: Vec<f64>,
}

/// Mini-batch GD from zero weights, `w -= 2^-k * X_B^T(Y_hat_B - Y_B)`.
pub fn plaintext_train(x: &Matrix, y: &[f64], cfg: &TrainConfig, act: &Activation) -> Result<FloatRun> {
    let plan = cfg.plan(x.rows);
    let eta = (-(cfg.lr_pow2 as f64)).exp2();
    let mut w = vec![0.0; x.cols];
    let initial = loss(x, y, &w, cfg.task);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for t in 0..plan.total_iterations() {
        let (s, e) = plan.batch(t);
        let idx: Vec<usize> = (s..e).collect();
        let g = gradient(&x.select_rows(&idx), &y[s..e], &w, cfg.task, act);
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= eta * gi;
        }
        if (t + 1) % plan.iters_per_epoch() == 0 {
            let l = loss(x, y, &w, cfg.task);
            let epoch = (t + 1) / plan.iters_per_epoch();
            if !l.is_finite() || l > 1e12 * initial.max(1.0) {
                return Err(Error::Diverged(epoch));
            }
            losses.push(l);
        }
    }
    Ok(FloatRun { weights: w, losses })
}
