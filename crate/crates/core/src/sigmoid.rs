//! Odd degree-3 minimax approximation of the logistic function,
//! `sigma(x) ~ q0 x^3 + q1 x + q2` on `[-B, B]`.
//!
//! Antisymmetry (`sigma(-x) = 1 - sigma(x)`) pins `q2 = 1/2` and makes the
//! remainder odd, so the fit reduces to `{x, x^3}` on `(0, B]`, solved by
//! Remez exchange with three alternation points.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ring::{encode, FixedPointConfig, RingElement};

const MAX_ITERS: usize = 60;

/// Coefficients for `B = 8`, derived once and kept under version control.
pub const DEFAULT_ARTIFACT: &str = include_str!("../assets/sigmoid_b8.cfg");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidCoeffs {
    pub bound: f64,
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    /// Sup of `|approx - exact|` on `[-B, B]`.
    pub max_error: f64,
    /// Largest `B'` such that the approximation is increasing on `[-B', B']`.
    pub monotone_bound: f64,
}

pub fn sigmoid_exact(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_approx(c: &SigmoidCoeffs, x: f64) -> f64 {
    c.eval(x)
}

impl SigmoidCoeffs {
    pub fn eval(&self, x: f64) -> f64 {
        self.q0 * x * x * x + self.q1 * x + self.q2
    }

    fn odd_error(&self, x: f64) -> f64 {
        (sigmoid_exact(x) - 0.5) - (self.q0 * x * x * x + self.q1 * x)
    }

    /// Frozen coefficients for `B = 8`, or a fresh derivation for other bounds.
    pub fn for_bound(bound: f64) -> Result<Self> {
        let frozen = parse_artifact(DEFAULT_ARTIFACT)?;
        if (frozen.bound - bound).abs() < 1e-12 {
            Ok(frozen)
        } else {
            derive_coeffs(bound, 10_000)
        }
    }

    /// Fixed-point encodings at `frac_bits`.
    pub fn encoded(&self, cfg: FixedPointConfig) -> Result<(u64, u64, u64)> {
        Ok((
            encode(self.q0, cfg)?.value(),
            encode(self.q1, cfg)?.value(),
            encode(self.q2, cfg)?.value(),
        ))
    }

    /// Plaintext fixed-point evaluation of an input at scale `2^f`, returning
    /// scale `2^f`. Horner form with 40 coefficient bits keeps each product
    /// well inside a 64-bit ring.
    pub fn eval_fixed(&self, x: RingElement, cfg: FixedPointConfig) -> Result<RingElement> {
        let ring = cfg.ring();
        let f = cfg.frac_bits;
        let cb = 40u32.min(cfg.ring_bits.saturating_sub(f + 12));
        let ccfg = cfg.with_frac_bits(cb);
        let (q0, q1, _) = self.encoded(ccfg)?;
        let x = x.value();
        let t = ring.floor_shift(ring.mul(q0, x), f);
        let t = ring.add(ring.floor_shift(ring.mul(t, x), f), q1);
        let t = ring.floor_shift(ring.mul(t, x), f);
        let half = encode(self.q2, ccfg)?.value();
        Ok(RingElement(ring.floor_shift(ring.add(t, half), cb - f)))
    }

    pub fn to_artifact(&self, frac_bits: u32) -> Result<String> {
        let cfg = FixedPointConfig::new(64, frac_bits)?;
        let (e0, e1, e2) = self.encoded(cfg)?;
        let r = cfg.ring();
        let mut s = String::new();
        writeln!(s, "# odd degree-3 minimax fit of the logistic function").unwrap();
        writeln!(s, "bound={:.17e}", self.bound).unwrap();
        writeln!(s, "q0={:.17e}", self.q0).unwrap();
        writeln!(s, "q1={:.17e}", self.q1).unwrap();
        writeln!(s, "q2={:.17e}", self.q2).unwrap();
        writeln!(s, "max_error={:.17e}", self.max_error).unwrap();
        writeln!(s, "monotone_bound={:.17e}", self.monotone_bound).unwrap();
        writeln!(s, "frac_bits={frac_bits}").unwrap();
        writeln!(s, "q0_fixed={}", r.to_signed(e0)).unwrap();
        writeln!(s, "q1_fixed={}", r.to_signed(e1)).unwrap();
        writeln!(s, "q2_fixed={}", r.to_signed(e2)).unwrap();
        Ok(s)
    }
}

pub fn parse_artifact(text: &str) -> Result<SigmoidCoeffs> {
    let get = |key: &str| -> Result<f64> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .ok_or_else(|| Error::config(key, "missing from coefficient artifact"))?
            .1
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::config(key, e.to_string()))
    };
    Ok(SigmoidCoeffs {
        bound: get("bound")?,
        q0: get("q0")?,
        q1: get("q1")?,
        q2: get("q2")?,
        max_error: get("max_error")?,
        monotone_bound: get("monotone_bound")?,
    })
}

fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> [f64; 3] {
    let mut a = [[0.0; 4]; 3];
    for i in 0..3 {
        a[i][..3].copy_from_slice(&m[i]);
        a[i][3] = rhs[i];
    }
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let k = a[row][col] / a[col][col];
                for c in col..4 {
                    a[row][c] -= k * a[col][c];
                }
            }
        }
    }
    [a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]]
}

/// Golden-section maximization of `|g|` on `[lo, hi]`.
fn refine_peak(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if g(m1).abs() < g(m2).abs() {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    (lo + hi) / 2.0
}

/// Remez exchange for the odd cubic on `[-bound, bound]`; `grid_size` is the
/// number of search points on `(0, bound]`.
pub fn derive_coeffs(bound: f64, grid_size: usize) -> Result<SigmoidCoeffs> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::config("bound", "must be positive and finite"));
    }
    let grid_size = grid_size.max(64);
    let grid: Vec<f64> = (1..=grid_size).map(|i| bound * i as f64 / grid_size as f64).collect();
    let target = |x: f64| sigmoid_exact(x) - 0.5;
    let mut pts = [bound / 3.0, 2.0 * bound / 3.0, bound];
    let mut coeffs = SigmoidCoeffs {
        bound,
        q0: 0.0,
        q1: 0.0,
        q2: 0.5,
        max_error: f64::INFINITY,
        monotone_bound: 0.0,
    };
    for _ in 0..MAX_ITERS {
        let m = [
            [pts[0], pts[0].powi(3), 1.0],
            [pts[1], pts[1].powi(3), -1.0],
            [pts[2], pts[2].powi(3), 1.0],
        ];
        let [q1, q0, level] = solve3(m, [target(pts[0]), target(pts[1]), target(pts[2])]);
        coeffs.q0 = q0;
        coeffs.q1 = q1;
        let err = |x: f64| coeffs.odd_error(x);

        // Local extrema of the error on the grid, including the right end.
        let vals: Vec<f64> = grid.iter().map(|&x| err(x)).collect();
        let mut ext: Vec<(f64, f64)> = Vec::new();
        for i in 0..vals.len() {
            let left = if i == 0 { 0.0 } else { vals[i - 1].abs() };
            let right = if i + 1 == vals.len() { f64::NEG_INFINITY } else { vals[i + 1].abs() };
            if vals[i].abs() >= left && vals[i].abs() >= right {
                let x = if i + 1 == vals.len() {
                    grid[i]
                } else {
                    let lo = if i == 0 { 0.0 } else { grid[i - 1] };
                    refine_peak(err, lo, grid[i + 1])
                };
                let e = err(x);
                match ext.last_mut() {
                    Some(last) if last.1.signum() == e.signum() => {
                        if e.abs() > last.1.abs() {
                            *last = (x, e);
                        }
                    }
                    _ => ext.push((x, e)),
                }
            }
        }
        if ext.len() < 3 {
            return Err(Error::NoConvergence(MAX_ITERS));
        }
        let (peak, _) = ext
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.abs().total_cmp(&b.1 .1.abs()))
            .unwrap();
        let start = peak.saturating_sub(2).min(ext.len() - 3);
        let window = &ext[start..start + 3];
        let max_err = ext.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
        pts = [window[0].0, window[1].0, window[2].0];
        coeffs.max_error = max_err;
        if (max_err - level.abs()) <= 1e-13 * max_err.max(1e-300) {
            coeffs.monotone_bound = if coeffs.q0 < 0.0 {
                (-coeffs.q1 / (3.0 * coeffs.q0)).sqrt().min(bound)
            } else {
                bound
            };
            return Ok(coeffs);
        }
    }
    Err(Error::NoConvergence(MAX_ITERS))
}
