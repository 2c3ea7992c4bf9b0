use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Bernoulli, Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::RingMatrix;
use crate::protocol::Task;
use crate::ring::{FixedPointConfig, SeededRng};
use crate::sigmoid::sigmoid_exact;

/// Inputs are clamped to this magnitude before encoding.
pub const FEATURE_CLAMP: f64 = 128.0;

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "matrix",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn col_range(&self, start: usize, end: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Matrix {
            rows: self.rows,
            cols: end - start,
            data,
        }
    }

    pub fn hconcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "hconcat",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        })
    }

    /// `self * w`
    pub fn mul_vec(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^T * v`
    pub fn t_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += x * vi;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
    /// Generating weights, for synthetic data.
    pub w_star: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows == 0 || x.cols < 2 {
            return Err(Error::Data(format!("need n >= 1 and d >= 2, got {}x{}", x.rows, x.cols)));
        }
        if y.len() != x.rows {
            return Err(Error::Data(format!("{} labels for {} rows", y.len(), x.rows)));
        }
        Ok(Dataset {
            x,
            y,
            feature_names: None,
            w_star: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows
    }

    pub fn d(&self) -> usize {
        self.x.cols
    }

    pub fn check_task(&self, task: Task) -> Result<()> {
        if task == Task::Logistic && self.y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data("logistic labels must be 0 or 1".into()));
        }
        Ok(())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            w_star: self.w_star.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub n: usize,
    pub d: usize,
    pub task: Task,
    /// Std-dev of Gaussian noise on the target (linear) or the logit (logistic).
    pub noise: f64,
    /// Features are uniform in `[-feature_scale, feature_scale]`.
    pub feature_scale: f64,
    /// Hidden weights are uniform in `[-weight_scale, weight_scale]`.
    pub weight_scale: f64,
    pub seed: u64,
}

impl SynthOptions {
    pub fn new(n: usize, d: usize, task: Task, noise: f64, seed: u64) -> Self {
        SynthOptions {
            n,
            d,
            task,
            noise,
            feature_scale: 1.0,
            weight_scale: 1.0,
            seed,
        }
    }
}

pub fn synth(n: usize, d: usize, task: Task, noise: f64, seed: u64) -> Result<Dataset> {
    synth_with(&SynthOptions::new(n, d, task, noise, seed))
}

pub fn synth_with(o: &SynthOptions) -> Result<Dataset> {
    if o.n == 0 || o.d == 0 {
        return Err(Error::config("synth", "n and d must be at least 1"));
    }
    let mut rng = SeededRng::derive(o.seed, "data/synth", 0);
    let x: Vec<f64> = (0..o.n * o.d)
        .map(|_| rng.range_f64(-o.feature_scale, o.feature_scale))
        .collect();
    let w: Vec<f64> = (0..o.d).map(|_| rng.range_f64(-o.weight_scale, o.weight_scale)).collect();
    let x = Matrix::from_vec(o.n, o.d, x)?;
    let mut z = x.mul_vec(&w);
    if o.noise > 0.0 {
        let normal = Normal::new(0.0, o.noise).map_err(|e| Error::config("noise", e.to_string()))?;
        for v in z.iter_mut() {
            *v += normal.sample(rng.inner());
        }
    }
    let y = match o.task {
        Task::Linear => z,
        Task::Logistic => z
            .iter()
            .map(|&v| {
                let b = Bernoulli::new(sigmoid_exact(v)).expect("probability in [0, 1]");
                if b.sample(rng.inner()) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    };
    // d = 1 is allowed for synthesis even though training needs two blocks.
    Ok(Dataset {
        x,
        y,
        feature_names: None,
        w_star: Some(w),
    })
}

/// Writes a header `f0..f{d-1},label` and one row per sample.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = match &ds.feature_names {
        Some(names) => names.clone(),
        None => (0..ds.d()).map(|j| format!("f{j}")).collect(),
    };
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.y[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV whose header is optional. The label column is the one named
/// `label` or `y` if a header exists, otherwise the last column.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut records = r.records();
    let first = records
        .next()
        .ok_or_else(|| Error::Data("empty csv".into()))??;
    let header: Option<Vec<String>> = if first.iter().any(|f| f.trim().parse::<f64>().is_err()) {
        Some(first.iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };
    let width = first.len();
    let label_col = header
        .as_ref()
        .and_then(|h| h.iter().position(|c| c.eq_ignore_ascii_case("label") || c.eq_ignore_ascii_case("y")))
        .unwrap_or(width - 1);

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut push = |rec: &csv::StringRecord, line: usize| -> Result<()> {
        if rec.len() != width {
            return Err(Error::Data(format!("row {line}: {} fields, expected {width}", rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("row {line}: bad number {field:?}")))?;
            if j == label_col {
                y.push(v);
            } else {
                x.push(v);
            }
        }
        Ok(())
    };
    if header.is_none() {
        push(&first, 1)?;
    }
    for (i, rec) in records.enumerate() {
        push(&rec?, i + 2)?;
    }
    let n = y.len();
    let mut ds = Dataset::new(Matrix::from_vec(n, width - 1, x)?, y)?;
    ds.feature_names = header.map(|mut h| {
        h.remove(label_col);
        h
    });
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalPartition {
    pub xa: Matrix,
    pub xb: Matrix,
    /// Held by B.
    pub y: Vec<f64>,
}

impl VerticalPartition {
    pub fn d1(&self) -> usize {
        self.xa.cols
    }

    pub fn d2(&self) -> usize {
        self.xb.cols
    }

    pub fn reassemble(&self) -> Result<Matrix> {
        self.xa.hconcat(&self.xb)
    }
}

/// First `d1` columns to A, the rest to B.
pub fn split_vertical(ds: &Dataset, d1: usize) -> Result<VerticalPartition> {
    if d1 == 0 || d1 >= ds.d() {
        return Err(Error::config("d1", format!("must be in 1..{}, got {d1}", ds.d())));
    }
    Ok(VerticalPartition {
        xa: ds.x.col_range(0, d1),
        xb: ds.x.col_range(d1, ds.d()),
        y: ds.y.clone(),
    })
}

/// Seeded shuffle, then the first `round(ratio * n)` rows train.
pub fn split_train_test(ds: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config("ratio", format!("must be in (0, 1), got {ratio}")));
    }
    let n = ds.n();
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::config("ratio", format!("{ratio} leaves an empty side for n = {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(SeededRng::derive(seed, "data/split", 0).inner());
    Ok((ds.select_rows(&idx[..n_train]), ds.select_rows(&idx[n_train..])))
}

/// Encodes at scale `2^f`, clamping to [`FEATURE_CLAMP`].
pub fn encode_features(m: &Matrix, cfg: FixedPointConfig) -> Result<RingMatrix> {
    let clamped: Vec<f64> = m.data.iter().map(|v| v.clamp(-FEATURE_CLAMP, FEATURE_CLAMP)).collect();
    RingMatrix::encode(cfg, m.rows, m.cols, &clamped)
}

/// Labels as B feeds them to the protocol: scale `2^{2f}` for the linear
/// task (they meet products directly), `2^f` for the logistic task.
pub fn encode_labels(y: &[f64], task: Task, cfg: FixedPointConfig) -> Result<RingMatrix> {
    let scaled = match task {
        Task::Linear => cfg.with_frac_bits(2 * cfg.frac_bits),
        Task::Logistic => cfg,
    };
    RingMatrix::encode(scaled, y.len(), 1, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_is_deterministic() {
        let a = synth(20, 4, Task::Linear, 0.1, 3).unwrap();
        let b = synth(20, 4, Task::Linear, 0.1, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth(20, 4, Task::Linear, 0.1, 4).unwrap());
    }

    #[test]
    fn logistic_labels_are_binary() {
        let ds = synth(100, 3, Task::Logistic, 0.0, 1).unwrap();
        ds.check_task(Task::Logistic).unwrap();
    }

    #[test]
    fn vertical_bounds() {
        let ds = synth(5, 4, Task::Linear, 0.0, 0).unwrap();
        assert!(split_vertical(&ds, 0).is_err());
        assert!(split_vertical(&ds, 4).is_err());
        let p = split_vertical(&ds, 1).unwrap();
        assert_eq!((p.d1(), p.d2()), (1, 3));
        assert_eq!(p.reassemble().unwrap(), ds.x);
    }

    #[test]
    fn train_test_sizes() {
        let ds = synth(10, 2, Task::Linear, 0.0, 0).unwrap();
        let (tr, te) = split_train_test(&ds, 0.8, 1).unwrap();
        assert_eq!((tr.n(), te.n()), (8, 2));
        assert!(split_train_test(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn clamp_on_encode() {
        let cfg = FixedPointConfig::new(64, 8).unwrap();
        let m = Matrix::from_vec(1, 2, vec![1e6, -1e6]).unwrap();
        let e = encode_features(&m, cfg).unwrap();
        assert_eq!(e.decode(cfg), vec![128.0, -128.0]);
    }
}
