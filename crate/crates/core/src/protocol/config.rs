use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ring::FixedPointConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Linear,
    Logistic,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Linear => "linear",
            Task::Logistic => "logistic",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Task::Linear),
            "logistic" => Ok(Task::Logistic),
            _ => Err(Error::config("task", format!("unknown task `{s}`"))),
        }
    }
}

/// `Zero` replaces every mask with the neutral element (alpha, beta, r, rho = 0,
/// gamma = 1). Test-only; it removes all hiding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    Random,
    Zero,
}

impl FromStr for MaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(MaskMode::Random),
            "zero" => Ok(MaskMode::Zero),
            _ => Err(Error::config("mask_mode", format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    /// Learning rate is `2^-lr_pow2`, applied to the summed batch gradient.
    pub lr_pow2: u32,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub fixed: FixedPointConfig,
    /// Fractional bits of the sigmoid coefficients.
    pub coef_frac_bits: u32,
    pub sigmoid_bound: f64,
    pub seed: u64,
    /// Seed of every mask and random-split stream; defaults to `seed`.
    pub mask_seed: Option<u64>,
    pub mask_mode: MaskMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Task::Linear,
            epochs: 10,
            lr_pow2: 7,
            batch_size: None,
            fixed: FixedPointConfig::default(),
            coef_frac_bits: 16,
            sigmoid_bound: 8.0,
            seed: 0,
            mask_seed: None,
            mask_mode: MaskMode::Random,
        }
    }
}

impl TrainConfig {
    pub fn mask_seed(&self) -> u64 {
        self.mask_seed.unwrap_or(self.seed)
    }

    pub fn frac_bits(&self) -> u32 {
        self.fixed.frac_bits
    }

    /// Shift applied to gradient shares: back to scale `2^f` and times eta.
    pub fn gradient_shift(&self) -> u32 {
        self.fixed.frac_bits + self.lr_pow2
    }

    pub fn validate(&self) -> Result<()> {
        self.fixed.validate()?;
        let l = self.fixed.ring_bits;
        let f = self.fixed.frac_bits;
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if f + self.lr_pow2 >= l {
            return Err(Error::config("lr_pow2", format!("shift {} exceeds ring width {l}", f + self.lr_pow2)));
        }
        if 2 * f + 2 >= l {
            return Err(Error::config("frac_bits", format!("products at scale 2^{} overflow {l} bits", 2 * f)));
        }
        if !(self.sigmoid_bound > 0.0) {
            return Err(Error::config("sigmoid_bound", "must be positive"));
        }
        if self.task == Task::Logistic {
            let top = 3 * f + self.coef_frac_bits;
            if top + 1 >= l {
                return Err(Error::config(
                    "coef_frac_bits",
                    format!("cube at scale 2^{top} does not fit {l} bits"),
                ));
            }
            if top + 8 > l {
                log::warn!("logistic cube scale 2^{top} leaves fewer than 8 headroom bits in a {l}-bit ring");
            }
        }
        Ok(())
    }

    pub fn plan(&self, n: usize) -> BatchPlan {
        BatchPlan::new(n, self.batch_size, self.epochs)
    }

    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("task".into(), self.task.name().into());
        m.insert("epochs".into(), self.epochs.to_string());
        m.insert("lr_pow2".into(), self.lr_pow2.to_string());
        m.insert(
            "batch_size".into(),
            self.batch_size.map_or("full".into(), |b| b.to_string()),
        );
        m.insert("ring_bits".into(), self.fixed.ring_bits.to_string());
        m.insert("frac_bits".into(), self.fixed.frac_bits.to_string());
        m.insert("coef_frac_bits".into(), self.coef_frac_bits.to_string());
        m.insert("sigmoid_bound".into(), self.sigmoid_bound.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("mask_seed".into(), self.mask_seed().to_string());
        m.insert(
            "mask_mode".into(),
            match self.mask_mode {
                MaskMode::Random => "random",
                MaskMode::Zero => "zero",
            }
            .into(),
        );
        m
    }

    /// Reads the training keys of a key=value map; absent keys keep defaults.
    pub fn from_pairs(m: &BTreeMap<String, String>) -> Result<Self> {
        fn num<T: FromStr>(m: &BTreeMap<String, String>, k: &str, d: T) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            match m.get(k) {
                None => Ok(d),
                Some(v) => v.trim().parse().map_err(|e: T::Err| Error::config(k, e.to_string())),
            }
        }
        let d = TrainConfig::default();
        let batch_size = match m.get("batch_size").map(|s| s.trim()) {
            None | Some("full") | Some("") => None,
            Some(v) => Some(v.parse().map_err(|e: std::num::ParseIntError| Error::config("batch_size", e.to_string()))?),
        };
        let cfg = TrainConfig {
            task: m.get("task").map_or(Ok(d.task), |s| s.trim().parse())?,
            epochs: num(m, "epochs", d.epochs)?,
            lr_pow2: num(m, "lr_pow2", d.lr_pow2)?,
            batch_size,
            fixed: FixedPointConfig {
                ring_bits: num(m, "ring_bits", d.fixed.ring_bits)?,
                frac_bits: num(m, "frac_bits", d.fixed.frac_bits)?,
            },
            coef_frac_bits: num(m, "coef_frac_bits", d.coef_frac_bits)?,
            sigmoid_bound: num(m, "sigmoid_bound", d.sigmoid_bound)?,
            seed: num(m, "seed", d.seed)?,
            mask_seed: m
                .get("mask_seed")
                .map(|v| v.trim().parse().map_err(|e: std::num::ParseIntError| Error::config("mask_seed", e.to_string())))
                .transpose()?,
            mask_mode: m.get("mask_mode").map_or(Ok(d.mask_mode), |s| s.trim().parse())?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sequential mini-batches over `n` rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub n: usize,
    pub batches: Vec<(usize, usize)>,
    pub epochs: usize,
}

impl BatchPlan {
    pub fn new(n: usize, batch_size: Option<usize>, epochs: usize) -> Self {
        let bs = batch_size.unwrap_or(n).clamp(1, n.max(1));
        let batches = (0..n).step_by(bs).map(|s| (s, (s + bs).min(n))).collect();
        BatchPlan { n, batches, epochs }
    }

    pub fn iters_per_epoch(&self) -> usize {
        self.batches.len()
    }

    pub fn total_iterations(&self) -> usize {
        self.epochs * self.batches.len()
    }

    pub fn batch(&self, t: usize) -> (usize, usize) {
        self.batches[t % self.batches.len()]
    }

    pub fn max_batch(&self) -> usize {
        self.batches.iter().map(|(s, e)| e - s).max().unwrap_or(0)
    }
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut m = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", i + 1), "expected key=value"))?;
        m.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(m)
}

pub fn canonical_kv(m: &BTreeMap<String, String>) -> String {
    m.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn config_hash(m: &BTreeMap<String, String>) -> [u8; 32] {
    Sha256::digest(canonical_kv(m).as_bytes()).into()
}
