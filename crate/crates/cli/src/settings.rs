//! Flags and config files merged into one flat key=value map, and the data
//! each run needs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;

use vfl_core::data::{
    encode_features, encode_labels, load_csv, load_mnist_dir, split_train_test, split_vertical, synth, Dataset,
};
use vfl_core::protocol::config::{canonical_kv, config_hash, parse_kv};
use vfl_core::protocol::TrainConfig;
use vfl_core::RingMatrix;

/// Keys that shape the data. Hashed together with the training keys.
const DATA_KEYS: [&str; 7] = ["data", "n", "d", "d1", "noise", "train_ratio", "data_seed"];
/// Process-local keys, not hashed.
const LOCAL_KEYS: [&str; 2] = ["latency_ms", "timeout_secs"];

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Flat key=value file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// linear | logistic
    #[arg(long)]
    pub task: Option<String>,
    /// Sample count (synthetic), or a cap on the training rows.
    #[arg(long)]
    pub n: Option<usize>,
    /// Feature count for synthetic data.
    #[arg(long)]
    pub d: Option<usize>,
    /// Columns held by party A; default half.
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate 2^-K on the summed batch gradient.
    #[arg(long, value_name = "K")]
    pub lr_pow2: Option<u32>,
    #[arg(long)]
    pub ring_bits: Option<u32>,
    #[arg(long)]
    pub frac_bits: Option<u32>,
    /// Fraction bits of the sigmoid coefficients.
    #[arg(long)]
    pub coef_frac_bits: Option<u32>,
    /// Mini-batch size, or `full`.
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mask_seed: Option<u64>,
    /// synth | mnist:DIR | csv:PATH
    #[arg(long)]
    pub data: Option<String>,
    /// Target noise std-dev for synthetic data.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Train fraction; the rest is held out for test metrics.
    #[arg(long)]
    pub train_ratio: Option<f64>,
    /// One-way delay injected on every message.
    #[arg(long)]
    pub latency_ms: Option<f64>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-iteration timings as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also train the float baseline (exact sigmoid) for comparison.
    #[arg(long)]
    pub baseline: bool,
}

impl RunArgs {
    fn flag_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("task", self.task.clone());
        put("n", self.n.map(|v| v.to_string()));
        put("d", self.d.map(|v| v.to_string()));
        put("d1", self.d1.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("lr_pow2", self.lr_pow2.map(|v| v.to_string()));
        put("ring_bits", self.ring_bits.map(|v| v.to_string()));
        put("frac_bits", self.frac_bits.map(|v| v.to_string()));
        put("coef_frac_bits", self.coef_frac_bits.map(|v| v.to_string()));
        put("batch_size", self.batch.clone());
        put("seed", self.seed.map(|v| v.to_string()));
        put("mask_seed", self.mask_seed.map(|v| v.to_string()));
        put("data", self.data.clone());
        put("noise", self.noise.map(|v| v.to_string()));
        put("train_ratio", self.train_ratio.map(|v| v.to_string()));
        put("latency_ms", self.latency_ms.map(|v| v.to_string()));
        put("timeout_secs", self.timeout_secs.map(|v| v.to_string()));
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth,
    Mnist(PathBuf),
    Csv(PathBuf),
}

impl DataSource {
    fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "synth" => Ok(DataSource::Synth),
            Some(("mnist", p)) => Ok(DataSource::Mnist(p.into())),
            Some(("csv", p)) => Ok(DataSource::Csv(p.into())),
            _ => bail!("invalid value for `data`: {s:?} (expected synth, mnist:DIR or csv:PATH)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub cfg: TrainConfig,
    pub source: DataSource,
    pub n: Option<usize>,
    pub d: usize,
    pub d1: Option<usize>,
    pub noise: f64,
    pub train_ratio: Option<f64>,
    pub data_seed: u64,
    pub latency: Duration,
    pub timeout: Duration,
    /// Everything that must agree across roles.
    pub hashed: BTreeMap<String, String>,
}

fn get<T: std::str::FromStr>(m: &BTreeMap<String, String>, k: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    m.get(k)
        .map(|v| v.trim().parse::<T>().map_err(|e| anyhow::anyhow!("invalid value for `{k}`: {e}")))
        .transpose()
}

impl Settings {
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let mut m = match &args.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                parse_kv(&text)?
            }
            None => BTreeMap::new(),
        };
        m.extend(args.flag_pairs());
        Self::from_pairs(m)
    }

    pub fn from_pairs(m: BTreeMap<String, String>) -> Result<Self> {
        let train_keys: Vec<String> = TrainConfig::default().to_pairs().into_keys().collect();
        for k in m.keys() {
            if !train_keys.contains(k) && !DATA_KEYS.contains(&k.as_str()) && !LOCAL_KEYS.contains(&k.as_str()) {
                bail!("unknown config key `{k}`");
            }
        }
        let cfg = TrainConfig::from_pairs(&m)?;
        let source = DataSource::parse(m.get("data").map(String::as_str).unwrap_or("synth"))?;
        let n: Option<usize> = get(&m, "n")?;
        let d: usize = get(&m, "d")?.unwrap_or(16);
        let noise: f64 = get(&m, "noise")?.unwrap_or(0.0);
        let train_ratio: Option<f64> = get(&m, "train_ratio")?;
        if let Some(r) = train_ratio {
            if !(r > 0.0 && r <= 1.0) {
                bail!("invalid value for `train_ratio`: {r} (must be in (0, 1])");
            }
        }
        if source == DataSource::Synth && n == Some(0) {
            bail!("invalid value for `n`: must be at least 1");
        }
        let latency_ms: f64 = get(&m, "latency_ms")?.unwrap_or(0.0);
        if !(latency_ms >= 0.0) {
            bail!("invalid value for `latency_ms`: {latency_ms}");
        }
        let timeout_secs: u64 = get(&m, "timeout_secs")?.unwrap_or(120);

        let mut hashed = cfg.to_pairs();
        let data_seed: u64 = get(&m, "data_seed")?.unwrap_or(cfg.seed);
        hashed.insert("data".into(), m.get("data").cloned().unwrap_or_else(|| "synth".into()));
        hashed.insert("data_seed".into(), data_seed.to_string());
        for k in ["n", "d", "d1", "noise", "train_ratio"] {
            hashed.insert(k.into(), m.get(k).cloned().unwrap_or_else(|| "-".into()));
        }
        Ok(Settings {
            cfg,
            source,
            n,
            d,
            d1: get(&m, "d1")?,
            noise,
            train_ratio,
            data_seed,
            latency: Duration::from_secs_f64(latency_ms / 1000.0),
            timeout: Duration::from_secs(timeout_secs),
            hashed,
        })
    }

    pub fn hash(&self) -> [u8; 32] {
        config_hash(&self.hashed)
    }

    pub fn canonical(&self) -> String {
        canonical_kv(&self.hashed)
    }
}

/// Training rows split between the parties, plus held-out rows.
pub struct Prepared {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub d1: usize,
    pub xa: RingMatrix,
    pub xb: RingMatrix,
    pub y: RingMatrix,
}

fn load(s: &Settings) -> Result<Dataset> {
    Ok(match &s.source {
        DataSource::Synth => synth(s.n.unwrap_or(256), s.d, s.cfg.task, s.noise, s.data_seed)?,
        DataSource::Mnist(dir) => load_mnist_dir(dir, (0, 1)).with_context(|| format!("loading MNIST from {}", dir.display()))?,
        DataSource::Csv(p) => load_csv(p).with_context(|| format!("loading {}", p.display()))?,
    })
}

pub fn prepare(s: &Settings) -> Result<Prepared> {
    let ds = load(s)?;
    ds.check_task(s.cfg.task)?;
    // MNIST is evaluated on a held-out fifth unless told otherwise.
    let ratio = s.train_ratio.or(matches!(s.source, DataSource::Mnist(_)).then_some(0.8));
    let (mut train, test) = match ratio {
        Some(r) if r < 1.0 => {
            let (a, b) = split_train_test(&ds, r, s.data_seed)?;
            (a, Some(b))
        }
        _ => (ds, None),
    };
    if s.source != DataSource::Synth {
        if let Some(n) = s.n.filter(|&n| n < train.n()) {
            train = train.select_rows(&(0..n).collect::<Vec<_>>());
        }
    }
    let d1 = s.d1.unwrap_or(train.d() / 2);
    let p = split_vertical(&train, d1)?;
    Ok(Prepared {
        xa: encode_features(&p.xa, s.cfg.fixed)?,
        xb: encode_features(&p.xb, s.cfg.fixed)?,
        y: encode_labels(&p.y, s.cfg.task, s.cfg.fixed)?,
        d1,
        train,
        test,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
