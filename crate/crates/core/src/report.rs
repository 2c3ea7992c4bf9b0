//! Run reports: config echo, timings, traffic summary, metrics and model
//! hashes. Serialized as pretty JSON; per-iteration timings also as CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::RingMatrix;
use crate::transport::endpoint::hex;
use crate::transport::{CommLedger, Counter};

/// sha256 over the shape and little-endian elements.
pub fn matrix_hash(m: &RingMatrix) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for v in m.data() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

/// `sha256(sha256(w_a) || sha256(w_b))`, hex.
pub fn combine_hashes(wa: &[u8; 32], wb: &[u8; 32]) -> String {
    let mut h = Sha256::new();
    h.update(wa);
    h.update(wb);
    hex(&h.finalize())
}

pub fn model_hash(wa: &RingMatrix, wb: &RingMatrix) -> String {
    combine_hashes(&matrix_hash(wa), &matrix_hash(wb))
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 {
        return Err(Error::Data(format!("bad hash {s:?}")));
    }
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| Error::Data(format!("bad hash {s:?}")))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelHashes {
    pub w_a: Option<String>,
    pub w_b: Option<String>,
    /// Present once both halves are known.
    pub model: Option<String>,
}

impl ModelHashes {
    pub fn from_weights(wa: Option<&RingMatrix>, wb: Option<&RingMatrix>) -> Self {
        let ha = wa.map(matrix_hash);
        let hb = wb.map(matrix_hash);
        let model = match (&ha, &hb) {
            (Some(a), Some(b)) => Some(combine_hashes(a, b)),
            _ => None,
        };
        ModelHashes {
            w_a: ha.map(|h| hex(&h)),
            w_b: hb.map(|h| hex(&h)),
            model,
        }
    }

    /// Merges the halves reported by separate role processes.
    pub fn merge(parts: &[&ModelHashes]) -> Result<ModelHashes> {
        let w_a = parts.iter().find_map(|p| p.w_a.clone());
        let w_b = parts.iter().find_map(|p| p.w_b.clone());
        let model = match (&w_a, &w_b) {
            (Some(a), Some(b)) => Some(combine_hashes(&unhex(a)?, &unhex(b)?)),
            _ => None,
        };
        Ok(ModelHashes { w_a, w_b, model })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub total: Counter,
    pub by_phase: BTreeMap<String, Counter>,
    /// Keyed `"A->C"` etc.
    pub by_edge: BTreeMap<String, Counter>,
    pub elements_per_epoch: Vec<u64>,
}

impl LedgerSummary {
    pub fn new(ledger: &CommLedger, iters_per_epoch: usize, epochs: usize) -> Self {
        LedgerSummary {
            total: ledger.total(),
            by_phase: ledger
                .by_phase()
                .into_iter()
                .map(|(p, c)| (p.name().to_string(), c))
                .collect(),
            by_edge: ledger
                .by_edge()
                .into_iter()
                .map(|((s, r), c)| (format!("{}->{}", s.name(), r.name()), c))
                .collect(),
            elements_per_epoch: ledger.elements_per_epoch(iters_per_epoch, epochs),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub train_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Same metrics for the float baseline, when computed.
    pub baseline_test_accuracy: Option<f64>,
    pub baseline_train_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// `simulate` or `train:<role>`.
    pub mode: String,
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub latency_ms: f64,
    pub wall_ms: f64,
    pub iteration_ms: Vec<f64>,
    pub epoch_ms: Vec<f64>,
    pub ledger: LedgerSummary,
    pub metrics: Metrics,
    pub model: ModelHashes,
    /// Per role: hex sha256 over the frames it sent.
    pub transcripts: BTreeMap<String, String>,
}

impl RunReport {
    pub fn set_iteration_times(&mut self, ms: Vec<f64>) {
        let ipe = self.iters_per_epoch.max(1);
        self.epoch_ms = ms.chunks(ipe).map(|c| c.iter().sum()).collect();
        self.iteration_ms = ms;
    }

    pub fn mean_epoch_ms(&self) -> f64 {
        if self.epoch_ms.is_empty() {
            0.0
        } else {
            self.epoch_ms.iter().sum::<f64>() / self.epoch_ms.len() as f64
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `iteration,epoch,ms`
    pub fn timings_csv(&self) -> String {
        let ipe = self.iters_per_epoch.max(1);
        let mut s = String::from("iteration,epoch,ms\n");
        for (i, ms) in self.iteration_ms.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{ms:.3}", i / ipe);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode          {}", self.mode);
        let _ = writeln!(
            s,
            "task          {}  n={} d1={} d2={}",
            self.config.get("task").map(String::as_str).unwrap_or("?"),
            self.n,
            self.d1,
            self.d2
        );
        let _ = writeln!(s, "config hash   {}", self.config_hash);
        let _ = writeln!(
            s,
            "epochs        {} x {} iterations",
            self.epochs, self.iters_per_epoch
        );
        let _ = writeln!(s, "wall time     {:.1} ms (mean epoch {:.2} ms, latency {} ms)", self.wall_ms, self.mean_epoch_ms(), self.latency_ms);
        let t = &self.ledger.total;
        let _ = writeln!(
            s,
            "traffic       {} messages, {} elements, {} wire bytes",
            t.messages, t.elements, t.wire_bytes
        );
        if let Some(e) = self.ledger.elements_per_epoch.first() {
            let _ = writeln!(s, "per epoch     {e} elements");
        }
        for (p, c) in &self.ledger.by_phase {
            let _ = writeln!(s, "  {p:<12}{:>12} elements {:>8} msgs", c.elements, c.messages);
        }
        for (e, c) in &self.ledger.by_edge {
            let _ = writeln!(s, "  {e:<12}{:>12} elements {:>8} msgs", c.elements, c.messages);
        }
        let m = &self.metrics;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "train loss    {}", opt(m.train_loss));
        let _ = writeln!(s, "train acc     {}", opt(m.train_accuracy));
        let _ = writeln!(s, "test acc      {}", opt(m.test_accuracy));
        if m.baseline_test_accuracy.is_some() {
            let _ = writeln!(s, "baseline acc  {}", opt(m.baseline_test_accuracy));
        }
        let _ = writeln!(s, "model hash    {}", self.model.model.as_deref().unwrap_or("-"));
        s
    }
}
