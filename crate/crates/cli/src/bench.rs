//! `cost`, `bench` and `coeffs`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;

use vfl_core::cost::{measured_formula, CostModel, Framework};
use vfl_core::data::{encode_features, encode_labels, split_vertical, synth};
use vfl_core::protocol::{simulate, SimOptions, Task, TrainConfig};
use vfl_core::report::RunReport;
use vfl_core::sigmoid::derive_coeffs;
use vfl_core::transport::CommLedger;

use crate::settings::write_text;

fn parse_tasks(s: &str) -> Result<Vec<Task>> {
    Ok(match s {
        "both" => vec![Task::Linear, Task::Logistic],
        t => vec![t.parse()?],
    })
}

fn parse_frameworks(s: &str) -> Result<Vec<Framework>> {
    Ok(match s {
        "all" => Framework::ALL.to_vec(),
        f => vec![f.parse()?],
    })
}

#[derive(Args, Debug, Clone)]
pub struct CostArgs {
    /// vertices | chameleon | aby3 | all
    #[arg(long, default_value = "all")]
    pub framework: String,
    /// linear | logistic | both
    #[arg(long, default_value = "both")]
    pub task: String,
    /// Batch size.
    #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Feature dimension.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub d: u64,
    /// Compare against the traffic measured in this report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn cmd_cost(a: &CostArgs) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:<9} {:<9} {:>14} {:>14}  {:<10} {:<10}",
        "framework", "task", "phase", "comm", "comp", "comm(n,d)", "comp(n,d)"
    );
    let tasks = parse_tasks(&a.task)?;
    for fw in parse_frameworks(&a.framework)? {
        for (task, phase, c) in CostModel::rows(fw) {
            if !tasks.contains(&task) {
                continue;
            }
            let _ = writeln!(
                s,
                "{:<10} {:<9} {:<9} {:>14} {:>14}  {:<10} {:<10}",
                fw.name(),
                task.name(),
                phase,
                c.comm.eval(a.n, a.d),
                c.comp.eval(a.n, a.d),
                c.comm.to_string(),
                c.comp.to_string()
            );
        }
    }
    if let Some(p) = &a.report {
        let r = RunReport::read_json(p).with_context(|| format!("reading {}", p.display()))?;
        s.push_str(&compare(&r)?);
    }
    Ok(s)
}

/// Measured per-epoch traffic of a run next to both formulas.
fn compare(r: &RunReport) -> Result<String> {
    let task: Task = r.config.get("task").map(String::as_str).unwrap_or("linear").parse()?;
    let d = (r.d1 + r.d2) as u64;
    let batch = match r.config.get("batch_size").map(String::as_str) {
        Some("full") | None => r.n as u64,
        Some(b) => b.parse::<u64>()?.min(r.n as u64),
    };
    let ipe = r.iters_per_epoch as u64;
    let mut s = String::new();
    let _ = writeln!(s, "\nmeasured vs model ({} n={} batch={} d={})", task.name(), r.n, batch, d);
    let measured = r.ledger.elements_per_epoch.first().copied().unwrap_or(0);
    let ours = measured_formula(task);
    let model = CostModel::new(Framework::Vertices, task).total.comm;
    let _ = writeln!(s, "  measured elements per epoch     {measured}");
    let _ = writeln!(
        s,
        "  implementation formula ({ours}) {}",
        if r.n as u64 % batch == 0 { (ours.eval(batch, d) * ipe).to_string() } else { "n/a (ragged batches)".into() }
    );
    let _ = writeln!(s, "  published model ({model})         {}", model.eval(batch, d) * ipe);
    Ok(s)
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long, default_value = "linear")]
    pub task: String,
    /// Comma-separated batch sizes.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Vec<usize>,
    /// Comma-separated feature dimensions.
    #[arg(long, value_delimiter = ',')]
    pub d_grid: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.0)]
    pub latency_ms: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub lr_pow2: u32,
    #[arg(long, default_value_t = 13)]
    pub frac_bits: u32,
    /// CSV output; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const BENCH_HEADER: &str = "task,n,d,epochs,status,wall_ms,compute_ms,mean_epoch_ms,elements_per_epoch,\
measured_formula,vertices_comm,vertices_comp,aby3_comm,aby3_comp,chameleon_comm,chameleon_comp";

struct Point {
    wall_ms: f64,
    compute_ms: f64,
    mean_epoch_ms: f64,
    elements_per_epoch: u64,
}

fn bench_point(task: Task, n: usize, d: usize, a: &BenchArgs) -> Result<Point> {
    let cfg = TrainConfig {
        task,
        epochs: a.epochs,
        lr_pow2: a.lr_pow2,
        fixed: vfl_core::FixedPointConfig::new(64, a.frac_bits)?,
        coef_frac_bits: 16.min(63 - 3 * a.frac_bits - 2),
        seed: a.seed,
        ..Default::default()
    };
    cfg.validate()?;
    let ds = synth(n, d, task, 0.0, a.seed)?;
    let p = split_vertical(&ds, d / 2)?;
    let (xa, xb) = (encode_features(&p.xa, cfg.fixed)?, encode_features(&p.xb, cfg.fixed)?);
    let y = encode_labels(&p.y, task, cfg.fixed)?;
    let opts = SimOptions {
        latency: std::time::Duration::from_secs_f64(a.latency_ms / 1000.0),
        ..Default::default()
    };
    let start = Instant::now();
    let outs = simulate(&cfg, xa, xb, y, &opts)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1000.0;
    let mut ledger = CommLedger::new();
    for o in &outs {
        ledger.merge(&o.ledger);
    }
    let iter_ms: f64 = outs[0].iteration_times.iter().map(|t| t.as_secs_f64() * 1000.0).sum();
    Ok(Point {
        wall_ms,
        compute_ms: iter_ms,
        mean_epoch_ms: iter_ms / a.epochs.max(1) as f64,
        elements_per_epoch: ledger.elements_per_epoch(outs[0].iters_per_epoch, a.epochs).first().copied().unwrap_or(0),
    })
}

/// Runs every grid point; failures are recorded in the `status` column.
pub fn cmd_bench(a: &BenchArgs) -> Result<String> {
    let task: Task = a.task.parse()?;
    let mut s = String::from(BENCH_HEADER);
    s.push('\n');
    for &n in &a.n_grid {
        for &d in &a.d_grid {
            let model = |fw| CostModel::new(fw, task).evaluate(n as u64, d as u64);
            let (v, y, c) = (model(Framework::Vertices), model(Framework::Aby3), model(Framework::Chameleon));
            let tail = format!(
                "{},{},{},{},{},{},{}",
                measured_formula(task).eval(n as u64, d as u64),
                v.comm,
                v.comp,
                y.comm,
                y.comp,
                c.comm,
                c.comp
            );
            let row = match bench_point(task, n, d, a) {
                Ok(p) => format!(
                    "{},{n},{d},{},ok,{:.3},{:.3},{:.3},{},{tail}",
                    task.name(),
                    a.epochs,
                    p.wall_ms,
                    p.compute_ms,
                    p.mean_epoch_ms,
                    p.elements_per_epoch
                ),
                Err(e) => {
                    log::warn!("bench point n={n} d={d} failed: {e:#}");
                    let msg = format!("{e:#}").replace([',', '\n'], ";");
                    format!("{},{n},{d},{},error: {msg},,,,,{tail}", task.name(), a.epochs)
                }
            };
            s.push_str(&row);
            s.push('\n');
        }
    }
    if let Some(p) = &a.out {
        write_text(p, &s)?;
    }
    Ok(s)
}

#[derive(Args, Debug, Clone)]
pub struct CoeffArgs {
    /// Approximation interval [-B, B].
    #[arg(long, default_value_t = 8.0)]
    pub bound: f64,
    #[arg(long, default_value_t = 10_000)]
    pub points: usize,
    /// Fraction bits for the fixed-point columns.
    #[arg(long, default_value_t = 16)]
    pub frac_bits: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_coeffs(a: &CoeffArgs) -> Result<String> {
    let c = derive_coeffs(a.bound, a.points)?;
    let text = c.to_artifact(a.frac_bits)?;
    if let Some(p) = &a.out {
        write_text(p, &text)?;
    }
    Ok(text)
}
