//! `simulate` and `train`: run the protocol and assemble a report.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use vfl_core::data::{accuracy, loss, plaintext_train, Activation, Dataset};
use vfl_core::protocol::{run_role, simulate, RoleInput, RoleOutcome, SimOptions, Task};
use vfl_core::report::{LedgerSummary, Metrics, ModelHashes, RunReport};
use vfl_core::transport::tcp::{connect, TcpOptions};
use vfl_core::transport::{CommLedger, Role};
use vfl_core::RingMatrix;

use crate::settings::{prepare, write_text, RunArgs, Settings};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    A,
    B,
    C,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Role {
        match r {
            RoleArg::A => Role::A,
            RoleArg::B => Role::B,
            RoleArg::C => Role::C,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub role: RoleArg,
    /// Address this role accepts lower-ranked peers on (B and C).
    #[arg(long)]
    pub listen: Option<String>,
    /// `b=HOST:PORT` or `c=HOST:PORT`; repeat for each higher-ranked peer.
    #[arg(long = "peer", value_name = "ROLE=ADDR")]
    pub peers: Vec<String>,
    #[command(flatten)]
    pub run: RunArgs,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

fn base_report(mode: &str, s: &Settings, ipe: usize) -> RunReport {
    RunReport {
        mode: mode.to_string(),
        config: s.hashed.clone(),
        config_hash: vfl_core::transport::endpoint::hex(&s.hash()),
        epochs: s.cfg.epochs,
        iters_per_epoch: ipe,
        latency_ms: ms(s.latency),
        ..Default::default()
    }
}

fn decoded(w: &RingMatrix, s: &Settings) -> Vec<f64> {
    w.decode(s.cfg.fixed)
}

fn metrics(s: &Settings, train: &Dataset, test: Option<&Dataset>, w: &[f64], baseline: bool) -> Result<Metrics> {
    let task = s.cfg.task;
    let acc = |ds: &Dataset, w: &[f64]| (task == Task::Logistic).then(|| accuracy(&ds.x, &ds.y, w));
    let mut m = Metrics {
        train_loss: Some(loss(&train.x, &train.y, w, task)),
        train_accuracy: acc(train, w),
        test_loss: test.map(|t| loss(&t.x, &t.y, w, task)),
        test_accuracy: test.and_then(|t| acc(t, w)),
        ..Default::default()
    };
    if baseline {
        let run = plaintext_train(&train.x, &train.y, &s.cfg, &Activation::Exact).context("float baseline")?;
        m.baseline_train_loss = run.losses.last().copied();
        m.baseline_test_accuracy = test.and_then(|t| acc(t, &run.weights)).or_else(|| acc(train, &run.weights));
    }
    Ok(m)
}

fn times_ms(o: &RoleOutcome) -> Vec<f64> {
    o.iteration_times.iter().map(|&d| ms(d)).collect()
}

pub fn cmd_simulate(args: &RunArgs) -> Result<RunReport> {
    let s = Settings::from_args(args)?;
    let data = prepare(&s)?;
    let opts = SimOptions {
        latency: s.latency,
        timeout: s.timeout,
        record_view: false,
    };
    let start = Instant::now();
    let outs = simulate(&s.cfg, data.xa.clone(), data.xb.clone(), data.y.clone(), &opts)?;
    let wall = start.elapsed();
    let ipe = outs[0].iters_per_epoch;
    let mut ledger = CommLedger::new();
    for o in &outs {
        ledger.merge(&o.ledger);
    }
    let (wa, wb) = (outs[0].weights.as_ref().unwrap(), outs[1].weights.as_ref().unwrap());
    let w: Vec<f64> = decoded(wa, &s).into_iter().chain(decoded(wb, &s)).collect();

    let mut r = base_report("simulate", &s, ipe);
    r.n = data.train.n();
    r.d1 = data.d1;
    r.d2 = data.train.d() - data.d1;
    r.wall_ms = ms(wall);
    r.set_iteration_times(times_ms(&outs[0]));
    r.ledger = LedgerSummary::new(&ledger, ipe, s.cfg.epochs);
    r.metrics = metrics(&s, &data.train, data.test.as_ref(), &w, args.baseline)?;
    r.model = ModelHashes::from_weights(Some(wa), Some(wb));
    r.transcripts = transcripts(&outs);
    emit(&r, args)?;
    Ok(r)
}

fn transcripts(outs: &[RoleOutcome]) -> BTreeMap<String, String> {
    outs.iter()
        .map(|o| (o.role.name().to_string(), o.transcript_digest.clone()))
        .collect()
}

fn parse_peers(peers: &[String]) -> Result<BTreeMap<Role, String>> {
    let mut m = BTreeMap::new();
    for p in peers {
        let Some((role, addr)) = p.split_once('=') else {
            bail!("invalid --peer {p:?}: expected ROLE=ADDR");
        };
        let role = Role::parse(role).with_context(|| format!("invalid --peer {p:?}: unknown role"))?;
        m.insert(role, addr.to_string());
    }
    Ok(m)
}

pub fn cmd_train(args: &TrainArgs) -> Result<RunReport> {
    let s = Settings::from_args(&args.run)?;
    let role = Role::from(args.role);
    // C never touches the data; the parties load only their own block.
    let data = match role {
        Role::C => None,
        _ => Some(prepare(&s)?),
    };
    let input = match (role, &data) {
        (Role::A, Some(p)) => RoleInput::A { xa: p.xa.clone() },
        (Role::B, Some(p)) => RoleInput::B {
            xb: p.xb.clone(),
            y: p.y.clone(),
        },
        _ => RoleInput::C,
    };
    let opts = TcpOptions {
        listen: args.listen.clone(),
        peers: parse_peers(&args.peers)?,
        latency: s.latency,
        timeout: s.timeout,
    };
    let start = Instant::now();
    let mut ep = connect(role, s.cfg.fixed.ring(), &opts)?;
    log::info!("role {} connected; config {}", role.name(), s.canonical().replace('\n', " "));
    let out = run_role(&s.cfg, input, &mut ep, &s.hash(), false)?;
    let wall = start.elapsed();

    let mut r = base_report(&format!("train:{}", role.name().to_ascii_lowercase()), &s, out.iters_per_epoch);
    if let Some(p) = &data {
        r.n = p.train.n();
        r.d1 = p.d1;
        r.d2 = p.train.d() - p.d1;
    }
    r.wall_ms = ms(wall);
    r.set_iteration_times(times_ms(&out));
    r.ledger = LedgerSummary::new(&out.ledger, out.iters_per_epoch, s.cfg.epochs);
    r.model = match role {
        Role::A => ModelHashes::from_weights(out.weights.as_ref(), None),
        Role::B => ModelHashes::from_weights(None, out.weights.as_ref()),
        Role::C => ModelHashes::default(),
    };
    r.transcripts = transcripts(std::slice::from_ref(&out));
    emit(&r, &args.run)?;
    Ok(r)
}

fn emit(r: &RunReport, args: &RunArgs) -> Result<()> {
    print!("{}", r.to_text());
    if let Some(p) = &args.out {
        r.write_json(p).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.csv {
        write_text(p, &r.timings_csv())?;
    }
    Ok(())
}
