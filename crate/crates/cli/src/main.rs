//! `vfl`: simulate, deploy, benchmark and cost the three-party trainer.

mod bench;
mod run;
mod settings;

use clap::{CommandFactory, Parser, Subcommand};

use bench::{BenchArgs, CoeffArgs, CostArgs};
use run::TrainArgs;
use settings::RunArgs;

#[derive(Parser, Debug)]
#[command(name = "vfl", version, about = "Three-party vertical federated linear and logistic regression")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run A, B and C on three threads in this process.
    Simulate(RunArgs),
    /// Run one role over TCP.
    Train(TrainArgs),
    /// Print the analytical per-epoch cost table.
    Cost(CostArgs),
    /// Sweep a grid of (n, d) and emit CSV.
    Bench(BenchArgs),
    /// Derive the minimax sigmoid coefficients.
    Coeffs(CoeffArgs),
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.cmd {
        Cmd::Simulate(a) => run::cmd_simulate(a).map(|_| ()),
        Cmd::Train(a) => run::cmd_train(a).map(|_| ()),
        Cmd::Cost(a) => bench::cmd_cost(a).map(|s| print!("{s}")),
        Cmd::Bench(a) => {
            if a.n_grid.is_empty() || a.d_grid.is_empty() {
                Cli::command()
                    .error(clap::error::ErrorKind::MissingRequiredArgument, "bench needs a non-empty --n-grid and --d-grid")
                    .exit();
            }
            bench::cmd_bench(a).map(|s| {
                if a.out.is_none() {
                    print!("{s}")
                }
            })
        }
        Cmd::Coeffs(a) => bench::cmd_coeffs(a).map(|s| print!("{s}")),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
