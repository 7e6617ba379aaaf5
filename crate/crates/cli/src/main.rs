//! `dfr`: simulate, backtest, train, reconcile and evaluate discrete
//! forecast reconciliation methods.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use dfr_core::ErrorClass;

#[derive(Parser)]
#[command(name = "dfr", version, about = "Coherent probabilistic forecasts for hierarchies of count series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON run configuration
    #[arg(long)]
    pub config: PathBuf,
    /// Root seed, overriding the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory, overriding the config
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated series and a replication manifest
    Simulate(Common),
    /// Produce base forecasts for every backtest window
    Fit(Common),
    /// Train the reconciliation methods, one model file per method and horizon
    Train(Common),
    /// Reconcile the base forecasts of the test windows
    Reconcile(Common),
    /// Score the trained methods on the test windows
    Evaluate(Common),
    /// Run everything end to end; simulated sources run every replication
    Report(Common),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<dfr_core::Error>() {
            return match e.class() {
                ErrorClass::Config => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            };
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let (cmd, common): (fn(&config::Run) -> Result<()>, Common) = match cli.command {
        Command::Simulate(c) => (commands::simulate, c),
        Command::Fit(c) => (commands::fit, c),
        Command::Train(c) => (commands::train, c),
        Command::Reconcile(c) => (commands::reconcile, c),
        Command::Evaluate(c) => (commands::evaluate, c),
        Command::Report(c) => (commands::report, c),
    };
    let run = config::Run::load(&common.config, common.seed, common.out.clone())?;
    let workers = common.workers.or(run.cfg.workers);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        pool = pool.num_threads(n);
    }
    pool.build()?.install(|| cmd(&run))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
