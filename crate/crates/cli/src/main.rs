//! `sharpch <experiment> [--config FILE] [--seed N] [--out DIR] [--workers N]`
//!
//! Exit codes: 0 success, 2 usage, 3 invalid configuration, 4 I/O failure,
//! 5 solver blow-up, 6 corrupt snapshot, 7 other numerical failure.
//! `SHARPCH_WORKERS` sets the worker count when `--workers` is absent.

use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};
use sharpch::harness::{parse_config, run_experiment, ExitCode, ExperimentKind};

#[derive(Parser)]
#[command(name = "sharpch", version, about = "Stochastic Cahn-Hilliard sharp-interface experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory, writing snapshots, energy and residual traces.
    Simulate(Common),
    /// Residual scaling study over an (epsilon, sigma) grid.
    Ensemble(Common),
    /// Interface and residual diagnostics of stored snapshots.
    Analyze(Common),
    /// Exponent thresholds and interface constants.
    Theory(Common),
    /// Sharp-interface reference models: mode rates, OU modes, ripening.
    Reference(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

fn fail(code: ExitCode, message: impl std::fmt::Display) -> ! {
    eprintln!("error: {message}");
    process::exit(code as i32)
}

fn workers(flag: Option<u64>, configured: Option<usize>) -> usize {
    if let Some(n) = flag {
        return n as usize;
    }
    if let Ok(v) = std::env::var("SHARPCH_WORKERS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => return n,
            _ => fail(ExitCode::Usage, format!("SHARPCH_WORKERS must be a positive integer, got {v:?}")),
        }
    }
    configured.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Simulate(c) => (ExperimentKind::Simulate, c),
        Command::Ensemble(c) => (ExperimentKind::Ensemble, c),
        Command::Analyze(c) => (ExperimentKind::Analyze, c),
        Command::Theory(c) => (ExperimentKind::Theory, c),
        Command::Reference(c) => (ExperimentKind::Reference, c),
    };
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path)
            .unwrap_or_else(|e| fail(ExitCode::Io, format!("{}: {e}", path.display()))),
        None => String::new(),
    };
    let mut config = parse_config(&text).unwrap_or_else(|e| {
        let name = common.config.as_ref().map_or("<defaults>".into(), |p| p.display().to_string());
        for issue in &e.issues {
            eprintln!("{name}: {issue}");
        }
        process::exit(ExitCode::Config as i32)
    });
    if config.kind != kind {
        log::info!("running {} (config names {})", kind.name(), config.kind.name());
        config.kind = kind;
    }
    if let Some(seed) = common.seed {
        config.reseed(seed);
    }
    if let Some(out) = common.out {
        config.output = out;
    }
    let workers = workers(common.workers, config.workers);
    match run_experiment(&config, workers) {
        Ok(outcome) => print!("{}", outcome.summary),
        Err(e) => fail(e.exit_code(), e),
    }
}
