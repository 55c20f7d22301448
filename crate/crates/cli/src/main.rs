//! `bridgelab`: experiment runner and invariant suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;
mod report;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::Value;

use config::{ConfigError, ExperimentKind, Suite};
use experiments::RunError;
use report::{Outcome, RunMeta};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "bridgelab", version, about = "Discretized Schrödinger bridge experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a built-in invariant suite, named directly or through a config.
    Check {
        #[arg(value_enum, required_unless_present = "config")]
        suite: Option<Suite>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "bridgelab-check")]
        outdir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    #[command(flatten)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// Solve one bridge and write its time profile.
    Solve(RunArgs),
    /// Cost, energy and Fisher information over a list of horizons.
    Sweep(RunArgs),
    /// Short-time sandwich and Taylor coefficients.
    Shorttime(RunArgs),
    /// Long-time bounds and limits.
    Longtime(RunArgs),
    /// Weak and strong duality, sharp-constant scan.
    Duality(RunArgs),
    /// Mean-field Schrödinger problem.
    Mfsp(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    outdir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

impl ExperimentCommand {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Self::Solve(a) => (ExperimentKind::Solve, a),
            Self::Sweep(a) => (ExperimentKind::Sweep, a),
            Self::Shorttime(a) => (ExperimentKind::Shorttime, a),
            Self::Longtime(a) => (ExperimentKind::Longtime, a),
            Self::Duality(a) => (ExperimentKind::Duality, a),
            Self::Mfsp(a) => (ExperimentKind::Mfsp, a),
        }
    }
}

fn thread_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("BRIDGELAB_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("BRIDGELAB_THREADS must be a positive integer"))?;
        if n == 0 {
            anyhow::bail!("BRIDGELAB_THREADS must be a positive integer");
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

struct Finished {
    outcome: Outcome,
    outdir: PathBuf,
    experiment: String,
    hash: String,
    config: Value,
    seed: Option<u64>,
}

fn execute(command: Command) -> Result<Finished, ConfigError> {
    match command {
        Command::Check { suite, config: Some(path), outdir, seed } => {
            let loaded = config::load(&path, ExperimentKind::Check, seed)?;
            let from_file = loaded.config.suite.ok_or_else(|| ConfigError("missing 'suite'".into()))?;
            if suite.is_some_and(|s| s != from_file) {
                return Err(ConfigError(format!(
                    "suite '{}' differs from the config's",
                    suite.map_or("", Suite::name)
                )));
            }
            let seed = loaded.seed.unwrap_or(0);
            let mut outcome = Outcome::default();
            suites::run(from_file, seed, &mut outcome);
            let config = serde_json::to_value(&loaded.config).unwrap_or(Value::Null);
            let experiment = format!("check {}", from_file.name());
            Ok(Finished { outcome, outdir, experiment, hash: loaded.hash, config, seed: Some(seed) })
        }
        Command::Check { suite, config: None, outdir, seed } => {
            let suite = suite.ok_or_else(|| ConfigError("missing suite".into()))?;
            let seed = seed.unwrap_or(0);
            let mut outcome = Outcome::default();
            suites::run(suite, seed, &mut outcome);
            let config = serde_json::json!({ "suite": suite, "seed": seed });
            let hash = config::sha256_hex(config.to_string().as_bytes());
            Ok(Finished {
                outcome,
                outdir,
                experiment: format!("check {}", suite.name()),
                hash,
                config,
                seed: Some(seed),
            })
        }
        Command::Experiment(e) => {
            let (kind, args) = e.split();
            let loaded = config::load(&args.config, kind, args.seed)?;
            let mut outcome = Outcome::default();
            match experiments::run(&loaded, &mut outcome) {
                Ok(()) => {}
                Err(RunError::Config(c)) => return Err(c),
                Err(RunError::Numerical(n)) => outcome.error = Some(n.to_string()),
            }
            let config = serde_json::to_value(&loaded.config).unwrap_or(Value::Null);
            Ok(Finished {
                outcome,
                outdir: args.outdir,
                experiment: kind.name().to_string(),
                hash: loaded.hash,
                config,
                seed: loaded.seed,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let start = Instant::now();
    let finished = match pool.install(|| execute(cli.command)) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let meta = RunMeta {
        experiment: &finished.experiment,
        config_hash: &finished.hash,
        config: &finished.config,
        seed: finished.seed,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    if let Err(e) = report::write_outputs(&finished.outdir, &meta, &finished.outcome) {
        eprintln!("error: cannot write outputs: {e}");
        return ExitCode::FAILURE;
    }
    let outcome = &finished.outcome;
    for a in &outcome.assertions {
        println!(
            "{} {} (value {:e}, tolerance {:e})",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.value,
            a.tolerance
        );
    }
    if let Some(e) = &outcome.error {
        eprintln!("numerical failure: {e}");
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NUMERICAL)
    }
}
