//! `jemlab`: dataset generation, training, sweeps, evaluation, sampling and
//! oracle checks for joint energy models.

/// `println!` that stops quietly when stdout is a closed pipe (`jemlab gen ... | head`).
macro_rules! say {
    ($($arg:tt)*) => {
        crate::output::say(format_args!($($arg)*))
    };
}

mod commands;
mod config;
mod data;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "jemlab", version, about = "Joint energy model experiments on synthetic alignment benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key=value config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (`out`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Dataset directory (`data.dir`).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: mixture2d, cueconflict, softlabels, perceptual or probeset.
    Gen {
        kind: String,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model on `data.dir`.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model per α (default grid 0, 0.1, …, 1).
    Sweep {
        /// Comma-separated α list (`sweep.alphas`).
        #[arg(long)]
        alphas: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Compute alignment metrics for a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated metric names (`eval.metrics`).
        #[arg(long)]
        metrics: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Draw SGLD samples from an image model and write PGM/PPM files.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Shape bias of refined cue-conflict images over a step grid.
    Refine {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated step counts (`refine.steps`).
        #[arg(long)]
        steps: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Grid-oracle checks: partition function, normalization, CD gradient, sampler TV.
    OracleCheck {
        /// Model to check; without one, a constant-logit toy is used.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, extra: &[(&str, Option<String>)]) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(d) = &common.data {
        cfg.data_dir = Some(d.clone());
    }
    for (k, v) in extra {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    for kv in &common.overrides {
        cfg.apply_override(kv)?;
    }
    Ok(cfg)
}

/// Caps worker threads at `JEMLAB_THREADS` when set.
fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var("JEMLAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::config(format!("JEMLAB_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = thread_cap()? {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Gen { kind, common } => commands::gen::run(&kind, &resolve(&common, &[])?),
        Command::Train { common } => commands::train::run(&resolve(&common, &[])?),
        Command::Sweep { alphas, common } => {
            let mut cfg = resolve(&common, &[("sweep.alphas", alphas)])?;
            if let Some(n) = thread_cap()? {
                cfg.threads = Some(cfg.threads.map_or(n, |t| t.min(n)));
            }
            commands::sweep::run(&cfg)
        }
        Command::Eval { checkpoint, metrics, common } => {
            commands::eval::run(&checkpoint, &resolve(&common, &[("eval.metrics", metrics)])?)
        }
        Command::Sample { checkpoint, count, steps, common } => {
            let extra = [("sample.count", count.map(|c| c.to_string())), ("sample.steps", steps.map(|s| s.to_string()))];
            commands::sample::run(&checkpoint, &resolve(&common, &extra)?)
        }
        Command::Refine { checkpoint, steps, common } => {
            commands::refine::run(&checkpoint, &resolve(&common, &[("refine.steps", steps)])?)
        }
        Command::OracleCheck { checkpoint, common } => commands::oracle::run(checkpoint.as_deref(), &resolve(&common, &[])?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jemlab: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
