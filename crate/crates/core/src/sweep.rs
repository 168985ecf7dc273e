//! Independent training runs over a grid of mixing coefficients.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::report::{MetricsReport, Status};
use crate::metrics::MetricRow;
use crate::network::NetworkSpec;
use crate::oracle::{exact_density, DensityField};
use crate::trainer::{accuracy, mean_nll, train, TrainConfig, TrainLog};

pub const CONSOLIDATED_STEM: &str = "sweep_metrics";
pub const CHECKPOINT_FILE: &str = "checkpoint.jemc";
pub const LOG_FILE: &str = "train_log.csv";

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Root for per-run directories and the consolidated report.
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Ground-truth density on a grid; adds `density_tv` and `density_kl` rows.
    pub reference: Option<DensityField>,
    /// Label recorded in the report's dataset column.
    pub dataset_name: String,
}

#[derive(Debug)]
pub struct SweepEntry {
    pub alpha: f64,
    pub checkpoint: Option<Checkpoint>,
    pub checkpoint_path: Option<PathBuf>,
    pub log: TrainLog,
    pub report: MetricsReport,
    /// Set when training stopped early.
    pub failure: Option<String>,
}

/// Directory name of one run, e.g. `alpha_0.3`.
pub fn run_dir_name(alpha: f64) -> String {
    format!("alpha_{alpha:.1}")
}

/// Held-out and oracle metrics for one trained model.
pub fn evaluate_run(ck: &Checkpoint, holdout: Option<&Dataset>, reference: Option<&DensityField>, seed: u64, dataset: &str) -> MetricsReport {
    let mut r = MetricsReport::new();
    if let Some(h) = holdout.filter(|h| !h.is_empty()) {
        r.record(ck.alpha, seed, dataset, "holdout_accuracy", accuracy(&ck.model, h));
        r.record(ck.alpha, seed, dataset, "holdout_nll", mean_nll(&ck.model, h));
    }
    if let Some(truth) = reference {
        match exact_density(&ck.model, &truth.grid) {
            Ok(field) => {
                r.record(ck.alpha, seed, dataset, "density_tv", field.tv(truth));
                r.record(ck.alpha, seed, dataset, "density_kl", truth.kl(&field));
            }
            Err(e) => {
                r.record(ck.alpha, seed, dataset, "density_tv", Err(e));
            }
        }
    }
    r
}

fn failed_row(alpha: f64, seed: u64, dataset: &str, reason: String) -> MetricRow {
    MetricRow {
        alpha,
        seed,
        dataset: dataset.to_string(),
        metric: "training".into(),
        value: None,
        status: Status::Failed(reason),
        reference: None,
    }
}

fn run_one(alpha: f64, data: &Dataset, holdout: Option<&Dataset>, spec: &NetworkSpec, base: &TrainConfig, opts: &SweepOptions) -> Result<SweepEntry> {
    let cfg = TrainConfig { alpha, ..base.clone() };
    let outcome = train(data, holdout, spec, &cfg);
    let (checkpoint, log, failure) = match outcome {
        Ok(o) => (o.checkpoint, o.log, None),
        Err(f) => (f.last_good, f.log, Some(f.error.to_string())),
    };
    let mut report = if failure.is_none() {
        evaluate_run(&checkpoint, holdout, opts.reference.as_ref(), cfg.seed, &opts.dataset_name)
    } else {
        MetricsReport::new()
    };
    if let Some(reason) = &failure {
        report.rows.push(failed_row(alpha, cfg.seed, &opts.dataset_name, reason.clone()));
    }
    let mut checkpoint_path = None;
    if let Some(root) = &opts.out_dir {
        let dir = root.join(run_dir_name(alpha));
        std::fs::create_dir_all(&dir)?;
        let p = dir.join(CHECKPOINT_FILE);
        checkpoint.save(&p)?;
        log.write_csv(dir.join(LOG_FILE))?;
        report.write(&dir, "metrics")?;
        checkpoint_path = Some(p);
    }
    Ok(SweepEntry { alpha, checkpoint: Some(checkpoint), checkpoint_path, log, report, failure })
}

/// Trains one model per α with the same seed and configuration otherwise.
/// Runs proceed in parallel; a failed run is recorded and the others go on.
pub fn sweep_alpha(
    data: &Dataset,
    holdout: Option<&Dataset>,
    spec: &NetworkSpec,
    base: &TrainConfig,
    alphas: &[f64],
    opts: &SweepOptions,
) -> Result<Vec<SweepEntry>> {
    if alphas.is_empty() {
        return Err(Error::Config("empty alpha list".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
    }
    if let Some(root) = &opts.out_dir {
        std::fs::create_dir_all(root)?;
    }
    let work = || -> Vec<SweepEntry> {
        alphas
            .par_iter()
            .map(|&a| {
                run_one(a, data, holdout, spec, base, opts).unwrap_or_else(|e| SweepEntry {
                    alpha: a,
                    checkpoint: None,
                    checkpoint_path: None,
                    log: TrainLog::default(),
                    report: MetricsReport { rows: vec![failed_row(a, base.seed, &opts.dataset_name, e.to_string())] },
                    failure: Some(e.to_string()),
                })
            })
            .collect()
    };
    let entries = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    if let Some(root) = &opts.out_dir {
        write_consolidated(root, &entries)?;
    }
    Ok(entries)
}

pub fn consolidated_report(entries: &[SweepEntry]) -> MetricsReport {
    let mut r = MetricsReport::new();
    for e in entries {
        r.extend(e.report.clone());
    }
    r
}

/// Writes `sweep_metrics.csv` (first line a `#` timestamp comment) and `sweep_metrics.json`.
pub fn write_consolidated(root: &Path, entries: &[SweepEntry]) -> Result<()> {
    let report = consolidated_report(entries);
    let stamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let csv = format!("# created_unix={stamp}\n{}", report.to_csv()?);
    std::fs::write(root.join(format!("{CONSOLIDATED_STEM}.csv")), csv)?;
    std::fs::write(root.join(format!("{CONSOLIDATED_STEM}.json")), report.to_json()? + "\n")?;
    Ok(())
}

/// Rows of the consolidated CSV without the timestamp line.
pub fn strip_timestamp(csv: &str) -> &str {
    match csv.strip_prefix("# created_unix=") {
        Some(rest) => rest.split_once('\n').map_or("", |(_, body)| body),
        None => csv,
    }
}
