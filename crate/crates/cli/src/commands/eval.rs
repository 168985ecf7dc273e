use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use jemlab::energy::posteriors;
use jemlab::metrics::{
    consistency_trials, error_consistency, jnd_map, mean_saliency_alignment, probe_classify, probe_regress,
    rating_correlation, saliency_maps, shape_bias, soft_label_ce, soft_label_kl, two_afc, MetricsReport, SaliencyMode,
    ShapeBiasMode,
};
use jemlab::network::{EnergyModel, LayerSpec};
use jemlab::oracle::exact_density;
use jemlab::synthdata::humans::load_stimulus_inputs;
use jemlab::synthdata::{CueConflictSet, LabeledPoints2D, ObserverResponses, PerceptualSet, ProbeSet, SoftLabelSet};
use jemlab::trainer::{accuracy, mean_nll, predict};
use jemlab::{Checkpoint, Result, Tensor};

use crate::config::RunConfig;
use crate::data::{dataset_name, existing_dir, load_training, reference_density};
use crate::error::{CliError, CliResult};
use crate::output::out_dir;

pub const METRICS: [&str; 15] = [
    "accuracy",
    "nll",
    "density_tv",
    "density_kl",
    "soft_label_ce",
    "soft_label_kl",
    "error_consistency",
    "shape_bias",
    "saliency_alignment",
    "two_afc",
    "jnd_map",
    "probe_gloss",
    "probe_lighting",
    "probe_relief",
    "rating_correlation",
];

pub const REPORT_STEM: &str = "metrics";

/// Which configured directory a metric reads.
fn source(metric: &str) -> (&'static str, fn(&RunConfig) -> Option<&PathBuf>) {
    match metric {
        "accuracy" | "nll" | "density_tv" | "density_kl" => ("data.dir", |c| c.data_dir.as_ref()),
        "soft_label_ce" | "soft_label_kl" | "error_consistency" => ("eval.softlabels", |c| c.eval.softlabels.as_ref()),
        "shape_bias" | "saliency_alignment" => ("eval.cueconflict", |c| c.eval.cueconflict.as_ref()),
        "two_afc" | "jnd_map" => ("eval.perceptual", |c| c.eval.perceptual.as_ref()),
        _ => ("eval.probeset", |c| c.eval.probeset.as_ref()),
    }
}

fn activation_layers(model: &EnergyModel) -> Vec<usize> {
    model.spec().layers.iter().enumerate().filter(|(_, l)| matches!(l, LayerSpec::LeakyRelu { .. })).map(|(i, _)| i).collect()
}

fn flat_features(model: &EnergyModel, images: &Tensor, layer: usize) -> Result<Tensor> {
    let f = model.features(images, &[layer])?.remove(0);
    let n = f.rows();
    f.reshape(&[n, f.row_len()])
}

/// Lazily loaded inputs so each directory is read once.
#[derive(Default)]
struct Cache {
    probes: Option<ProbeSet>,
    gloss: Option<Result<jemlab::metrics::ProbeResult>>,
}

fn compute(metric: &str, model: &EnergyModel, cfg: &RunConfig, dir: &Path, cache: &mut Cache) -> Result<f64> {
    let seed = cfg.seed;
    match metric {
        "accuracy" | "nll" | "density_tv" | "density_kl" => {
            let loaded = load_training(dir).map_err(|e| jemlab::Error::Config(e.message))?;
            match metric {
                "accuracy" => accuracy(model, &loaded.data),
                "nll" => mean_nll(model, &loaded.data),
                _ => {
                    let mix = loaded.mixture.ok_or_else(|| jemlab::Error::Usage("density metrics need a mixture dataset".into()))?;
                    let truth = reference_density(cfg, &mix).map_err(|e| jemlab::Error::Config(e.message))?;
                    let field = exact_density(model, &truth.grid)?;
                    if metric == "density_tv" {
                        field.tv(&truth)
                    } else {
                        truth.kl(&field)
                    }
                }
            }
        }
        "soft_label_ce" | "soft_label_kl" => {
            let pts = LabeledPoints2D::load(dir)?;
            let soft = SoftLabelSet::load(dir)?;
            let probs = posteriors(model, &pts.points.select_rows(&soft.ids))?;
            if metric == "soft_label_ce" {
                soft_label_ce(&probs, &soft.counts)
            } else {
                soft_label_kl(&probs, &soft.counts)
            }
        }
        "error_consistency" => {
            let responses = ObserverResponses::load(dir)?;
            let inputs = load_stimulus_inputs(dir)?;
            let preds: BTreeMap<usize, usize> = predict(model, &inputs)?.into_iter().enumerate().collect();
            error_consistency(&[consistency_trials(&responses, &preds)?])
        }
        "shape_bias" => {
            let set = CueConflictSet::load(dir, Some(model.num_classes()))?.conflict_subset();
            let preds = predict(model, &set.images)?;
            shape_bias(&preds, &set.shape_labels, &set.texture_labels, ShapeBiasMode::CueDecisions)
        }
        "saliency_alignment" => {
            let set = CueConflictSet::load(dir, Some(model.num_classes()))?;
            let maps = saliency_maps(model, &set.images, SaliencyMode::ClassLogit)?;
            mean_saliency_alignment(&maps, &set.importance, 1.0)
        }
        "two_afc" | "jnd_map" => {
            let set = PerceptualSet::load(dir)?;
            let layers = if cfg.eval.layers.is_empty() { activation_layers(model) } else { cfg.eval.layers.clone() };
            if metric == "two_afc" {
                two_afc(model, &set, &layers)
            } else {
                jnd_map(model, &set, &layers)
            }
        }
        _ => {
            if cache.probes.is_none() {
                cache.probes = Some(ProbeSet::load(dir)?);
            }
            let set = cache.probes.as_ref().expect("loaded above");
            let layer = cfg.eval.probe_layer.unwrap_or_else(|| model.num_layers().saturating_sub(2));
            let feats = flat_features(model, &set.images, layer)?;
            let (folds, ridge) = (cfg.eval.folds, cfg.eval.ridge);
            match metric {
                "probe_lighting" => Ok(probe_classify(&feats, &set.lighting_labels(), folds, seed)?.accuracy),
                "probe_relief" => probe_regress(&feats, &set.reliefs(), ridge, folds, seed),
                _ => {
                    let gloss = cache.gloss.get_or_insert_with(|| probe_classify(&feats, &set.gloss_labels(), folds, seed));
                    let gloss = gloss.as_ref().map_err(|e| jemlab::Error::Usage(e.to_string()))?;
                    if metric == "probe_gloss" {
                        Ok(gloss.accuracy)
                    } else {
                        rating_correlation(&gloss.binary_decision()?, &set.ratings())
                    }
                }
            }
        }
    }
}

pub fn run(checkpoint: &Path, cfg: &RunConfig) -> CliResult<()> {
    let metrics = &cfg.eval.metrics;
    if metrics.is_empty() {
        return Err(CliError::config(format!("no metrics requested; choose from: {}", METRICS.join(", "))));
    }
    if let Some(bad) = metrics.iter().find(|m| !METRICS.contains(&m.as_str())) {
        return Err(CliError::config(format!("unknown metric `{bad}`; valid metrics: {}", METRICS.join(", "))));
    }
    let dirs: Vec<PathBuf> = metrics
        .iter()
        .map(|m| {
            let (key, get) = source(m);
            existing_dir(get(cfg), key).map_err(|e| e.context(format!("metric {m}")))
        })
        .collect::<CliResult<_>>()?;
    if !checkpoint.is_file() {
        return Err(CliError::config(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let out = out_dir(cfg)?;
    let mut report = MetricsReport::new();
    let mut cache = Cache::default();
    for (m, dir) in metrics.iter().zip(&dirs) {
        let outcome = compute(m, &ck.model, cfg, dir, &mut cache);
        report.record(ck.alpha, cfg.seed, &dataset_name(dir), m, outcome);
    }
    report.write(&out, REPORT_STEM)?;
    for r in &report.rows {
        let value = r.value.map_or("none".into(), |v| v.to_string());
        say!("{}\t{}\t{}\t{:?}", r.metric, r.dataset, value, r.status);
    }
    Ok(())
}
