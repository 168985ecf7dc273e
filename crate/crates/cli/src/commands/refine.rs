use std::path::Path;

use jemlab::metrics::{shape_bias, ShapeBiasMode};
use jemlab::sampler::refine;
use jemlab::synthdata::formats::write_csv;
use jemlab::synthdata::CueConflictSet;
use jemlab::trainer::predict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::commands::sample::load_image_model;
use crate::config::RunConfig;
use crate::data::existing_dir;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, out_dir, print_manifest, write_image};

pub const REFINE_FILE: &str = "refine_shape_bias.csv";

pub fn run(checkpoint: &Path, cfg: &RunConfig) -> CliResult<()> {
    if cfg.refine.steps.is_empty() {
        return Err(CliError::config("refine.steps is empty"));
    }
    let model = load_image_model(checkpoint)?;
    let dir = existing_dir(cfg.data_dir.as_ref(), "cue-conflict dataset")?;
    let set = CueConflictSet::load(&dir, Some(model.num_classes()))?.conflict_subset();
    if set.is_empty() {
        return Err(CliError::config("the cue-conflict set has no conflict images"));
    }
    let out = out_dir(cfg)?;
    let sgld = cfg.refine_sgld();
    let max = sgld.steps.min(cfg.refine.steps.iter().copied().max().unwrap_or(0));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let snaps = refine(&model, &set.images, max, &sgld, &mut rng)?;
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for &t in &cfg.refine.steps {
        let preds = predict(&model, &snaps[t])?;
        let sb = shape_bias(&preds, &set.shape_labels, &set.texture_labels, ShapeBiasMode::CueDecisions);
        let value = sb.as_ref().map_or("none".into(), |v| v.to_string());
        say!("steps {t}\tshape_bias {value}");
        rows.push(vec![t.to_string(), value]);
        if cfg.refine.dump > 0 {
            let img_dir = out.join("refined");
            ensure_dir(&img_dir)?;
            for i in 0..cfg.refine.dump.min(set.len()) {
                files.push(write_image(&img_dir, &format!("image_{i:03}_step_{t:04}"), &snaps[t], i)?);
            }
        }
    }
    let csv = out.join(REFINE_FILE);
    write_csv(&csv, &["steps", "shape_bias"], rows)?;
    files.insert(0, csv);
    print_manifest(&files)
}
