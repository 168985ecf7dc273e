use std::path::{Path, PathBuf};

use jemlab::sampler::{refine, InitBox};
use jemlab::{Checkpoint, EnergyModel, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{out_dir, print_manifest, write_image};

/// Loads a checkpoint whose model reads `C×H×W` images.
pub fn load_image_model(path: &Path) -> CliResult<EnergyModel> {
    if !path.is_file() {
        return Err(CliError::config(format!("checkpoint {} does not exist", path.display())));
    }
    let ck = Checkpoint::load(path)?;
    if ck.model.spec().input_shape.len() != 3 {
        return Err(CliError::config(format!("checkpoint model reads {:?} inputs, not images", ck.model.spec().input_shape)));
    }
    Ok(ck.model)
}

/// Snapshot indices written for a chain of `steps` updates.
pub fn snapshot_steps(steps: usize, every: usize) -> Vec<usize> {
    let mut s: Vec<usize> = if every == 0 { vec![0] } else { (0..=steps).step_by(every).collect() };
    if s.last() != Some(&steps) {
        s.push(steps);
    }
    s
}

pub fn run(checkpoint: &Path, cfg: &RunConfig) -> CliResult<()> {
    let model = load_image_model(checkpoint)?;
    let sc = &cfg.sample;
    if sc.count == 0 {
        return Err(CliError::config("sample.count must be positive"));
    }
    let out = out_dir(cfg)?;
    let shape = model.spec().input_shape.clone();
    let len: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = InitBox::uniform(len, -1.0, 1.0);
    let data: Vec<f64> = (0..sc.count).flat_map(|_| init.sample(&mut rng)).collect();
    let mut batch_shape = vec![sc.count];
    batch_shape.extend(&shape);
    let x0 = Tensor::new(batch_shape, data)?;
    let snaps = refine(&model, &x0, sc.steps, &cfg.train.sgld, &mut rng)?;
    let mut files: Vec<PathBuf> = Vec::new();
    for t in snapshot_steps(sc.steps, sc.every) {
        for i in 0..sc.count {
            files.push(write_image(&out, &format!("sample_{i:03}_step_{t:04}"), &snaps[t], i)?);
        }
    }
    print_manifest(&files)
}
