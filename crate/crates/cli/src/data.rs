//! Locating datasets on disk and choosing a network for them.

use std::path::{Path, PathBuf};

use jemlab::network::NetworkSpec;
use jemlab::oracle::{DensityField, Grid};
use jemlab::synthdata::cueconflict::IMAGES_FILE;
use jemlab::synthdata::mixture::POINTS_FILE;
use jemlab::synthdata::{CueConflictSet, LabeledPoints2D, MixtureSpec};
use jemlab::Dataset;

use crate::config::{Arch, RunConfig};
use crate::error::{CliError, CliResult};

/// A trainable dataset and, for mixtures, the generating density.
pub struct Loaded {
    pub data: Dataset,
    pub mixture: Option<MixtureSpec>,
    pub name: String,
}

/// Checks a required directory exists; a missing one is a config error.
pub fn existing_dir(dir: Option<&PathBuf>, what: &str) -> CliResult<PathBuf> {
    let d = dir.ok_or_else(|| CliError::config(format!("no {what} directory configured")))?;
    if !d.is_dir() {
        return Err(CliError::config(format!("{what} directory {} does not exist", d.display())));
    }
    Ok(d.clone())
}

pub fn dataset_name(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Loads a mixture (`points.csv`) or cue-conflict (`images.jtns`) directory.
/// Cue-conflict sets train on their congruent images with shape labels.
pub fn load_training(dir: &Path) -> CliResult<Loaded> {
    let name = dataset_name(dir);
    if dir.join(POINTS_FILE).is_file() {
        let pts = LabeledPoints2D::load(dir)?;
        return Ok(Loaded { data: pts.to_dataset()?, mixture: Some(pts.spec), name });
    }
    if dir.join(IMAGES_FILE).is_file() {
        let set = CueConflictSet::load(dir, None)?;
        return Ok(Loaded { data: set.training_set()?, mixture: None, name });
    }
    Err(CliError::config(format!("{} holds neither {POINTS_FILE} nor {IMAGES_FILE}", dir.display())))
}

/// Training and held-out parts per `data.holdout`.
pub fn split(cfg: &RunConfig, data: &Dataset) -> (Dataset, Option<Dataset>) {
    if cfg.holdout > 0.0 {
        let (tr, ho) = data.split(cfg.holdout, cfg.split_seed);
        (tr, Some(ho))
    } else {
        (data.clone(), None)
    }
}

pub fn network_for(cfg: &RunConfig, data: &Dataset) -> CliResult<NetworkSpec> {
    let shape = data.input_shape();
    let k = data.num_classes();
    let image = shape.len() == 3;
    let mut spec = match (cfg.arch, image) {
        (Arch::Auto | Arch::SmallConvnet, true) => {
            let (c, h, w) = (shape[0], shape[1], shape[2]);
            if h != w || h % 4 != 0 {
                return Err(CliError::config(format!("small_convnet needs square images with side divisible by 4, got {h}x{w}")));
            }
            NetworkSpec::small_convnet(c, h, k)
        }
        (Arch::Auto | Arch::Mlp, false) if shape.len() == 1 => NetworkSpec::mlp(shape[0], &cfg.hidden, k, cfg.slope),
        (Arch::SmallConvnet, false) => return Err(CliError::config("small_convnet needs image data")),
        _ => return Err(CliError::config(format!("no network for inputs shaped {shape:?}"))),
    };
    spec.dropout = cfg.dropout;
    spec.validate()?;
    Ok(spec)
}

pub fn grid(cfg: &RunConfig, dims: usize) -> CliResult<Grid> {
    Ok(Grid::square(dims, cfg.grid.lo, cfg.grid.hi, cfg.grid.resolution)?)
}

/// The mixture's density restricted to the configured grid.
pub fn reference_density(cfg: &RunConfig, spec: &MixtureSpec) -> CliResult<DensityField> {
    Ok(DensityField::from_log_density(grid(cfg, 2)?, |x| spec.log_density(x))?)
}
