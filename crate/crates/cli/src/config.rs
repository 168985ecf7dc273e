//! Flat `key = value` run configuration. Keys carry a section prefix
//! (`train.alpha`, `sgld.steps`); unknown keys are rejected.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use jemlab::sampler::{NoiseCoupling, SgldConfig, StepDecay};
use jemlab::trainer::{default_alpha_grid, Selection, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// `points2d` for 2-D data, `small_convnet` for images.
    Auto,
    Mlp,
    SmallConvnet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub classes: usize,
    pub points: usize,
    pub separation: f64,
    pub size: usize,
    pub congruent: usize,
    pub conflict: usize,
    /// Posterior draws per point for soft labels.
    pub annotators: usize,
    pub observers: usize,
    pub per_condition: usize,
    pub condition_noise: Vec<f64>,
    pub sensory_noise: f64,
    pub refs: usize,
    pub levels: Vec<f64>,
    pub probes: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            points: 6000,
            separation: 3.0,
            size: 16,
            congruent: 600,
            conflict: 300,
            annotators: 50,
            observers: 4,
            per_condition: 200,
            condition_noise: vec![0.0, 0.5, 1.0],
            sensory_noise: 0.5,
            refs: 20,
            levels: vec![0.05, 0.1, 0.2, 0.3, 0.5],
            probes: 240,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub metrics: Vec<String>,
    pub softlabels: Option<PathBuf>,
    pub cueconflict: Option<PathBuf>,
    pub perceptual: Option<PathBuf>,
    pub probeset: Option<PathBuf>,
    /// Layers for perceptual distances; empty means every activation layer.
    pub layers: Vec<usize>,
    /// Layer whose output feeds the linear probes; `None` means the penultimate.
    pub probe_layer: Option<usize>,
    pub folds: usize,
    pub ridge: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: Vec::new(),
            softlabels: None,
            cueconflict: None,
            perceptual: None,
            probeset: None,
            layers: Vec::new(),
            probe_layer: None,
            folds: 5,
            ridge: 1e-2,
        }
    }
}

/// Quadrature box shared by density metrics and oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { lo: -7.0, hi: 7.0, resolution: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub count: usize,
    pub steps: usize,
    /// Snapshot period; 0 writes only the first and last states.
    pub every: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { count: 4, steps: 20, every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub steps: Vec<usize>,
    pub step_size: f64,
    pub noise: f64,
    pub decay: StepDecay,
    /// Number of refined images to dump per grid point.
    pub dump: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { steps: vec![0, 5, 10, 20], step_size: 0.1, noise: 0.01, decay: StepDecay::Constant, dump: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Negates the contrastive-divergence gradient before comparison.
    SignFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Classes of the constant-zero-logit toy used when no checkpoint is given.
    pub toy_classes: usize,
    pub toy_dims: usize,
    pub chains: usize,
    pub chain_steps: usize,
    pub step_size: f64,
    pub z_tol: f64,
    pub norm_tol: f64,
    pub min_cosine: f64,
    pub max_tv: f64,
    /// Cells per axis merged into one histogram bin for the sampler TV check.
    pub tv_coarsen: usize,
    pub fault: Fault,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            toy_classes: 2,
            toy_dims: 2,
            chains: 1000,
            chain_steps: 200,
            step_size: 0.2,
            z_tol: 1e-9,
            norm_tol: 1e-9,
            min_cosine: 0.9,
            max_tv: 0.25,
            tv_coarsen: 10,
            fault: Fault::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Sweep seeds; empty means `[seed]`.
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub holdout: f64,
    pub split_seed: u64,
    pub arch: Arch,
    pub hidden: Vec<usize>,
    pub slope: f64,
    pub dropout: f64,
    pub train: TrainConfig,
    pub alphas: Vec<f64>,
    pub gen: GenConfig,
    pub eval: EvalConfig,
    pub grid: GridConfig,
    pub sample: SampleConfig,
    pub refine: RefineConfig,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: Vec::new(),
            out: None,
            threads: None,
            data_dir: None,
            holdout: 0.2,
            split_seed: 0,
            arch: Arch::Auto,
            hidden: vec![64, 64],
            slope: 0.2,
            dropout: 0.0,
            train: TrainConfig::default(),
            alphas: default_alpha_grid(),
            gen: GenConfig::default(),
            eval: EvalConfig::default(),
            grid: GridConfig::default(),
            sample: SampleConfig::default(),
            refine: RefineConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    v.parse().map_err(|e| CliError::config(format!("{key}: cannot parse `{v}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::config(format!("{key}: expected true or false, got `{v}`"))),
    }
}

fn parse_opt<T: FromStr>(key: &str, v: &str) -> Result<Option<T>, CliError>
where
    T::Err: Display,
{
    if v == "none" || v.is_empty() {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn show_opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("none".into(), |x| x.to_string())
}

fn show_path(v: &Option<PathBuf>) -> String {
    v.as_ref().map_or("none".into(), |p| p.display().to_string())
}

fn path_opt(v: &str) -> Option<PathBuf> {
    (v != "none" && !v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Reads a config file; `#` starts a comment, blank lines are ignored.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| CliError::config(format!("line {}: {}", n + 1, e.message)))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), CliError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::config(format!("override `{kv}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let t = &mut self.train;
        match key {
            "seed" => {
                self.seed = parse(key, v)?;
                t.seed = self.seed;
            }
            "seeds" => self.seeds = parse_list(key, v)?,
            "out" => self.out = path_opt(v),
            "threads" => self.threads = parse_opt(key, v)?,
            "data.dir" => self.data_dir = path_opt(v),
            "data.holdout" => self.holdout = parse(key, v)?,
            "data.split_seed" => self.split_seed = parse(key, v)?,
            "net.arch" => {
                self.arch = match v {
                    "auto" => Arch::Auto,
                    "mlp" => Arch::Mlp,
                    "small_convnet" => Arch::SmallConvnet,
                    _ => return Err(CliError::config(format!("{key}: expected auto, mlp or small_convnet, got `{v}`"))),
                }
            }
            "net.hidden" => self.hidden = parse_list(key, v)?,
            "net.slope" => self.slope = parse(key, v)?,
            "net.dropout" => self.dropout = parse(key, v)?,
            "train.alpha" => t.alpha = parse(key, v)?,
            "train.learning_rate" => t.learning_rate = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.iterations" => t.iterations = parse(key, v)?,
            "train.warmup" => t.warmup = parse(key, v)?,
            "train.label_smoothing" => t.label_smoothing = parse(key, v)?,
            "train.input_noise" => t.input_noise = parse(key, v)?,
            "train.balance_eps" => t.balance_eps = parse(key, v)?,
            "train.beta1" => t.adam.beta1 = parse(key, v)?,
            "train.beta2" => t.adam.beta2 = parse(key, v)?,
            "train.adam_eps" => t.adam.eps = parse(key, v)?,
            "train.buffer_capacity" => t.buffer_capacity = parse(key, v)?,
            "train.reinit_prob" => t.reinit_prob = parse(key, v)?,
            "train.augment" => t.augment = parse_bool(key, v)?,
            "train.eval_every" => t.eval_every = parse_opt(key, v)?,
            "train.selection" => {
                t.selection = match v {
                    "final" => Selection::Final,
                    "best_holdout_loss" => Selection::BestHoldoutLoss,
                    _ => return Err(CliError::config(format!("{key}: expected final or best_holdout_loss, got `{v}`"))),
                }
            }
            "sweep.alphas" => self.alphas = parse_list(key, v)?,
            "sgld.steps" => t.sgld.steps = parse(key, v)?,
            "sgld.step_size" => t.sgld.step_size = parse(key, v)?,
            "sgld.noise" => t.sgld.noise = parse(key, v)?,
            "sgld.clip" => {
                t.sgld.clip = if v == "none" {
                    None
                } else {
                    match parse_list::<f64>(key, v)?.as_slice() {
                        [lo, hi] => Some((*lo, *hi)),
                        _ => return Err(CliError::config(format!("{key}: expected `lo,hi` or none, got `{v}`"))),
                    }
                }
            }
            "sgld.decay" => t.sgld.decay = parse_decay(key, v)?,
            "sgld.coupling" => {
                t.sgld.coupling = match v {
                    "decoupled" => NoiseCoupling::Decoupled,
                    "langevin" => NoiseCoupling::Langevin,
                    _ => return Err(CliError::config(format!("{key}: expected decoupled or langevin, got `{v}`"))),
                }
            }
            "gen.classes" => self.gen.classes = parse(key, v)?,
            "gen.points" => self.gen.points = parse(key, v)?,
            "gen.separation" => self.gen.separation = parse(key, v)?,
            "gen.size" => self.gen.size = parse(key, v)?,
            "gen.congruent" => self.gen.congruent = parse(key, v)?,
            "gen.conflict" => self.gen.conflict = parse(key, v)?,
            "gen.annotators" => self.gen.annotators = parse(key, v)?,
            "gen.observers" => self.gen.observers = parse(key, v)?,
            "gen.per_condition" => self.gen.per_condition = parse(key, v)?,
            "gen.condition_noise" => self.gen.condition_noise = parse_list(key, v)?,
            "gen.sensory_noise" => self.gen.sensory_noise = parse(key, v)?,
            "gen.refs" => self.gen.refs = parse(key, v)?,
            "gen.levels" => self.gen.levels = parse_list(key, v)?,
            "gen.probes" => self.gen.probes = parse(key, v)?,
            "eval.metrics" => self.eval.metrics = parse_list(key, v)?,
            "eval.softlabels" => self.eval.softlabels = path_opt(v),
            "eval.cueconflict" => self.eval.cueconflict = path_opt(v),
            "eval.perceptual" => self.eval.perceptual = path_opt(v),
            "eval.probeset" => self.eval.probeset = path_opt(v),
            "eval.layers" => self.eval.layers = parse_list(key, v)?,
            "eval.probe_layer" => self.eval.probe_layer = parse_opt(key, v)?,
            "eval.folds" => self.eval.folds = parse(key, v)?,
            "eval.ridge" => self.eval.ridge = parse(key, v)?,
            "grid.lo" => self.grid.lo = parse(key, v)?,
            "grid.hi" => self.grid.hi = parse(key, v)?,
            "grid.resolution" => self.grid.resolution = parse(key, v)?,
            "sample.count" => self.sample.count = parse(key, v)?,
            "sample.steps" => self.sample.steps = parse(key, v)?,
            "sample.every" => self.sample.every = parse(key, v)?,
            "refine.steps" => self.refine.steps = parse_list(key, v)?,
            "refine.step_size" => self.refine.step_size = parse(key, v)?,
            "refine.noise" => self.refine.noise = parse(key, v)?,
            "refine.decay" => self.refine.decay = parse_decay(key, v)?,
            "refine.dump" => self.refine.dump = parse(key, v)?,
            "oracle.toy_classes" => self.oracle.toy_classes = parse(key, v)?,
            "oracle.toy_dims" => self.oracle.toy_dims = parse(key, v)?,
            "oracle.chains" => self.oracle.chains = parse(key, v)?,
            "oracle.chain_steps" => self.oracle.chain_steps = parse(key, v)?,
            "oracle.step_size" => self.oracle.step_size = parse(key, v)?,
            "oracle.z_tol" => self.oracle.z_tol = parse(key, v)?,
            "oracle.norm_tol" => self.oracle.norm_tol = parse(key, v)?,
            "oracle.min_cosine" => self.oracle.min_cosine = parse(key, v)?,
            "oracle.max_tv" => self.oracle.max_tv = parse(key, v)?,
            "oracle.tv_coarsen" => self.oracle.tv_coarsen = parse(key, v)?,
            "oracle.fault" => {
                self.oracle.fault = match v {
                    "none" => Fault::None,
                    "sign_flip" => Fault::SignFlip,
                    _ => return Err(CliError::config(format!("{key}: expected none or sign_flip, got `{v}`"))),
                }
            }
            _ => return Err(CliError::config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a form `apply_text` reads back.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let g = &self.gen;
        let e = &self.eval;
        let o = &self.oracle;
        vec![
            ("seed", self.seed.to_string()),
            ("seeds", join(&self.seeds)),
            ("out", show_path(&self.out)),
            ("threads", show_opt(&self.threads)),
            ("data.dir", show_path(&self.data_dir)),
            ("data.holdout", self.holdout.to_string()),
            ("data.split_seed", self.split_seed.to_string()),
            (
                "net.arch",
                match self.arch {
                    Arch::Auto => "auto",
                    Arch::Mlp => "mlp",
                    Arch::SmallConvnet => "small_convnet",
                }
                .into(),
            ),
            ("net.hidden", join(&self.hidden)),
            ("net.slope", self.slope.to_string()),
            ("net.dropout", self.dropout.to_string()),
            ("train.alpha", t.alpha.to_string()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.iterations", t.iterations.to_string()),
            ("train.warmup", t.warmup.to_string()),
            ("train.label_smoothing", t.label_smoothing.to_string()),
            ("train.input_noise", t.input_noise.to_string()),
            ("train.balance_eps", t.balance_eps.to_string()),
            ("train.beta1", t.adam.beta1.to_string()),
            ("train.beta2", t.adam.beta2.to_string()),
            ("train.adam_eps", t.adam.eps.to_string()),
            ("train.buffer_capacity", t.buffer_capacity.to_string()),
            ("train.reinit_prob", t.reinit_prob.to_string()),
            ("train.augment", t.augment.to_string()),
            ("train.eval_every", show_opt(&t.eval_every)),
            (
                "train.selection",
                match t.selection {
                    Selection::Final => "final",
                    Selection::BestHoldoutLoss => "best_holdout_loss",
                }
                .into(),
            ),
            ("sweep.alphas", join(&self.alphas)),
            ("sgld.steps", t.sgld.steps.to_string()),
            ("sgld.step_size", t.sgld.step_size.to_string()),
            ("sgld.noise", t.sgld.noise.to_string()),
            ("sgld.clip", t.sgld.clip.map_or("none".into(), |(lo, hi)| format!("{lo},{hi}"))),
            ("sgld.decay", show_decay(t.sgld.decay).into()),
            (
                "sgld.coupling",
                match t.sgld.coupling {
                    NoiseCoupling::Decoupled => "decoupled",
                    NoiseCoupling::Langevin => "langevin",
                }
                .into(),
            ),
            ("gen.classes", g.classes.to_string()),
            ("gen.points", g.points.to_string()),
            ("gen.separation", g.separation.to_string()),
            ("gen.size", g.size.to_string()),
            ("gen.congruent", g.congruent.to_string()),
            ("gen.conflict", g.conflict.to_string()),
            ("gen.annotators", g.annotators.to_string()),
            ("gen.observers", g.observers.to_string()),
            ("gen.per_condition", g.per_condition.to_string()),
            ("gen.condition_noise", join(&g.condition_noise)),
            ("gen.sensory_noise", g.sensory_noise.to_string()),
            ("gen.refs", g.refs.to_string()),
            ("gen.levels", join(&g.levels)),
            ("gen.probes", g.probes.to_string()),
            ("eval.metrics", e.metrics.join(",")),
            ("eval.softlabels", show_path(&e.softlabels)),
            ("eval.cueconflict", show_path(&e.cueconflict)),
            ("eval.perceptual", show_path(&e.perceptual)),
            ("eval.probeset", show_path(&e.probeset)),
            ("eval.layers", join(&e.layers)),
            ("eval.probe_layer", show_opt(&e.probe_layer)),
            ("eval.folds", e.folds.to_string()),
            ("eval.ridge", e.ridge.to_string()),
            ("grid.lo", self.grid.lo.to_string()),
            ("grid.hi", self.grid.hi.to_string()),
            ("grid.resolution", self.grid.resolution.to_string()),
            ("sample.count", self.sample.count.to_string()),
            ("sample.steps", self.sample.steps.to_string()),
            ("sample.every", self.sample.every.to_string()),
            ("refine.steps", join(&self.refine.steps)),
            ("refine.step_size", self.refine.step_size.to_string()),
            ("refine.noise", self.refine.noise.to_string()),
            ("refine.decay", show_decay(self.refine.decay).into()),
            ("refine.dump", self.refine.dump.to_string()),
            ("oracle.toy_classes", o.toy_classes.to_string()),
            ("oracle.toy_dims", o.toy_dims.to_string()),
            ("oracle.chains", o.chains.to_string()),
            ("oracle.chain_steps", o.chain_steps.to_string()),
            ("oracle.step_size", o.step_size.to_string()),
            ("oracle.z_tol", o.z_tol.to_string()),
            ("oracle.norm_tol", o.norm_tol.to_string()),
            ("oracle.min_cosine", o.min_cosine.to_string()),
            ("oracle.max_tv", o.max_tv.to_string()),
            ("oracle.tv_coarsen", o.tv_coarsen.to_string()),
            (
                "oracle.fault",
                match o.fault {
                    Fault::None => "none",
                    Fault::SignFlip => "sign_flip",
                }
                .into(),
            ),
        ]
    }

    /// The resolved configuration as config-file text.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Seeds a sweep runs over.
    pub fn sweep_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Refinement sampler settings; the step count comes from the grid.
    pub fn refine_sgld(&self) -> SgldConfig {
        SgldConfig {
            steps: self.refine.steps.iter().copied().max().unwrap_or(0).max(1),
            step_size: self.refine.step_size,
            noise: self.refine.noise,
            decay: self.refine.decay,
            ..self.train.sgld.clone()
        }
    }
}

fn parse_decay(key: &str, v: &str) -> Result<StepDecay, CliError> {
    match v {
        "linear" => Ok(StepDecay::Linear),
        "constant" => Ok(StepDecay::Constant),
        _ => Err(CliError::config(format!("{key}: expected linear or constant, got `{v}`"))),
    }
}

fn show_decay(d: StepDecay) -> &'static str {
    match d {
        StepDecay::Linear => "linear",
        StepDecay::Constant => "constant",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_text_reads_back() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("train.alpha = 0.3\nsgld.clip = none\nout = /tmp/x\neval.metrics = shape_bias,two_afc\nseeds = 1,2\n").unwrap();
        let mut again = RunConfig::default();
        again.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(RunConfig::default().to_text(), {
            let mut d = RunConfig::default();
            d.apply_text(&RunConfig::default().to_text()).unwrap();
            d.to_text()
        });
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("train.alpah = 0.5").unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("train.alpah"));
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# header\n\nseed = 7  # trailing\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.seed, 7);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let mut cfg = RunConfig::default();
        for line in ["train.iterations = lots", "sgld.clip = 1", "train.augment = maybe", "no equals sign"] {
            assert_eq!(cfg.apply_text(line).unwrap_err().code, 2, "{line}");
        }
    }
}
