use std::path::PathBuf;

use jemlab::synthdata::humans::save_stimulus_inputs;
use jemlab::synthdata::{
    gen_cue_conflict, gen_mixture2d, gen_observers, gen_perceptual_with, gen_probeset, gen_soft_labels, ObserverConfig,
    PerceptualConfig,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{out_dir, print_manifest};

pub const KINDS: [&str; 5] = ["mixture2d", "cueconflict", "softlabels", "perceptual", "probeset"];

pub fn run(kind: &str, cfg: &RunConfig) -> CliResult<()> {
    if !KINDS.contains(&kind) {
        return Err(CliError::config(format!("unknown dataset kind `{kind}`; valid kinds: {}", KINDS.join(", "))));
    }
    let g = &cfg.gen;
    let seed = cfg.seed;
    let dir = out_dir(cfg)?;
    let files: Vec<PathBuf> = match kind {
        "mixture2d" => gen_mixture2d(g.classes, g.points, g.separation, seed)?.save(&dir)?,
        "cueconflict" => gen_cue_conflict(g.classes, g.size, g.congruent, g.conflict, seed)?.save(&dir)?,
        "softlabels" => {
            // Annotated points plus a separate observer experiment on the same mixture.
            let pts = gen_mixture2d(g.classes, g.points, g.separation, seed)?;
            let soft = gen_soft_labels(&pts, g.annotators, seed.wrapping_add(1))?;
            let obs_cfg = ObserverConfig {
                per_condition: g.per_condition,
                condition_noise: g.condition_noise.clone(),
                observers: g.observers,
                sensory_noise: g.sensory_noise,
            };
            let (responses, inputs) = gen_observers(&pts.spec, &obs_cfg, seed.wrapping_add(2))?;
            let mut files = pts.save(&dir)?;
            files.extend(soft.save(&dir)?);
            files.extend(responses.save(&dir)?);
            files.push(save_stimulus_inputs(&dir, &inputs)?);
            files
        }
        "perceptual" => {
            let pc = PerceptualConfig { size: g.size, ..PerceptualConfig::default() };
            gen_perceptual_with(g.refs, &g.levels, &pc, seed)?.save(&dir)?
        }
        _ => gen_probeset(g.probes, g.size, seed)?.save(&dir)?,
    };
    print_manifest(&files)
}
