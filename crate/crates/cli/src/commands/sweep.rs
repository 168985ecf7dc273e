use jemlab::sweep::{run_dir_name, sweep_alpha, write_consolidated, SweepEntry, SweepOptions};

use crate::config::RunConfig;
use crate::data::{existing_dir, load_training, network_for, reference_density, split};
use crate::error::{CliError, CliResult, EXIT_DIVERGENCE};
use crate::output::{ensure_dir, out_dir, write_config_snapshot};

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let dir = existing_dir(cfg.data_dir.as_ref(), "dataset")?;
    let loaded = load_training(&dir)?;
    let spec = network_for(cfg, &loaded.data)?;
    cfg.train.validate()?;
    if cfg.alphas.is_empty() {
        return Err(CliError::config("sweep.alphas is empty"));
    }
    let root = out_dir(cfg)?;
    write_config_snapshot(&root, cfg)?;
    let reference = loaded.mixture.as_ref().map(|m| reference_density(cfg, m)).transpose()?;
    let (tr, ho) = split(cfg, &loaded.data);
    let seeds = cfg.sweep_seeds();
    let mut all: Vec<SweepEntry> = Vec::new();
    for &seed in &seeds {
        let seed_dir = if seeds.len() == 1 { root.clone() } else { root.join(format!("seed_{seed}")) };
        ensure_dir(&seed_dir)?;
        let mut run_cfg = cfg.clone();
        run_cfg.set("seed", &seed.to_string())?;
        let opts = SweepOptions {
            out_dir: Some(seed_dir.clone()),
            threads: cfg.threads,
            reference: reference.clone(),
            dataset_name: loaded.name.clone(),
        };
        let entries = sweep_alpha(&tr, ho.as_ref(), &spec, &run_cfg.train, &cfg.alphas, &opts)?;
        for e in &entries {
            let run_dir = seed_dir.join(run_dir_name(e.alpha));
            ensure_dir(&run_dir)?;
            let mut snap = run_cfg.clone();
            snap.train.alpha = e.alpha;
            snap.out = Some(run_dir.clone());
            write_config_snapshot(&run_dir, &snap)?;
            match &e.failure {
                None => say!("seed {seed} alpha {:.1}: ok ({} iterations)", e.alpha, e.log.records.len()),
                Some(r) => say!("seed {seed} alpha {:.1}: failed: {r}", e.alpha),
            }
        }
        all.extend(entries);
    }
    write_consolidated(&root, &all)?;
    if all.iter().any(|e| e.failure.is_none()) {
        Ok(())
    } else {
        Err(CliError::new(EXIT_DIVERGENCE, "every run in the sweep failed"))
    }
}
