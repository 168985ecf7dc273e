use jemlab::sweep::{CHECKPOINT_FILE, LOG_FILE};
use jemlab::trainer::train;

use crate::config::RunConfig;
use crate::data::{existing_dir, load_training, network_for, split};
use crate::error::{CliError, CliResult};
use crate::output::{out_dir, write_config_snapshot};

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let dir = existing_dir(cfg.data_dir.as_ref(), "dataset")?;
    let loaded = load_training(&dir)?;
    let spec = network_for(cfg, &loaded.data)?;
    cfg.train.validate()?;
    let out = out_dir(cfg)?;
    write_config_snapshot(&out, cfg)?;
    let (tr, ho) = split(cfg, &loaded.data);
    match train(&tr, ho.as_ref(), &spec, &cfg.train) {
        Ok(o) => {
            o.checkpoint.save(out.join(CHECKPOINT_FILE))?;
            o.log.write_csv(out.join(LOG_FILE))?;
            let last = o.log.records.last();
            say!(
                "trained alpha={} iterations={} final_loss={} holdout_acc={}",
                cfg.train.alpha,
                o.log.records.len(),
                last.map_or(f64::NAN, |r| r.loss),
                last.and_then(|r| r.holdout_acc).map_or("none".into(), |a| a.to_string())
            );
            Ok(())
        }
        Err(f) => {
            // Keep whatever made it to disk before the failure.
            f.last_good.save(out.join(CHECKPOINT_FILE))?;
            f.log.write_csv(out.join(LOG_FILE))?;
            let mut e = CliError::from(f.error);
            e.message = format!("training stopped after {} iterations (last good checkpoint at step {}): {}", f.log.records.len(), f.last_good.step, e.message);
            Err(e)
        }
    }
}
