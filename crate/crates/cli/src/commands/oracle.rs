use std::path::Path;

use jemlab::network::{LayerSpec, NetworkSpec};
use jemlab::oracle::{cd_cosine, exact_density, histogram_divergence, log_partition_function, Grid};
use jemlab::sampler::{sample_chain, InitBox, NoiseCoupling, SgldConfig, StepDecay};
use jemlab::{Checkpoint, EnergyModel, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Fault, RunConfig};
use crate::data::{existing_dir, load_training};
use crate::error::{CliError, CliResult, EXIT_ORACLE};

/// A model whose logits are zero everywhere: density uniform on the box,
/// partition function `volume × classes`.
pub fn constant_logit_model(dims: usize, classes: usize) -> CliResult<EnergyModel> {
    let spec = NetworkSpec {
        input_shape: vec![dims],
        layers: vec![LayerSpec::Affine { inputs: dims, outputs: classes }],
        num_classes: classes,
        dropout: 0.0,
    };
    Ok(EnergyModel::from_parts(spec, vec![Tensor::zeros(&[classes, dims]), Tensor::zeros(&[classes])])?)
}

struct Check {
    name: &'static str,
    value: f64,
    ok: bool,
    bound: String,
}

fn show(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.6}")
    }
}

fn print_check(c: &Check) {
    say!("{}\t{}\t{}\t{}", c.name, show(c.value), c.bound, if c.ok { "pass" } else { "FAIL" });
}

pub fn run(checkpoint: Option<&Path>, cfg: &RunConfig) -> CliResult<()> {
    let o = &cfg.oracle;
    let (model, toy) = match checkpoint {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::config(format!("checkpoint {} does not exist", p.display())));
            }
            (Checkpoint::load(p)?.model, false)
        }
        None => (constant_logit_model(o.toy_dims, o.toy_classes)?, true),
    };
    let dims = match model.spec().input_shape.as_slice() {
        [d] if (1..=3).contains(d) => *d,
        s => return Err(CliError::config(format!("oracle checks need 1-3 dimensional inputs, got {s:?}"))),
    };
    let grid = Grid::square(dims, cfg.grid.lo, cfg.grid.hi, cfg.grid.resolution)?;
    let mut checks = Vec::new();

    let log_z = log_partition_function(&model, &grid)?;
    say!("log_z\t{log_z}");
    if toy {
        let expected = grid.volume() * o.toy_classes as f64;
        let rel = (log_z.exp() - expected).abs() / expected;
        checks.push(Check { name: "z_relative_error", value: rel, ok: rel <= o.z_tol, bound: format!("<= {}", show(o.z_tol)) });
    } else {
        say!("z\t{}", log_z.exp());
    }
    let field = exact_density(&model, &grid)?;
    let residual = (field.total_mass() - 1.0).abs();
    checks.push(Check { name: "normalization_residual", value: residual, ok: residual <= o.norm_tol, bound: format!("<= {}", show(o.norm_tol)) });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sgld = SgldConfig {
        steps: o.chain_steps,
        step_size: o.step_size,
        noise: 0.0,
        clip: Some((cfg.grid.lo, cfg.grid.hi)),
        decay: StepDecay::Constant,
        coupling: NoiseCoupling::Langevin,
    };
    let init = InitBox::uniform(dims, cfg.grid.lo, cfg.grid.hi);
    let x0 = Tensor::new(vec![o.chains, dims], (0..o.chains).flat_map(|_| init.sample(&mut rng)).collect())?;
    let chains = sample_chain(&model, &x0, &sgld, &mut rng)?;

    match cfg.data_dir.as_ref() {
        Some(_) => {
            let dir = existing_dir(cfg.data_dir.as_ref(), "dataset")?;
            let loaded = load_training(&dir)?;
            if loaded.data.input_shape() != [dims] {
                return Err(CliError::config("dataset and model input sizes differ"));
            }
            let idx = loaded.data.sample_indices(o.chains, &mut rng);
            let batch = loaded.data.inputs().select_rows(&idx);
            let mut cos = cd_cosine(&model, &grid, &batch, &chains)?;
            if o.fault == Fault::SignFlip {
                cos = -cos;
            }
            checks.push(Check { name: "cd_cosine", value: cos, ok: cos >= o.min_cosine, bound: format!(">= {}", show(o.min_cosine)) });
        }
        None => say!("cd_cosine\tskipped (no data.dir)"),
    }

    let coarse = field.coarsened(o.tv_coarsen)?;
    let tv = histogram_divergence(&chains, &coarse)?.tv;
    checks.push(Check { name: "sgld_tv", value: tv, ok: tv <= o.max_tv, bound: format!("<= {}", show(o.max_tv)) });

    for c in &checks {
        print_check(c);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.ok).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::new(EXIT_ORACLE, format!("oracle tolerance violated: {}", failed.join(", "))))
    }
}
