//! Energy algebra over classifier logits.
//!
//! With logits `f(x)`:
//! joint energy `E(x, y) = -f(x)[y]`, marginal energy `E(x) = -logsumexp f(x)`,
//! class posterior `p(y|x) = softmax f(x)`. The partition function never
//! appears here; only differences in which it cancels are computed. Exact
//! normalization on small domains is in [`crate::oracle`].

use crate::autodiff::{logsumexp, softmax, Tape, Var};
use crate::error::{Error, Result};
use crate::network::EnergyModel;
use crate::tensor::Tensor;

pub fn joint_energy_from_logits(logits: &[f64], y: usize) -> Result<f64> {
    logits.get(y).map(|v| -v).ok_or(Error::Label { label: y, classes: logits.len() })
}

pub fn marginal_energy_from_logits(logits: &[f64]) -> f64 {
    -logsumexp(logits)
}

pub fn posterior_from_logits(logits: &[f64]) -> Vec<f64> {
    softmax(logits)
}

/// `[E(x,y) - E(x)] + log p(y|x)`, which is zero up to rounding.
pub fn residual_from_logits(logits: &[f64], y: usize) -> Result<f64> {
    let joint = joint_energy_from_logits(logits, y)?;
    let marginal = marginal_energy_from_logits(logits);
    let log_post = logits[y] - logsumexp(logits);
    Ok((joint - marginal) + log_post)
}

/// `E(x, y)` for one unbatched input.
pub fn joint_energy(model: &EnergyModel, x: &Tensor, y: usize) -> Result<f64> {
    joint_energy_from_logits(&model.logits(x)?, y)
}

/// `E(x)` for one unbatched input.
pub fn marginal_energy(model: &EnergyModel, x: &Tensor) -> Result<f64> {
    Ok(marginal_energy_from_logits(&model.logits(x)?))
}

/// `p(·|x)` for one unbatched input.
pub fn class_posterior(model: &EnergyModel, x: &Tensor) -> Result<Vec<f64>> {
    Ok(posterior_from_logits(&model.logits(x)?))
}

pub fn decomposition_residual(model: &EnergyModel, x: &Tensor, y: usize) -> Result<f64> {
    residual_from_logits(&model.logits(x)?, y)
}

/// Marginal energy of every row of a batch.
pub fn marginal_energies(model: &EnergyModel, batch: &Tensor) -> Result<Vec<f64>> {
    let logits = model.forward(batch)?;
    Ok(logits.data().chunks(model.num_classes()).map(marginal_energy_from_logits).collect())
}

/// Posterior rows `[B, K]` for a batch.
pub fn posteriors(model: &EnergyModel, batch: &Tensor) -> Result<Tensor> {
    let logits = model.forward(batch)?;
    let data = logits.data().chunks(model.num_classes()).flat_map(posterior_from_logits).collect();
    Tensor::new(logits.shape().to_vec(), data)
}

/// Per-row marginal energies `[B]` on a tape.
pub fn record_marginal_energy(tape: &mut Tape, logits: Var) -> Result<Var> {
    let lse = tape.logsumexp(logits)?;
    tape.scale(lse, -1.0)
}

/// Marginal energies and `∇_x E(x)` for every row of a batch.
pub fn marginal_energy_input_grad(model: &EnergyModel, batch: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false);
    let x = tape.leaf(batch.clone());
    let logits = model.record(&mut tape, &params, x, None)?;
    let energies = record_marginal_energy(&mut tape, logits)?;
    // rows are independent, so the gradient of the sum is the per-row gradient
    let total = tape.sum(energies)?;
    let mut grads = tape.backward(total)?;
    let g = grads.take(x).expect("input is a differentiable leaf");
    Ok((tape.value(energies).data().to_vec(), g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LayerSpec, NetworkSpec};
    use std::f64::consts::LN_2;

    #[test]
    fn joint_energy_examples() {
        assert_eq!(joint_energy_from_logits(&[2.0, -1.0], 0).unwrap(), -2.0);
        assert_eq!(joint_energy_from_logits(&[2.0, -1.0], 1).unwrap(), 1.0);
        assert_eq!(joint_energy_from_logits(&[0.0, 0.0, 0.0], 2).unwrap(), 0.0);
        assert!(matches!(joint_energy_from_logits(&[0.0, 0.0], 2), Err(Error::Label { label: 2, classes: 2 })));
    }

    #[test]
    fn marginal_energy_examples() {
        assert!((marginal_energy_from_logits(&[0.0, 0.0]) + LN_2).abs() < 1e-15);
        assert_eq!(marginal_energy_from_logits(&[3.5]), -3.5);
        assert_eq!(marginal_energy_from_logits(&[1000.0, -1000.0]), -1000.0);
    }

    #[test]
    fn posterior_examples() {
        assert_eq!(posterior_from_logits(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = posterior_from_logits(&[3.0_f64.ln(), 0.0]);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        let shifted = posterior_from_logits(&[3.0_f64.ln() + 123.0, 123.0]);
        assert!((shifted[0] - p[0]).abs() < 1e-12);
    }

    #[test]
    fn residual_examples() {
        assert!(residual_from_logits(&[2.0, -1.0], 0).unwrap().abs() < 1e-15);
        assert_eq!(residual_from_logits(&[4.2], 0).unwrap(), 0.0);
    }

    #[test]
    fn model_level_functions_agree_with_logits() {
        let spec = NetworkSpec {
            input_shape: vec![2],
            layers: vec![LayerSpec::Affine { inputs: 2, outputs: 2 }],
            num_classes: 2,
            dropout: 0.0,
        };
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[2]);
        let m = EnergyModel::from_parts(spec, vec![w, b]).unwrap();
        let x = Tensor::vector(&[2.0, -1.0]);
        assert_eq!(joint_energy(&m, &x, 0).unwrap(), -2.0);
        assert!(decomposition_residual(&m, &x, 1).unwrap().abs() < 1e-14);
        let p = class_posterior(&m, &x).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((marginal_energy(&m, &x).unwrap() + logsumexp(&[2.0, -1.0])).abs() < 1e-15);
    }

    #[test]
    fn input_gradient_of_identity_logits_is_negative_softmax() {
        let spec = NetworkSpec {
            input_shape: vec![2],
            layers: vec![LayerSpec::Affine { inputs: 2, outputs: 2 }],
            num_classes: 2,
            dropout: 0.0,
        };
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = EnergyModel::from_parts(spec, vec![w, Tensor::zeros(&[2])]).unwrap();
        let batch = Tensor::new(vec![2, 2], vec![0.0, 0.0, 3.0_f64.ln(), 0.0]).unwrap();
        let (e, g) = marginal_energy_input_grad(&m, &batch).unwrap();
        assert!((e[0] + LN_2).abs() < 1e-15);
        assert!((g.data()[0] + 0.5).abs() < 1e-15);
        assert!((g.data()[2] + 0.75).abs() < 1e-15 && (g.data()[3] + 0.25).abs() < 1e-15);
    }
}
