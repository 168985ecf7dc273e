//! Input-gradient saliency and its rank agreement with reference importance maps.

use crate::autodiff::Tape;
use crate::energy::record_marginal_energy;
use crate::error::{Error, Result};
use crate::network::EnergyModel;
use crate::tensor::Tensor;
use crate::trainer::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SaliencyMode {
    /// Gradient of the predicted class logit.
    #[default]
    ClassLogit,
    /// Gradient of the marginal energy `-logsumexp f(x)`.
    MarginalEnergy,
}

/// `|∂ s / ∂ x|` summed over channels for every image of an `N×C×H×W` batch.
pub fn saliency_maps(model: &EnergyModel, images: &Tensor, mode: SaliencyMode) -> Result<Tensor> {
    if images.ndim() != 4 {
        return Err(Error::Dimension(format!("saliency needs N×C×H×W images, got {:?}", images.shape())));
    }
    let (n, c, h, w) = (images.shape()[0], images.shape()[1], images.shape()[2], images.shape()[3]);
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false);
    let x = tape.leaf(images.clone());
    let logits = model.record(&mut tape, &params, x, None)?;
    let scalar = match mode {
        SaliencyMode::ClassLogit => {
            let k = model.num_classes();
            let values = tape.value(logits).clone();
            let mut mask = vec![0.0; n * k];
            for i in 0..n {
                mask[i * k + argmax(&values.data()[i * k..(i + 1) * k])] = 1.0;
            }
            let m = tape.constant(Tensor::new(vec![n, k], mask)?);
            let picked = tape.mul(logits, m)?;
            tape.sum(picked)?
        }
        SaliencyMode::MarginalEnergy => {
            let e = record_marginal_energy(&mut tape, logits)?;
            tape.sum(e)?
        }
    };
    let mut grads = tape.backward(scalar)?;
    let g = grads.take(x).expect("input is a differentiable leaf");
    let mut out = vec![0.0; n * h * w];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * h * w;
            for p in 0..h * w {
                out[i * h * w + p] += g.data()[base + p].abs();
            }
        }
    }
    Tensor::new(vec![n, h, w], out)
}

/// Saliency of one `C×H×W` image, shaped `H×W`.
pub fn saliency_map(model: &EnergyModel, image: &Tensor, mode: SaliencyMode) -> Result<Tensor> {
    let mut shape = vec![1];
    shape.extend_from_slice(image.shape());
    let m = saliency_maps(model, &image.reshape(&shape)?, mode)?;
    m.reshape(&image.shape()[1..])
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {} values", a.len(), b.len())));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
    let va: f64 = ra.iter().map(|x| (x - mean).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mean).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Undefined("constant map".into()));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Spearman correlation of two equally shaped maps divided by `ceiling`.
pub fn saliency_alignment(map: &Tensor, reference: &Tensor, ceiling: f64) -> Result<f64> {
    if map.shape() != reference.shape() {
        return Err(Error::Dimension(format!("map {:?} vs reference {:?}", map.shape(), reference.shape())));
    }
    if !(ceiling > 0.0) {
        return Err(Error::Config(format!("ceiling must be positive, got {ceiling}")));
    }
    Ok(spearman(map.data(), reference.data())? / ceiling)
}

/// Mean alignment over a batch of maps (`N×H×W`); maps that are constant
/// are skipped, and if all are constant the result is undefined.
pub fn mean_saliency_alignment(maps: &Tensor, references: &Tensor, ceiling: f64) -> Result<f64> {
    if maps.shape() != references.shape() || maps.ndim() != 3 {
        return Err(Error::Dimension(format!("maps {:?} vs references {:?}", maps.shape(), references.shape())));
    }
    let mut total = 0.0;
    let mut used = 0;
    for i in 0..maps.rows() {
        match saliency_alignment(&maps.row_tensor(i), &references.row_tensor(i), ceiling) {
            Ok(v) => {
                total += v;
                used += 1;
            }
            Err(Error::Undefined(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::Undefined("every map is constant".into()));
    }
    Ok(total / used as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LayerSpec, NetworkSpec};

    fn linear_image_model(w: &[f64], classes: usize) -> EnergyModel {
        let spec = NetworkSpec {
            input_shape: vec![1, 2, 2],
            layers: vec![LayerSpec::Flatten, LayerSpec::Affine { inputs: 4, outputs: classes }],
            num_classes: classes,
            dropout: 0.0,
        };
        let mut weights = vec![0.0; classes * 4];
        weights[..4].copy_from_slice(w);
        EnergyModel::from_parts(spec, vec![Tensor::new(vec![classes, 4], weights).unwrap(), Tensor::zeros(&[classes])]).unwrap()
    }

    #[test]
    fn linear_logit_gives_abs_weights() {
        let m = linear_image_model(&[1.0, -2.0, 0.5, 3.0], 1);
        let x = Tensor::new(vec![1, 2, 2], vec![0.3, -0.1, 0.7, 0.2]).unwrap();
        let s = saliency_map(&m, &x, SaliencyMode::ClassLogit).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[1.0, 2.0, 0.5, 3.0]);
    }

    #[test]
    fn constant_model_gives_zero_map() {
        let m = linear_image_model(&[0.0; 4], 2);
        let x = Tensor::full(&[1, 2, 2], 0.5);
        for mode in [SaliencyMode::ClassLogit, SaliencyMode::MarginalEnergy] {
            assert!(saliency_map(&m, &x, mode).unwrap().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&a, &[1.0, 2.0, 4.0, 3.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
        assert!(matches!(spearman(&a, &[1.0; 4]), Err(Error::Undefined(_))));
    }

    #[test]
    fn alignment_divides_by_ceiling() {
        let m = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = Tensor::new(vec![2, 2], vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        assert!((saliency_alignment(&m, &m, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((saliency_alignment(&m, &r, 0.5).unwrap() + 2.0).abs() < 1e-12);
    }
}
