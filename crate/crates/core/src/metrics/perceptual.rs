//! Feature-space perceptual distance with equal layer and channel weights,
//! scored by forced-choice agreement and same/different retrieval.

use crate::error::{Error, Result};
use crate::network::EnergyModel;
use crate::synthdata::PerceptualSet;
use crate::tensor::Tensor;

const NORM_EPS: f64 = 1e-10;

/// `(channels, positions)` of one sample of a `[B, C, ...]` activation.
fn layout(t: &Tensor) -> (usize, usize) {
    let c = t.shape()[1];
    (c, t.row_len() / c)
}

/// Per-row distance between two activations of one layer: unit-normalize the
/// channel vector at every position, then average the squared difference
/// over positions and channels.
pub fn layer_distances(fa: &Tensor, fb: &Tensor) -> Result<Vec<f64>> {
    if fa.shape() != fb.shape() || fa.ndim() < 2 {
        return Err(Error::Dimension(format!("activations {:?} and {:?} differ", fa.shape(), fb.shape())));
    }
    let (c, p) = layout(fa);
    let mut out = Vec::with_capacity(fa.rows());
    for r in 0..fa.rows() {
        let (ra, rb) = (fa.row(r), fb.row(r));
        let mut acc = 0.0;
        for pos in 0..p {
            let na = (0..c).map(|ch| ra[ch * p + pos].powi(2)).sum::<f64>().sqrt() + NORM_EPS;
            let nb = (0..c).map(|ch| rb[ch * p + pos].powi(2)).sum::<f64>().sqrt() + NORM_EPS;
            acc += (0..c).map(|ch| (ra[ch * p + pos] / na - rb[ch * p + pos] / nb).powi(2)).sum::<f64>();
        }
        out.push(acc / (c * p) as f64);
    }
    Ok(out)
}

/// Row-wise distances between two equally shaped batches, summed over layers.
pub fn perceptual_distances(model: &EnergyModel, a: &Tensor, b: &Tensor, layer_ids: &[usize]) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("image batches {:?} and {:?} differ", a.shape(), b.shape())));
    }
    if layer_ids.is_empty() {
        return Err(Error::Usage("perceptual distance needs at least one layer".into()));
    }
    let fa = model.features(a, layer_ids)?;
    let fb = model.features(b, layer_ids)?;
    let mut total = vec![0.0; a.rows()];
    for (x, y) in fa.iter().zip(&fb) {
        for (t, d) in total.iter_mut().zip(layer_distances(x, y)?) {
            *t += d;
        }
    }
    Ok(total)
}

/// Distance between two unbatched inputs.
pub fn perceptual_distance(model: &EnergyModel, a: &Tensor, b: &Tensor, layer_ids: &[usize]) -> Result<f64> {
    let mut shape = vec![1];
    shape.extend_from_slice(a.shape());
    let d = perceptual_distances(model, &a.reshape(&shape)?, &b.reshape(&shape)?, layer_ids)?;
    Ok(d[0])
}

/// Agreement of distance-based choices with ground truth. The model picks
/// the closer candidate; an exact tie counts as half agreement.
pub fn two_afc_score(dist_a: &[f64], dist_b: &[f64], choices: &[usize]) -> Result<f64> {
    if dist_a.is_empty() {
        return Err(Error::Config("no triplets".into()));
    }
    if dist_a.len() != dist_b.len() || dist_a.len() != choices.len() {
        return Err(Error::Alignment("triplet columns differ in length".into()));
    }
    let total: f64 = (0..dist_a.len())
        .map(|i| {
            if dist_a[i] == dist_b[i] {
                0.5
            } else {
                let pick = usize::from(dist_b[i] < dist_a[i]);
                if pick == choices[i] {
                    1.0
                } else {
                    0.0
                }
            }
        })
        .sum();
    Ok(total / dist_a.len() as f64)
}

fn refs_for(set: &PerceptualSet, ids: impl Iterator<Item = usize>) -> Tensor {
    let idx: Vec<usize> = ids.collect();
    set.refs.select_rows(&idx)
}

pub fn two_afc(model: &EnergyModel, set: &PerceptualSet, layer_ids: &[usize]) -> Result<f64> {
    if set.triplets.is_empty() {
        return Err(Error::Config("no triplets".into()));
    }
    let refs = refs_for(set, set.triplets.iter().map(|t| t.reference));
    let da = perceptual_distances(model, &refs, &set.triplet_a, layer_ids)?;
    let db = perceptual_distances(model, &refs, &set.triplet_b, layer_ids)?;
    let choices: Vec<usize> = set.triplets.iter().map(|t| t.choice).collect();
    two_afc_score(&da, &db, &choices)
}

/// Average precision of retrieving `same` pairs when ranked by ascending
/// distance; ties keep input order.
pub fn average_precision(distances: &[f64], same: &[bool]) -> Result<f64> {
    if distances.len() != same.len() {
        return Err(Error::Alignment("distances and labels differ in length".into()));
    }
    let positives = same.iter().filter(|&&s| s).count();
    if positives == 0 {
        return Err(Error::Undefined("no positive pairs".into()));
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    let mut hits = 0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if same[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

pub fn jnd_map(model: &EnergyModel, set: &PerceptualSet, layer_ids: &[usize]) -> Result<f64> {
    if set.pairs.is_empty() {
        return Err(Error::Config("no pairs".into()));
    }
    let refs = refs_for(set, set.pairs.iter().map(|p| p.reference));
    let d = perceptual_distances(model, &refs, &set.pair_images, layer_ids)?;
    let same: Vec<bool> = set.pairs.iter().map(|p| p.same).collect();
    average_precision(&d, &same)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_two_channel_distance() {
        let a = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let d = layer_distances(&a, &b).unwrap()[0];
        // (0.6, 0.8) vs (1, 0): (0.16 + 0.64) / 2
        assert!((d - 0.4).abs() < 1e-9);
    }

    #[test]
    fn spatial_positions_normalized_separately() {
        // two channels, two positions; channel-major layout
        let a = Tensor::new(vec![1, 2, 2], vec![1.0, 0.0, 0.0, 5.0]).unwrap();
        let b = Tensor::new(vec![1, 2, 2], vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(layer_distances(&a, &b).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn two_afc_rules() {
        assert_eq!(two_afc_score(&[0.1, 0.2], &[0.3, 0.9], &[0, 0]).unwrap(), 1.0);
        assert_eq!(two_afc_score(&[0.1, 0.2], &[0.3, 0.9], &[1, 1]).unwrap(), 0.0);
        assert_eq!(two_afc_score(&[0.4, 0.1], &[0.4, 0.2], &[0, 0]).unwrap(), 0.75);
    }

    #[test]
    fn average_precision_examples() {
        assert_eq!(average_precision(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).unwrap(), 1.0);
        let ap = average_precision(&[0.1, 0.2, 0.3], &[false, false, true]).unwrap();
        assert!((ap - 1.0 / 3.0).abs() < 1e-12);
        let ap = average_precision(&[0.1, 0.2, 0.3, 0.4], &[false, false, true, true]).unwrap();
        assert!((ap - 5.0 / 12.0).abs() < 1e-12);
        assert!(matches!(average_precision(&[0.1], &[false]), Err(Error::Undefined(_))));
    }

    #[test]
    fn ties_keep_input_order() {
        let ap = average_precision(&[0.5, 0.5], &[false, true]).unwrap();
        assert_eq!(ap, 0.5);
    }
}
