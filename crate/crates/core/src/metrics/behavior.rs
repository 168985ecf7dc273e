//! Metrics on categorical decisions: soft-label cross-entropy and KL,
//! error consistency, and shape bias.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::synthdata::ObserverResponses;
use crate::tensor::Tensor;

const PROB_FLOOR: f64 = 1e-12;

fn check_rows(model_probs: &Tensor, counts: &[Vec<u64>]) -> Result<usize> {
    if counts.is_empty() {
        return Err(Error::Config("no stimuli".into()));
    }
    let k = counts[0].len();
    if model_probs.shape() != [counts.len(), k] {
        return Err(Error::Alignment(format!(
            "model probabilities {:?} do not align with {} count rows of {k} classes",
            model_probs.shape(),
            counts.len()
        )));
    }
    if let Some(i) = counts.iter().position(|r| r.len() != k) {
        return Err(Error::Alignment(format!("count row {i} has {} classes, expected {k}", counts[i].len())));
    }
    if let Some(i) = counts.iter().position(|r| r.iter().sum::<u64>() == 0) {
        return Err(Error::Undefined(format!("count row {i} is all zero")));
    }
    Ok(k)
}

fn human_row(counts: &[u64]) -> Vec<f64> {
    let s = counts.iter().sum::<u64>() as f64;
    counts.iter().map(|&c| c as f64 / s).collect()
}

/// Mean over stimuli of `-Σ_y p_hum(y) log p_model(y)`, model probabilities floored at 1e-12.
pub fn soft_label_ce(model_probs: &Tensor, counts: &[Vec<u64>]) -> Result<f64> {
    check_rows(model_probs, counts)?;
    let total: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let h = human_row(c);
            -h.iter().zip(model_probs.row(i)).filter(|(p, _)| **p > 0.0).map(|(p, q)| p * q.max(PROB_FLOOR).ln()).sum::<f64>()
        })
        .sum();
    Ok(total / counts.len() as f64)
}

/// Mean entropy of the normalized count rows.
pub fn mean_human_entropy(counts: &[Vec<u64>]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Config("no stimuli".into()));
    }
    let mut total = 0.0;
    for (i, c) in counts.iter().enumerate() {
        if c.iter().sum::<u64>() == 0 {
            return Err(Error::Undefined(format!("count row {i} is all zero")));
        }
        total -= human_row(c).iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    }
    Ok(total / counts.len() as f64)
}

/// Mean `KL(p_hum ‖ p_model)`; equal to the cross-entropy minus the mean human entropy.
pub fn soft_label_kl(model_probs: &Tensor, counts: &[Vec<u64>]) -> Result<f64> {
    check_rows(model_probs, counts)?;
    let total: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            human_row(c)
                .iter()
                .zip(model_probs.row(i))
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, q)| p * (p.ln() - q.max(PROB_FLOOR).ln()))
                .sum::<f64>()
        })
        .sum();
    Ok(total / counts.len() as f64)
}

/// Chance-corrected agreement of two correctness sequences on the same
/// stimuli: `(o - ô) / (1 - ô)` with `ô = p q + (1-p)(1-q)`; 0 when `ô = 1`.
pub fn kappa(model: &[bool], observer: &[bool]) -> Result<f64> {
    if model.len() != observer.len() {
        return Err(Error::Alignment(format!("{} model trials vs {} observer trials", model.len(), observer.len())));
    }
    if model.is_empty() {
        return Err(Error::Alignment("no shared stimuli".into()));
    }
    let n = model.len() as f64;
    let o = model.iter().zip(observer).filter(|(a, b)| a == b).count() as f64 / n;
    let p = model.iter().filter(|&&c| c).count() as f64 / n;
    let q = observer.iter().filter(|&&c| c).count() as f64 / n;
    let expected = p * q + (1.0 - p) * (1.0 - q);
    if expected >= 1.0 {
        return Ok(0.0);
    }
    Ok((o - expected) / (1.0 - expected))
}

/// One condition: the model's correctness per stimulus and each observer's
/// correctness on the same stimuli in the same order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionTrials {
    pub model: Vec<bool>,
    pub observers: BTreeMap<usize, Vec<bool>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsistencyDataset {
    pub conditions: Vec<ConditionTrials>,
}

/// Nested mean of per-condition κ: over conditions for each observer, then
/// over the dataset's observers, then over datasets.
pub fn error_consistency(datasets: &[ConsistencyDataset]) -> Result<f64> {
    if datasets.is_empty() {
        return Err(Error::Config("no datasets".into()));
    }
    let mut total = 0.0;
    for (d, ds) in datasets.iter().enumerate() {
        let mut per_observer: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for cond in &ds.conditions {
            for (&h, trials) in &cond.observers {
                let k = kappa(&cond.model, trials)?;
                let e = per_observer.entry(h).or_default();
                e.0 += k;
                e.1 += 1;
            }
        }
        if per_observer.is_empty() {
            return Err(Error::Alignment(format!("dataset {d} has no observer trials")));
        }
        total += per_observer.values().map(|(s, n)| s / *n as f64).sum::<f64>() / per_observer.len() as f64;
    }
    Ok(total / datasets.len() as f64)
}

/// Groups observer responses and model predictions (indexed by stimulus id)
/// into correctness trials per condition.
pub fn consistency_trials(responses: &ObserverResponses, model_predictions: &BTreeMap<usize, usize>) -> Result<ConsistencyDataset> {
    let labels: BTreeMap<usize, (usize, usize)> = responses.stimuli.iter().map(|s| (s.id, (s.condition, s.label))).collect();
    let mut answers: BTreeMap<(usize, usize), BTreeMap<usize, usize>> = BTreeMap::new();
    for r in &responses.responses {
        let (cond, _) = labels[&r.stimulus];
        answers.entry((cond, r.observer)).or_default().insert(r.stimulus, r.response);
    }
    let conditions: BTreeSet<usize> = labels.values().map(|(c, _)| *c).collect();
    let mut out = ConsistencyDataset::default();
    for c in conditions {
        let stimuli: Vec<usize> = responses.stimuli.iter().filter(|s| s.condition == c).map(|s| s.id).collect();
        let model = stimuli
            .iter()
            .map(|id| {
                model_predictions
                    .get(id)
                    .map(|&p| p == labels[id].1)
                    .ok_or_else(|| Error::Alignment(format!("model did not answer stimulus {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut observers = BTreeMap::new();
        for ((cc, h), given) in &answers {
            if *cc != c {
                continue;
            }
            let trials = stimuli
                .iter()
                .map(|id| {
                    given
                        .get(id)
                        .map(|&r| r == labels[id].1)
                        .ok_or_else(|| Error::Alignment(format!("observer {h} did not answer stimulus {id}")))
                })
                .collect::<Result<Vec<_>>>()?;
            observers.insert(*h, trials);
        }
        out.conditions.push(ConditionTrials { model, observers });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShapeBiasMode {
    /// Denominator counts only decisions matching the shape or the texture cue.
    #[default]
    CueDecisions,
    /// Denominator counts every cue-conflict image.
    AllImages,
}

/// Fraction of cue-consistent decisions that follow the shape cue.
pub fn shape_bias(predictions: &[usize], shape_labels: &[usize], texture_labels: &[usize], mode: ShapeBiasMode) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Config("shape bias of an empty set".into()));
    }
    if predictions.len() != shape_labels.len() || predictions.len() != texture_labels.len() {
        return Err(Error::Alignment("predictions and cue labels differ in length".into()));
    }
    if let Some(i) = (0..predictions.len()).find(|&i| shape_labels[i] == texture_labels[i]) {
        return Err(Error::Config(format!("row {i} is not a cue conflict")));
    }
    let shape_hits = (0..predictions.len()).filter(|&i| predictions[i] == shape_labels[i]).count();
    let texture_hits = (0..predictions.len()).filter(|&i| predictions[i] == texture_labels[i]).count();
    let denom = match mode {
        ShapeBiasMode::CueDecisions => shape_hits + texture_hits,
        ShapeBiasMode::AllImages => predictions.len(),
    };
    if denom == 0 {
        return Err(Error::Undefined("no prediction matches either cue".into()));
    }
    Ok(shape_hits as f64 / denom as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn probs(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn ce_examples() {
        let ce = soft_label_ce(&probs(&[&[0.75, 0.25]]), &[vec![10, 0]]).unwrap();
        assert!((ce - 0.2876820724517809).abs() < 1e-12);
        let ce = soft_label_ce(&probs(&[&[0.5, 0.5]]), &[vec![3, 3]]).unwrap();
        assert!((ce - LN_2).abs() < 1e-12);
        let counts = vec![vec![2, 1, 1], vec![0, 5, 5]];
        let equal = probs(&[&[0.5, 0.25, 0.25], &[0.0, 0.5, 0.5]]);
        let h = mean_human_entropy(&counts).unwrap();
        assert!((soft_label_ce(&equal, &counts).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let kl = soft_label_kl(&probs(&[&[0.5, 0.5]]), &[vec![4, 0]]).unwrap();
        assert!((kl - LN_2).abs() < 1e-12);
        assert_eq!(soft_label_kl(&probs(&[&[0.25, 0.75]]), &[vec![1, 3]]).unwrap(), 0.0);
    }

    #[test]
    fn zero_count_row_is_undefined() {
        assert!(matches!(soft_label_ce(&probs(&[&[0.5, 0.5]]), &[vec![0, 0]]), Err(Error::Undefined(_))));
    }

    #[test]
    fn kappa_examples() {
        let t = [true, false, true, true, false];
        assert_eq!(kappa(&t, &t).unwrap(), 1.0);
        assert_eq!(kappa(&[true, true, false, false], &[true, false, true, false]).unwrap(), 0.0);
        let k = kappa(&[true, true, true, false], &[true, true, false, true]).unwrap();
        assert!((k + 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(kappa(&[true, true], &[true, true]).unwrap(), 0.0);
        assert!(matches!(kappa(&[true], &[true, false]), Err(Error::Alignment(_))));
    }

    #[test]
    fn nested_mean_weights_datasets_equally() {
        let cond = |m: &[bool], h: &[(usize, &[bool])]| ConditionTrials {
            model: m.to_vec(),
            observers: h.iter().map(|(i, t)| (*i, t.to_vec())).collect(),
        };
        let same = [true, false, true, false];
        let d1 = ConsistencyDataset { conditions: vec![cond(&same, &[(0, &same), (1, &same)])] };
        let d2 = ConsistencyDataset {
            conditions: vec![
                cond(&[true, true, false, false], &[(0, &[true, false, true, false])]),
                cond(&same, &[(0, &same)]),
            ],
        };
        // d1: 1; d2: observer 0 averages 0 and 1
        assert!((error_consistency(&[d1, d2]).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn shape_bias_examples() {
        let s = [0; 10];
        let t = [1; 10];
        assert_eq!(shape_bias(&[0; 10], &s, &t, ShapeBiasMode::CueDecisions).unwrap(), 1.0);
        let p = [0, 0, 0, 0, 0, 0, 1, 1, 2, 2];
        assert_eq!(shape_bias(&p, &s, &t, ShapeBiasMode::CueDecisions).unwrap(), 0.75);
        assert_eq!(shape_bias(&p, &s, &t, ShapeBiasMode::AllImages).unwrap(), 0.6);
        assert!(matches!(shape_bias(&[2; 10], &s, &t, ShapeBiasMode::CueDecisions), Err(Error::Undefined(_))));
        assert!(shape_bias(&[], &[], &[], ShapeBiasMode::CueDecisions).is_err());
    }
}
