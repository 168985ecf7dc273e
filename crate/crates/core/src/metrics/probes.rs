//! Linear read-outs of frozen features: a multinomial logistic classifier
//! and closed-form ridge regression, both cross-validated, plus Pearson
//! correlation for comparing decision values with graded ratings.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::softmax;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-column mean and scale from training rows; zero-variance columns keep scale 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for c in x.column_iter() {
            let m = c.sum() / n;
            let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 1e-24 { var.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| (x[(r, c)] - self.mean[c]) / self.scale[c])
    }
}

fn to_matrix(t: &Tensor) -> Result<DMatrix<f64>> {
    if t.ndim() < 2 || t.rows() == 0 {
        return Err(Error::Dimension(format!("features must be N×D, got {:?}", t.shape())));
    }
    Ok(DMatrix::from_row_slice(t.rows(), t.row_len(), t.data()))
}

fn rows_of(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

/// Seeded shuffle into `folds` nearly equal test folds.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || n < folds {
        return Err(Error::Config(format!("need 2 <= folds <= N, got {folds} folds for {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..folds).map(|f| idx.iter().copied().skip(f).step_by(folds).collect()).collect())
}

fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in test {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Multinomial logistic regression with a bias term, on standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProbe {
    pub standardizer: Standardizer,
    /// `K × (D + 1)`, last column is the bias.
    pub weights: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub l2: f64,
    pub max_iter: usize,
    /// Stop when the largest gradient entry falls below this.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { l2: 1e-4, max_iter: 3000, tol: 1e-7 }
    }
}

fn with_bias(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(z.nrows(), z.ncols() + 1, 1.0);
    out.view_mut((0, 0), (z.nrows(), z.ncols())).copy_from(z);
    out
}

fn largest_eigenvalue(gram: &DMatrix<f64>) -> f64 {
    let mut v = DVector::from_element(gram.nrows(), 1.0);
    let mut lambda = 0.0;
    for _ in 0..100 {
        let w = gram * &v;
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        lambda = n / v.norm();
        v = w / n;
    }
    lambda
}

impl LogisticProbe {
    /// Full-batch gradient descent with step `1/L`, where `L` bounds the curvature.
    pub fn fit(x: &DMatrix<f64>, labels: &[usize], classes: usize, cfg: &LogisticConfig) -> Result<Self> {
        if labels.len() != x.nrows() {
            return Err(Error::Alignment(format!("{} feature rows vs {} labels", x.nrows(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Label { label: bad, classes });
        }
        let standardizer = Standardizer::fit(x);
        let xb = with_bias(&standardizer.apply(x));
        let n = xb.nrows() as f64;
        let step = 1.0 / (0.5 * largest_eigenvalue(&(xb.transpose() * &xb / n)) + cfg.l2);
        let mut onehot = DMatrix::zeros(xb.nrows(), classes);
        for (i, &y) in labels.iter().enumerate() {
            onehot[(i, y)] = 1.0;
        }
        let mut w = DMatrix::zeros(classes, xb.ncols());
        for _ in 0..cfg.max_iter {
            let scores = &xb * w.transpose();
            let mut probs = scores.clone();
            for mut row in probs.row_iter_mut() {
                let p = softmax(&row.iter().copied().collect::<Vec<_>>());
                row.iter_mut().zip(p).for_each(|(r, v)| *r = v);
            }
            let mut grad = (probs - &onehot).transpose() * &xb / n;
            let mut reg = w.clone() * cfg.l2;
            reg.column_mut(xb.ncols() - 1).fill(0.0);
            grad += reg;
            if grad.amax() < cfg.tol {
                break;
            }
            w -= grad * step;
        }
        Ok(Self { standardizer, weights: w })
    }

    /// Pre-softmax scores, `N × K`.
    pub fn decision_values(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        with_bias(&self.standardizer.apply(x)) * self.weights.transpose()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let s = self.decision_values(x);
        s.row_iter().map(|r| r.transpose().argmax().0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub accuracy: f64,
    /// Out-of-fold scores for every sample, `N × K`.
    pub decision_values: Tensor,
}

impl ProbeResult {
    /// Signed score `s_1 - s_0` of a two-class probe.
    pub fn binary_decision(&self) -> Result<Vec<f64>> {
        if self.decision_values.row_len() != 2 {
            return Err(Error::Usage("binary decision needs a two-class probe".into()));
        }
        Ok((0..self.decision_values.rows()).map(|i| self.decision_values.row(i)[1] - self.decision_values.row(i)[0]).collect())
    }
}

/// Cross-validated accuracy of a multinomial logistic probe.
pub fn probe_classify(features: &Tensor, labels: &[usize], folds: usize, seed: u64) -> Result<ProbeResult> {
    probe_classify_with(features, labels, folds, seed, &LogisticConfig::default())
}

pub fn probe_classify_with(features: &Tensor, labels: &[usize], folds: usize, seed: u64, cfg: &LogisticConfig) -> Result<ProbeResult> {
    let x = to_matrix(features)?;
    if labels.len() != x.nrows() {
        return Err(Error::Alignment(format!("{} feature rows vs {} labels", x.nrows(), labels.len())));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let n = x.nrows();
    let mut scores = vec![0.0; n * classes];
    let mut correct = 0;
    for test in fold_indices(n, folds, seed)? {
        let train = complement(n, &test);
        let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let probe = LogisticProbe::fit(&rows_of(&x, &train), &y, classes, cfg)?;
        let xt = rows_of(&x, &test);
        let s = probe.decision_values(&xt);
        for (r, &i) in test.iter().enumerate() {
            let row: Vec<f64> = s.row(r).iter().copied().collect();
            let pred = (0..classes).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            correct += usize::from(pred == labels[i]);
            scores[i * classes..(i + 1) * classes].copy_from_slice(&row);
        }
    }
    Ok(ProbeResult { accuracy: correct as f64 / n as f64, decision_values: Tensor::new(vec![n, classes], scores)? })
}

/// Ridge regression on standardized features with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub standardizer: Standardizer,
    pub weights: DVector<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn fit(x: &DMatrix<f64>, y: &[f64], ridge: f64) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::Alignment(format!("{} feature rows vs {} targets", x.nrows(), y.len())));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::Config(format!("ridge must be non-negative, got {ridge}")));
        }
        let standardizer = Standardizer::fit(x);
        let z = standardizer.apply(x);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - mean));
        let mut gram = z.transpose() * &z;
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
        let rhs = z.transpose() * yc;
        let weights = gram
            .lu()
            .solve(&rhs)
            .filter(|w| w.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Undefined("singular normal equations; use a positive ridge".into()))?;
        Ok(Self { standardizer, weights, intercept: mean })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let p = self.standardizer.apply(x) * &self.weights;
        p.iter().map(|v| v + self.intercept).collect()
    }
}

/// `1 - SS_res / SS_tot`.
pub fn r_squared(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(Error::Alignment("predictions and targets differ in length".into()));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("targets are constant".into()));
    }
    let ss_res: f64 = predictions.iter().zip(targets).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Cross-validated R² with out-of-fold predictions pooled over folds.
pub fn probe_regress(features: &Tensor, targets: &[f64], ridge: f64, folds: usize, seed: u64) -> Result<f64> {
    let x = to_matrix(features)?;
    if targets.len() != x.nrows() {
        return Err(Error::Alignment(format!("{} feature rows vs {} targets", x.nrows(), targets.len())));
    }
    let n = x.nrows();
    let mut pred = vec![0.0; n];
    for test in fold_indices(n, folds, seed)? {
        let train = complement(n, &test);
        let y: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
        let model = RidgeModel::fit(&rows_of(&x, &train), &y, ridge)?;
        for (p, &i) in model.predict(&rows_of(&x, &test)).into_iter().zip(&test) {
            pred[i] = p;
        }
    }
    r_squared(&pred, targets)
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Alignment(format!("{} vs {} values", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::Config("correlation needs at least 3 values".into()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Undefined("constant input".into()));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

pub fn rating_correlation(decision_values: &[f64], ratings: &[f64]) -> Result<f64> {
    pearson(decision_values, ratings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 3.0];
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        // cov 3 over sqrt(2 * 14/3)
        let r = pearson(&a, &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 3.0 / (2.0f64 * 14.0 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r - 0.98198).abs() < 1e-5);
        assert!(matches!(pearson(&a, &[2.0; 3]), Err(Error::Undefined(_))));
    }

    #[test]
    fn hand_least_squares_r2() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = [0.0, 1.0, 1.0];
        let m = RidgeModel::fit(&x, &y, 0.0).unwrap();
        let r2 = r_squared(&m.predict(&x), &y).unwrap();
        assert!((r2 - 0.75).abs() < 1e-12, "{r2}");
    }

    #[test]
    fn constant_predictor_scores_zero() {
        let t = [1.0, 2.0, 4.0];
        assert_eq!(r_squared(&[7.0 / 3.0; 3], &t).unwrap(), 0.0);
        assert!(matches!(r_squared(&[1.0; 3], &[2.0; 3]), Err(Error::Undefined(_))));
    }

    #[test]
    fn linear_targets_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 60;
        let data: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = Tensor::new(vec![n, 3], data).unwrap();
        let y: Vec<f64> = (0..n).map(|i| 2.0 * f.row(i)[0] - f.row(i)[2] + 0.5).collect();
        assert!((probe_regress(&f, &y, 1e-10, 5, 1).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn separable_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let data: Vec<f64> = labels.iter().flat_map(|&y| [y as f64 * 4.0 - 2.0 + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let f = Tensor::new(vec![n, 2], data).unwrap();
        let r = probe_classify(&f, &labels, 5, 0).unwrap();
        assert_eq!(r.accuracy, 1.0);
        let dv = r.binary_decision().unwrap();
        assert!(dv.iter().zip(&labels).all(|(d, &y)| (*d > 0.0) == (y == 1)));
    }

    #[test]
    fn constant_column_is_harmless() {
        let f = Tensor::new(vec![4, 2], vec![0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0]).unwrap();
        let r = probe_classify(&f, &[0, 0, 1, 1], 2, 0).unwrap();
        assert!(r.accuracy.is_finite());
    }

    #[test]
    fn folds_partition_indices() {
        let f = fold_indices(11, 3, 5).unwrap();
        let mut all: Vec<usize> = f.concat();
        all.sort();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert!(fold_indices(2, 3, 0).is_err());
    }
}
