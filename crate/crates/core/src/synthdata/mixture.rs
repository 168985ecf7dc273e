//! Gaussian mixtures in the plane with a closed-form Bayes posterior.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::formats::{write_csv, Table};
use crate::autodiff::{logsumexp, softmax};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const POINTS_FILE: &str = "points.csv";
pub const MIXTURE_FILE: &str = "mixture.json";

/// Equal-weight isotropic Gaussian mixture; component `k` is class `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub means: Vec<[f64; 2]>,
    pub std: f64,
}

impl MixtureSpec {
    /// `classes` components evenly spaced on a circle of radius `separation`.
    pub fn on_circle(classes: usize, separation: f64, std: f64) -> Self {
        let means = (0..classes)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / classes as f64;
                [separation * a.cos(), separation * a.sin()]
            })
            .collect();
        Self { means, std }
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.len() < 2 {
            return Err(Error::Config("a mixture needs at least 2 components".into()));
        }
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(Error::Config(format!("component std must be positive, got {}", self.std)));
        }
        Ok(())
    }

    /// `log N(x; μ_k, σ²I)` for every component.
    pub fn component_log_densities(&self, x: &[f64]) -> Vec<f64> {
        let s2 = self.std * self.std;
        let norm = -(2.0 * PI * s2).ln();
        self.means
            .iter()
            .map(|m| {
                let d = (x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2);
                norm - 0.5 * d / s2
            })
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        logsumexp(&self.component_log_densities(x)) - (self.num_classes() as f64).ln()
    }

    /// Exact `p(y | x)` under equal priors.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.component_log_densities(x))
    }

    pub fn bayes_predict(&self, x: &[f64]) -> usize {
        let lp = self.component_log_densities(x);
        (0..lp.len()).fold(0, |b, k| if lp[k] > lp[b] { k } else { b })
    }

    /// Draws `n` labeled points. Labels are uniform over components.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.random_range(0..self.num_classes());
            let e0: f64 = rng.sample(StandardNormal);
            let e1: f64 = rng.sample(StandardNormal);
            data.push(self.means[k][0] + self.std * e0);
            data.push(self.means[k][1] + self.std * e1);
            labels.push(k);
        }
        (Tensor::new(vec![n, 2], data).expect("point shape"), labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoints2D {
    pub points: Tensor,
    pub labels: Vec<usize>,
    pub spec: MixtureSpec,
}

impl LabeledPoints2D {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes()
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(self.points.clone(), self.labels.clone(), self.num_classes())
    }

    /// Closed-form posterior for every point, `N×K`.
    pub fn posteriors(&self) -> Tensor {
        let rows: Vec<Vec<f64>> = (0..self.len()).map(|i| self.spec.posterior(self.points.row(i))).collect();
        Tensor::from_rows(&rows).expect("posterior rows")
    }

    /// Writes `points.csv` (`x0,x1,label`) and `mixture.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let points = dir.join(POINTS_FILE);
        let rows = (0..self.len()).map(|i| {
            let p = self.points.row(i);
            vec![p[0].to_string(), p[1].to_string(), self.labels[i].to_string()]
        });
        write_csv(&points, &["x0", "x1", "label"], rows)?;
        let spec = dir.join(MIXTURE_FILE);
        let json = serde_json::to_string_pretty(&self.spec).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&spec, json + "\n")?;
        Ok(vec![points, spec])
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec_path = dir.join(MIXTURE_FILE);
        let spec: MixtureSpec = serde_json::from_str(&std::fs::read_to_string(&spec_path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", spec_path.display())))?;
        spec.validate()?;
        let (points, labels) = load_points(dir.join(POINTS_FILE))?;
        if let Some(&bad) = labels.iter().find(|&&y| y >= spec.num_classes()) {
            return Err(Error::Label { label: bad, classes: spec.num_classes() });
        }
        Ok(Self { points, labels, spec })
    }
}

/// Reads a `x0,x1,label` CSV.
pub fn load_points(path: impl AsRef<Path>) -> Result<(Tensor, Vec<usize>)> {
    let t = Table::read(path)?;
    let x0: Vec<f64> = t.parse_column("x0")?;
    let x1: Vec<f64> = t.parse_column("x1")?;
    let labels: Vec<usize> = t.parse_column("label")?;
    if t.is_empty() {
        return Err(Error::Format("points file has no rows".into()));
    }
    let data = x0.iter().zip(&x1).flat_map(|(a, b)| [*a, *b]).collect();
    Ok((Tensor::new(vec![t.len(), 2], data)?, labels))
}

/// `classes` unit-variance clusters on a circle of radius `separation`.
pub fn gen_mixture2d(classes: usize, n: usize, separation: f64, seed: u64) -> Result<LabeledPoints2D> {
    gen_mixture2d_from(MixtureSpec::on_circle(classes, separation, 1.0), n, seed)
}

pub fn gen_mixture2d_from(spec: MixtureSpec, n: usize, seed: u64) -> Result<LabeledPoints2D> {
    spec.validate()?;
    if n < spec.num_classes() {
        return Err(Error::Config(format!("need at least {} points, got {n}", spec.num_classes())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (points, labels) = spec.sample(n, &mut rng);
    Ok(LabeledPoints2D { points, labels, spec })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_points() {
        let a = gen_mixture2d(3, 500, 3.0, 9).unwrap();
        let b = gen_mixture2d(3, 500, 3.0, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_mixture2d(3, 500, 3.0, 10).unwrap());
    }

    #[test]
    fn class_counts_within_binomial_bound() {
        let n = 9000;
        let d = gen_mixture2d(3, n, 3.0, 1).unwrap();
        let bound = 3.0 * (n as f64).sqrt();
        for k in 0..3 {
            let c = d.labels.iter().filter(|&&y| y == k).count() as f64;
            assert!((c - n as f64 / 3.0).abs() <= bound);
        }
    }

    #[test]
    fn bayes_accuracy_approaches_one_when_separated() {
        let d = gen_mixture2d(3, 5000, 10.0, 2).unwrap();
        let post = d.posteriors();
        let expected_acc: f64 = (0..d.len()).map(|i| post.row(i).iter().cloned().fold(0.0, f64::max)).sum::<f64>() / d.len() as f64;
        assert!(expected_acc > 0.999, "{expected_acc}");
    }

    #[test]
    fn log_density_is_normalized() {
        let spec = MixtureSpec::on_circle(3, 2.0, 1.0);
        let (h, n) = (0.05, 300);
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [-7.5 + (i as f64 + 0.5) * h, -7.5 + (j as f64 + 0.5) * h];
                total += spec.log_density(&x).exp() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn rejects_too_few_points() {
        assert!(gen_mixture2d(3, 2, 1.0, 0).is_err());
        assert!(gen_mixture2d(1, 10, 1.0, 0).is_err());
    }
}
