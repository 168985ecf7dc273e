//! Labeled input tensors used for training and evaluation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sampler::InitBox;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.ndim() < 2 {
            return Err(Error::Dimension("dataset inputs need a leading sample axis".into()));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::Dimension(format!("{} inputs but {} labels", inputs.rows(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Label { label: bad, classes: num_classes });
        }
        Ok(Self { inputs, labels, num_classes })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn is_image(&self) -> bool {
        self.input_shape().len() == 3
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Seeded shuffle split into `(train, holdout)` with `holdout_fraction` of the samples held out.
    pub fn split(&self, holdout_fraction: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_hold = ((self.len() as f64) * holdout_fraction).round() as usize;
        let (hold, train) = idx.split_at(n_hold.min(self.len()));
        (self.subset(train), self.subset(hold))
    }

    /// Uniform batch of indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        (0..batch).map(|_| rng.random_range(0..self.len())).collect()
    }

    /// Box used for fresh SGLD initializations: `[-1, 1]` per pixel for
    /// images, the data bounding box widened by 1 for everything else.
    pub fn init_box(&self) -> InitBox {
        let n = self.inputs.row_len();
        if self.is_image() {
            return InitBox::uniform(n, -1.0, 1.0);
        }
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for r in 0..self.inputs.rows() {
            for (j, &v) in self.inputs.row(r).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        InitBox { lo: lo.iter().map(|v| v - 1.0).collect(), hi: hi.iter().map(|v| v + 1.0).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let x = Tensor::new(vec![4, 2], vec![0.0, 0.0, 1.0, 2.0, -1.0, 3.0, 2.0, -2.0]).unwrap();
        Dataset::new(x, vec![0, 1, 1, 0], 2).unwrap()
    }

    #[test]
    fn rejects_bad_labels_and_lengths() {
        let x = Tensor::zeros(&[2, 2]);
        assert!(matches!(Dataset::new(x.clone(), vec![0, 2], 2), Err(Error::Label { .. })));
        assert!(Dataset::new(x, vec![0], 2).is_err());
    }

    #[test]
    fn split_partitions() {
        let d = toy();
        let (a, b) = d.split(0.25, 1);
        assert_eq!((a.len(), b.len()), (3, 1));
        let (a2, b2) = d.split(0.25, 1);
        assert_eq!((a, b), (a2, b2));
    }

    #[test]
    fn init_box_widens_bounding_box() {
        let b = toy().init_box();
        assert_eq!(b.lo, vec![-2.0, -3.0]);
        assert_eq!(b.hi, vec![3.0, 4.0]);
    }
}
