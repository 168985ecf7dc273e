//! Exact ground truth on low-dimensional inputs by midpoint quadrature.
//!
//! The model's density is taken to be restricted to the grid's box:
//! `p(x) = Σ_y exp f(x)[y] / Z` with `Z = Σ_cells vol · Σ_y exp f(x_cell)[y]`.
//! Every number produced here refers to that box-restricted density.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{logsumexp, GradientSet, Tape};
use crate::energy::record_marginal_energy;
use crate::error::{Error, Result};
use crate::network::EnergyModel;
use crate::tensor::Tensor;
use crate::trainer::cd_loss_and_grads;

pub const MAX_CELLS: usize = 10_000_000;
const CHUNK: usize = 4096;

/// Regular grid of cell centers over an axis-aligned box, up to 3-D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let g = Self { lo, hi, resolution };
        g.validate()?;
        Ok(g)
    }

    /// Same bounds and resolution on every axis.
    pub fn square(dims: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![lo; dims], vec![hi; dims], vec![n; dims])
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lo.len();
        if d == 0 || d > 3 || self.hi.len() != d || self.resolution.len() != d {
            return Err(Error::Config(format!("grid must have 1 to 3 consistent dimensions, got {d}")));
        }
        for i in 0..d {
            if !(self.lo[i] < self.hi[i]) || !self.lo[i].is_finite() || !self.hi[i].is_finite() {
                return Err(Error::Config(format!("grid axis {i}: need lo < hi, got [{}, {}]", self.lo[i], self.hi[i])));
            }
            if self.resolution[i] < 2 {
                return Err(Error::Config(format!("grid axis {i}: resolution must be at least 2")));
            }
        }
        let cells = self.resolution.iter().try_fold(1usize, |a, &n| a.checked_mul(n));
        match cells {
            Some(c) if c <= MAX_CELLS => Ok(()),
            _ => Err(Error::Config(format!("grid exceeds the budget of {MAX_CELLS} cells"))),
        }
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn cells(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.resolution[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dims()).map(|a| self.cell_width(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// Center of cell `idx` (last axis varies fastest).
    pub fn center(&self, idx: usize) -> Vec<f64> {
        let mut rem = idx;
        let mut out = vec![0.0; self.dims()];
        for a in (0..self.dims()).rev() {
            let i = rem % self.resolution[a];
            rem /= self.resolution[a];
            out[a] = self.lo[a] + (i as f64 + 0.5) * self.cell_width(a);
        }
        out
    }

    /// Cell containing `x`, or `None` outside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for a in 0..self.dims() {
            if !(x[a] >= self.lo[a] && x[a] <= self.hi[a]) {
                return None;
            }
            let i = (((x[a] - self.lo[a]) / self.cell_width(a)) as usize).min(self.resolution[a] - 1);
            idx = idx * self.resolution[a] + i;
        }
        Some(idx)
    }

    /// Same box at twice the resolution per axis.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.lo.clone(), self.hi.clone(), self.resolution.iter().map(|n| n * 2).collect())
    }

    fn centers_tensor(&self, range: std::ops::Range<usize>) -> Tensor {
        let d = self.dims();
        let n = range.len();
        let data = range.flat_map(|i| self.center(i)).collect();
        Tensor::new(vec![n, d], data).expect("grid chunk shape")
    }

    fn chunks(&self) -> Vec<std::ops::Range<usize>> {
        (0..self.cells()).step_by(CHUNK).map(|s| s..(s + CHUNK).min(self.cells())).collect()
    }

    fn check_model(&self, model: &EnergyModel) -> Result<()> {
        if model.spec().input_shape != [self.dims()] {
            return Err(Error::Dimension(format!(
                "model input {:?} does not match a {}-D grid",
                model.spec().input_shape,
                self.dims()
            )));
        }
        Ok(())
    }
}

/// `log Σ_y exp f(x_cell)[y]` for every cell, in cell order.
pub fn cell_log_masses(model: &EnergyModel, grid: &Grid) -> Result<Vec<f64>> {
    grid.validate()?;
    grid.check_model(model)?;
    let parts: Vec<Result<Vec<f64>>> = grid
        .chunks()
        .into_par_iter()
        .map(|r| {
            let logits = model.forward(&grid.centers_tensor(r))?;
            Ok(logits.data().chunks(model.num_classes()).map(logsumexp).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(grid.cells());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// `log Z` over the grid box, accumulated as a log-sum-exp in cell order.
pub fn log_partition_function(model: &EnergyModel, grid: &Grid) -> Result<f64> {
    let lm = cell_log_masses(model, grid)?;
    Ok(grid.cell_volume().ln() + logsumexp(&lm))
}

pub fn partition_function(model: &EnergyModel, grid: &Grid) -> Result<f64> {
    Ok(log_partition_function(model, grid)?.exp())
}

/// Density values on the cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid,
    /// Density (not mass) at each cell.
    pub values: Vec<f64>,
}

impl DensityField {
    /// Normalizes per-cell log densities so the field integrates to one.
    pub fn from_log_values(grid: Grid, log_values: &[f64]) -> Self {
        let log_z = grid.cell_volume().ln() + logsumexp(log_values);
        let values = log_values.iter().map(|&l| (l - log_z).exp()).collect();
        Self { grid, values }
    }

    /// Normalized restriction of an unnormalized log density to the grid.
    pub fn from_log_density(grid: Grid, log_density: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        grid.validate()?;
        let logs: Vec<f64> = (0..grid.cells()).into_par_iter().map(|i| log_density(&grid.center(i))).collect();
        Ok(Self::from_log_values(grid, &logs))
    }

    /// `Σ density · cell volume`.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn masses(&self) -> Vec<f64> {
        let v = self.grid.cell_volume();
        self.values.iter().map(|p| p * v).collect()
    }

    /// Total variation distance to another field on the same grid.
    pub fn tv(&self, other: &DensityField) -> Result<f64> {
        self.same_grid(other)?;
        let v = self.grid.cell_volume();
        Ok(0.5 * self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * v)
    }

    /// `KL(self ‖ other)` over cell masses with additive smoothing 1e-9.
    pub fn kl(&self, other: &DensityField) -> Result<f64> {
        self.same_grid(other)?;
        Ok(smoothed_kl(&self.masses(), &other.masses()))
    }

    fn same_grid(&self, other: &DensityField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Dimension("density fields live on different grids".into()));
        }
        Ok(())
    }

    /// The same density on a grid with `factor` times fewer cells per axis;
    /// each coarse cell carries the summed mass of its fine cells.
    pub fn coarsened(&self, factor: usize) -> Result<DensityField> {
        let g = &self.grid;
        if factor == 0 || g.resolution.iter().any(|&n| n % factor != 0 || n / factor < 2) {
            return Err(Error::Config(format!("cannot coarsen resolution {:?} by {factor}", g.resolution)));
        }
        let coarse = Grid::new(g.lo.clone(), g.hi.clone(), g.resolution.iter().map(|n| n / factor).collect())?;
        let mut mass = vec![0.0; coarse.cells()];
        for (i, m) in self.masses().into_iter().enumerate() {
            let c = coarse.locate(&g.center(i)).expect("fine centers lie inside the box");
            mass[c] += m;
        }
        let v = coarse.cell_volume();
        Ok(DensityField { values: mass.into_iter().map(|m| m / v).collect(), grid: coarse })
    }

    /// Exact inverse-CDF sampling: pick a cell by mass, then a uniform point inside it.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let masses = self.masses();
        let mut cdf = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in &masses {
            acc += m;
            cdf.push(acc);
        }
        let d = self.grid.dims();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let u = rng.random::<f64>() * acc;
            let cell = cdf.partition_point(|&c| c <= u).min(masses.len() - 1);
            let c = self.grid.center(cell);
            for (a, ca) in c.iter().enumerate() {
                let w = self.grid.cell_width(a);
                data.push(ca + (rng.random::<f64>() - 0.5) * w);
            }
        }
        Tensor::new(vec![n, d], data).expect("sample shape")
    }
}

fn smoothed_kl(p: &[f64], q: &[f64]) -> f64 {
    const SMOOTH: f64 = 1e-9;
    let zp: f64 = p.iter().map(|v| v + SMOOTH).sum();
    let zq: f64 = q.iter().map(|v| v + SMOOTH).sum();
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let pa = (a + SMOOTH) / zp;
            let qb = (b + SMOOTH) / zq;
            pa * (pa / qb).ln()
        })
        .sum()
}

/// The model's box-restricted density on every grid cell.
pub fn exact_density(model: &EnergyModel, grid: &Grid) -> Result<DensityField> {
    let lm = cell_log_masses(model, grid)?;
    Ok(DensityField::from_log_values(grid.clone(), &lm))
}

/// Parameter gradient of `Σ_i weights[i] · E(x_i)` over rows of `inputs`.
fn weighted_energy_grad(model: &EnergyModel, inputs: &Tensor, weights: &[f64]) -> Result<Vec<Tensor>> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, true);
    let x = tape.constant(inputs.clone());
    let logits = model.record(&mut tape, &params, x, None)?;
    let e = record_marginal_energy(&mut tape, logits)?;
    let w = tape.constant(Tensor::new(vec![weights.len()], weights.to_vec())?);
    let we = tape.mul(e, w)?;
    let total = tape.sum(we)?;
    let mut g = tape.backward(total)?;
    Ok(params.iter().map(|&p| g.take(p).expect("parameter leaf")).collect())
}

fn add_into(acc: &mut [Tensor], g: &[Tensor], scale: f64) {
    for (a, b) in acc.iter_mut().zip(g) {
        a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += scale * y);
    }
}

/// `E_{p_θ}[∇_θ E(x)]` under the box-restricted density.
pub fn model_energy_gradient(model: &EnergyModel, grid: &Grid) -> Result<GradientSet> {
    let density = exact_density(model, grid)?;
    let masses = density.masses();
    let parts: Vec<Result<Vec<Tensor>>> = grid
        .chunks()
        .into_par_iter()
        .map(|r| {
            let x = grid.centers_tensor(r.clone());
            weighted_energy_grad(model, &x, &masses[r])
        })
        .collect();
    let mut acc: Vec<Tensor> = model.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    for p in parts {
        add_into(&mut acc, &p?, 1.0);
    }
    Ok(GradientSet::from_params(acc))
}

/// Exact maximum-likelihood gradient of the mean negative log density of `data`:
/// `mean_data ∇_θ E(x) - E_{p_θ}[∇_θ E(x)]`.
pub fn exact_ml_gradient(model: &EnergyModel, grid: &Grid, data: &Tensor) -> Result<GradientSet> {
    if data.rows() == 0 {
        return Err(Error::Config("empty data batch".into()));
    }
    let w = vec![1.0 / data.rows() as f64; data.rows()];
    let mut total = weighted_energy_grad(model, data, &w)?;
    let model_term = model_energy_gradient(model, grid)?;
    add_into(&mut total, &model_term.params, -1.0);
    Ok(GradientSet::from_params(total))
}

/// Cosine similarity between the contrastive-divergence gradient built from
/// `negatives` and the exact gradient for the same data batch.
pub fn cd_cosine(model: &EnergyModel, grid: &Grid, data: &Tensor, negatives: &Tensor) -> Result<f64> {
    let exact = exact_ml_gradient(model, grid, data)?;
    let (_, g) = cd_loss_and_grads(model, data, negatives)?;
    Ok(GradientSet::from_params(g).cosine(&exact))
}

/// Divergence between the empirical histogram of `samples` and a density field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub tv: f64,
    /// `KL(empirical ‖ field)` over cell masses, smoothed by 1e-9.
    pub kl: f64,
    /// Fraction of samples outside the grid box.
    pub outside: f64,
}

/// Histograms `samples` on the field's grid and compares. Samples outside
/// the box go to a sink bin where the field has zero mass.
pub fn histogram_divergence(samples: &Tensor, field: &DensityField) -> Result<Divergence> {
    let grid = &field.grid;
    if samples.ndim() != 2 || samples.row_len() != grid.dims() {
        return Err(Error::Dimension(format!("samples {:?} do not match a {}-D grid", samples.shape(), grid.dims())));
    }
    let n = samples.rows();
    let mut counts = vec![0usize; grid.cells() + 1];
    for r in 0..n {
        match grid.locate(samples.row(r)) {
            Some(c) => counts[c] += 1,
            None => counts[grid.cells()] += 1,
        }
    }
    let mut emp: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let mut model = field.masses();
    model.push(0.0);
    let tv = 0.5 * emp.iter().zip(&model).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let kl = smoothed_kl(&emp, &model);
    let outside = emp.pop().unwrap_or(0.0);
    Ok(Divergence { tv, kl, outside })
}

/// `(TV, KL)` between samples and the model's exact density on `grid`.
pub fn density_divergence(samples: &Tensor, model: &EnergyModel, grid: &Grid) -> Result<Divergence> {
    histogram_divergence(samples, &exact_density(model, grid)?)
}
