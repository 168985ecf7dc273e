//! Stochastic gradient Langevin dynamics and the replay buffer that seeds it.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::energy::marginal_energy_input_grad;
use crate::error::{Error, Result};
use crate::network::EnergyModel;
use crate::tensor::Tensor;

/// Anything with a per-row energy and input gradient over a batch.
pub trait EnergySurface {
    /// Energies `[B]` and `∇_x E` with the batch's shape.
    fn energy_and_grad(&self, batch: &Tensor) -> Result<(Vec<f64>, Tensor)>;
}

impl EnergySurface for EnergyModel {
    fn energy_and_grad(&self, batch: &Tensor) -> Result<(Vec<f64>, Tensor)> {
        marginal_energy_input_grad(self, batch)
    }
}

/// `E(x) = ‖x‖² / 2` per row, optionally scaled by a precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub precision: f64,
}

impl Default for Quadratic {
    fn default() -> Self {
        Self { precision: 1.0 }
    }
}

impl EnergySurface for Quadratic {
    fn energy_and_grad(&self, batch: &Tensor) -> Result<(Vec<f64>, Tensor)> {
        let n = batch.row_len();
        let e = batch.data().chunks(n).map(|r| 0.5 * self.precision * r.iter().map(|v| v * v).sum::<f64>()).collect();
        Ok((e, batch.map(|v| self.precision * v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepDecay {
    /// `λ_t = λ (1 - t/L)`.
    Linear,
    Constant,
}

/// How step size and injected noise relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCoupling {
    /// `x + λ ∇log p + N(0, σ²)`: step and noise set independently.
    Decoupled,
    /// `x - (η/2) ∇E + N(0, η)`: the step size `η` also fixes the noise.
    Langevin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgldConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Noise standard deviation; ignored under [`NoiseCoupling::Langevin`].
    pub noise: f64,
    /// Elementwise clamp applied after every step.
    pub clip: Option<(f64, f64)>,
    pub decay: StepDecay,
    pub coupling: NoiseCoupling,
}

impl Default for SgldConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            step_size: 1.0,
            noise: 1e-2,
            clip: Some((-1.0, 1.0)),
            decay: StepDecay::Linear,
            coupling: NoiseCoupling::Decoupled,
        }
    }
}

impl SgldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("SGLD needs at least one step".into()));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("SGLD step size {} must be finite and non-negative", self.step_size)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("SGLD noise {} must be finite and non-negative", self.noise)));
        }
        if let Some((lo, hi)) = self.clip {
            if lo >= hi {
                return Err(Error::Config(format!("clip range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    /// Gradient step and noise scale at iteration `t` of a chain of `len` steps.
    fn schedule(&self, t: usize, len: usize) -> (f64, f64) {
        let lambda = match self.decay {
            StepDecay::Linear => self.step_size * (1.0 - t as f64 / len as f64),
            StepDecay::Constant => self.step_size,
        };
        match self.coupling {
            NoiseCoupling::Decoupled => (lambda, self.noise),
            NoiseCoupling::Langevin => (lambda / 2.0, lambda.sqrt()),
        }
    }
}

/// One update `x' = x - step·∇E(x) + noise·ξ`, optionally clamped.
pub fn sgld_step<S, R>(surface: &S, x: &Tensor, step: f64, noise: f64, rng: &mut R, clip: Option<(f64, f64)>) -> Result<Tensor>
where
    S: EnergySurface + ?Sized,
    R: Rng + ?Sized,
{
    let (_, grad) = surface.energy_and_grad(x)?;
    if !grad.all_finite() {
        return Err(Error::divergence("sgld", 0, grad.data()));
    }
    let mut out = x.clone();
    for (v, g) in out.data_mut().iter_mut().zip(grad.data()) {
        *v -= step * g;
        if noise > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            *v += noise * z;
        }
        if let Some((lo, hi)) = clip {
            *v = v.clamp(lo, hi);
        }
    }
    if !out.all_finite() {
        return Err(Error::divergence("sgld", 0, out.data()));
    }
    Ok(out)
}

fn tag_iteration(e: Error, t: usize) -> Error {
    match e {
        Error::Divergence(mut info) => {
            info.iteration = t;
            Error::Divergence(info)
        }
        other => other,
    }
}

/// Runs `cfg.steps` updates from `x0` and returns the final state.
pub fn sample_chain<S, R>(surface: &S, x0: &Tensor, cfg: &SgldConfig, rng: &mut R) -> Result<Tensor>
where
    S: EnergySurface + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let mut x = x0.clone();
    for t in 0..cfg.steps {
        let (step, noise) = cfg.schedule(t, cfg.steps);
        x = sgld_step(surface, &x, step, noise, rng, cfg.clip).map_err(|e| tag_iteration(e, t))?;
    }
    Ok(x)
}

/// Test-time refinement: `steps` updates from `x`, returning every snapshot
/// `[x_0, ..., x_steps]`. `cfg.steps` is ignored; the schedule spans `steps`.
pub fn refine<S, R>(surface: &S, x: &Tensor, steps: usize, cfg: &SgldConfig, rng: &mut R) -> Result<Vec<Tensor>>
where
    S: EnergySurface + ?Sized,
    R: Rng + ?Sized,
{
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.clone());
    for t in 0..steps {
        let (step, noise) = cfg.schedule(t, steps);
        let next = sgld_step(surface, out.last().expect("non-empty"), step, noise, rng, cfg.clip)
            .map_err(|e| tag_iteration(e, t))?;
        out.push(next);
    }
    Ok(out)
}

/// Axis-aligned box used for fresh chain initializations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InitBox {
    /// Same bounds on every coordinate of a sample.
    pub fn uniform(len: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; len], hi: vec![hi; len] }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| l + (h - l) * rng.random::<f64>()).collect()
    }
}

/// FIFO store of past negative samples.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    reinit_prob: f64,
    sample_shape: Vec<usize>,
    init: InitBox,
    store: VecDeque<Vec<f64>>,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 10_000;
    pub const DEFAULT_REINIT: f64 = 0.05;

    pub fn new(sample_shape: Vec<usize>, init: InitBox, capacity: usize, reinit_prob: f64) -> Result<Self> {
        let len: usize = sample_shape.iter().product();
        if init.lo.len() != len || init.hi.len() != len {
            return Err(Error::Dimension(format!("init box has {} coordinates, samples have {len}", init.lo.len())));
        }
        if capacity == 0 {
            return Err(Error::Config("replay buffer capacity must be positive".into()));
        }
        if !(0.0..=1.0).contains(&reinit_prob) {
            return Err(Error::Config(format!("reinit probability {reinit_prob} outside [0, 1]")));
        }
        Ok(Self { capacity, reinit_prob, sample_shape, init, store: VecDeque::with_capacity(capacity.min(1 << 16)) })
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn init_box(&self) -> &InitBox {
        &self.init
    }

    /// Stored samples, oldest first.
    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.store.iter().map(Vec::as_slice)
    }

    /// Each slot is a fresh init sample with probability ρ (always, while
    /// empty), otherwise a copy of a uniformly chosen stored sample.
    pub fn draw<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Tensor> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let mut data = Vec::with_capacity(batch_size * self.init.lo.len());
        for _ in 0..batch_size {
            let fresh = self.store.is_empty() || rng.random::<f64>() < self.reinit_prob;
            if fresh {
                data.extend(self.init.sample(rng));
            } else {
                let i = rng.random_range(0..self.store.len());
                data.extend_from_slice(&self.store[i]);
            }
        }
        let mut shape = vec![batch_size];
        shape.extend_from_slice(&self.sample_shape);
        Tensor::new(shape, data)
    }

    /// Append every row of `samples`, evicting the oldest past capacity.
    pub fn push(&mut self, samples: &Tensor) -> Result<()> {
        if samples.ndim() != self.sample_shape.len() + 1 || samples.shape()[1..] != self.sample_shape[..] {
            return Err(Error::Dimension(format!(
                "samples {:?} do not match buffer sample shape {:?}",
                samples.shape(),
                self.sample_shape
            )));
        }
        for r in 0..samples.rows() {
            if self.store.len() == self.capacity {
                self.store.pop_front();
            }
            self.store.push_back(samples.row(r).to_vec());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Flat;
    impl EnergySurface for Flat {
        fn energy_and_grad(&self, batch: &Tensor) -> Result<(Vec<f64>, Tensor)> {
            Ok((vec![0.0; batch.rows()], Tensor::zeros(batch.shape())))
        }
    }

    struct Steep;
    impl EnergySurface for Steep {
        fn energy_and_grad(&self, batch: &Tensor) -> Result<(Vec<f64>, Tensor)> {
            Ok((vec![0.0; batch.rows()], Tensor::full(batch.shape(), -71.0)))
        }
    }

    struct Broken;
    impl EnergySurface for Broken {
        fn energy_and_grad(&self, batch: &Tensor) -> Result<(Vec<f64>, Tensor)> {
            Ok((vec![0.0; batch.rows()], Tensor::full(batch.shape(), f64::NAN)))
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn zero_gradient_without_noise_is_fixed_point() {
        let x = Tensor::new(vec![2, 2], vec![0.3, -0.1, 0.9, 0.0]).unwrap();
        assert_eq!(sgld_step(&Flat, &x, 0.7, 0.0, &mut rng(), None).unwrap(), x);
    }

    #[test]
    fn quadratic_step_by_hand() {
        let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let y = sgld_step(&Quadratic::default(), &x, 0.1, 0.0, &mut rng(), None).unwrap();
        assert!((y.item() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn clip_clamps() {
        let x = Tensor::new(vec![1, 1], vec![0.99]).unwrap();
        // gradient -71 and step 0.01 moves 0.99 to 1.70 before clamping
        let y = sgld_step(&Steep, &x, 0.01, 0.0, &mut rng(), Some((-1.0, 1.0))).unwrap();
        assert_eq!(y.item(), 1.0);
    }

    #[test]
    fn non_finite_gradient_reports_divergence() {
        let x = Tensor::zeros(&[1, 3]);
        let cfg = SgldConfig { steps: 4, clip: None, ..Default::default() };
        match sample_chain(&Broken, &x, &cfg, &mut rng()) {
            Err(Error::Divergence(info)) => {
                assert_eq!(info.non_finite, 3);
                assert_eq!(info.iteration, 0);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn single_step_chain_is_one_sgld_step() {
        let x = Tensor::new(vec![2, 2], vec![0.5, -0.5, 0.25, 2.0]).unwrap();
        let cfg = SgldConfig { steps: 1, step_size: 0.3, noise: 0.05, clip: None, ..Default::default() };
        let chain = sample_chain(&Quadratic::default(), &x, &cfg, &mut rng()).unwrap();
        let step = sgld_step(&Quadratic::default(), &x, 0.3, 0.05, &mut rng(), None).unwrap();
        assert_eq!(chain, step);
    }

    #[test]
    fn zero_step_zero_noise_leaves_input() {
        let x = Tensor::new(vec![1, 2], vec![0.5, -0.5]).unwrap();
        let cfg = SgldConfig { steps: 13, step_size: 0.0, noise: 0.0, ..Default::default() };
        assert_eq!(sample_chain(&Quadratic::default(), &x, &cfg, &mut rng()).unwrap(), x);
    }

    #[test]
    fn deterministic_chain_contracts_on_quadratic() {
        let x = Tensor::new(vec![1, 2], vec![3.0, -4.0]).unwrap();
        let cfg = SgldConfig { steps: 500, step_size: 0.05, noise: 0.0, clip: None, decay: StepDecay::Constant, ..Default::default() };
        let y = sample_chain(&Quadratic::default(), &x, &cfg, &mut rng()).unwrap();
        assert!(y.sq_norm() < x.sq_norm());
        // (1 - 0.05)^500 contraction of the linear map
        let expect = 0.95_f64.powi(500) * 5.0;
        assert!((y.sq_norm().sqrt() - expect).abs() < 1e-12);
    }

    #[test]
    fn chains_repeat_bitwise_under_seed() {
        let x = Tensor::new(vec![3, 2], vec![0.1; 6]).unwrap();
        let cfg = SgldConfig { clip: None, ..Default::default() };
        let a = sample_chain(&Quadratic::default(), &x, &cfg, &mut rng()).unwrap();
        let b = sample_chain(&Quadratic::default(), &x, &cfg, &mut rng()).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn refine_trajectory_shape() {
        let x = Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap();
        let cfg = SgldConfig { decay: StepDecay::Constant, ..Default::default() };
        assert_eq!(refine(&Quadratic::default(), &x, 0, &cfg, &mut rng()).unwrap(), vec![x.clone()]);
        assert_eq!(refine(&Quadratic::default(), &x, 7, &cfg, &mut rng()).unwrap().len(), 8);
    }

    fn buffer(cap: usize, rho: f64) -> ReplayBuffer {
        ReplayBuffer::new(vec![1], InitBox::uniform(1, 10.0, 11.0), cap, rho).unwrap()
    }

    #[test]
    fn buffer_fifo_eviction() {
        let mut b = buffer(2, 0.0);
        for v in [1.0, 2.0, 3.0] {
            b.push(&Tensor::new(vec![1, 1], vec![v]).unwrap()).unwrap();
        }
        let held: Vec<f64> = b.samples().map(|s| s[0]).collect();
        assert_eq!(held, vec![2.0, 3.0]);
    }

    #[test]
    fn buffer_push_sizes() {
        let mut b = buffer(5, 0.0);
        b.push(&Tensor::new(vec![1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(b.len(), 1);
        b.push(&Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(b.len(), 4);
        b.push(&Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(b.len(), 5);
        assert!(b.push(&Tensor::zeros(&[1, 2])).is_err());
    }

    #[test]
    fn buffer_draw_sources() {
        let mut r = rng();
        // empty: everything fresh, i.e. inside the init box [10, 11]
        let d = buffer(4, 0.0).draw(16, &mut r).unwrap();
        assert!(d.data().iter().all(|v| (10.0..=11.0).contains(v)));

        let mut b = buffer(4, 0.0);
        b.push(&Tensor::new(vec![2, 1], vec![-1.0, -2.0]).unwrap()).unwrap();
        let d = b.draw(32, &mut r).unwrap();
        assert!(d.data().iter().all(|&v| v == -1.0 || v == -2.0));
        assert_eq!(b.len(), 2, "drawing copies, never removes");

        let mut b = buffer(4, 1.0);
        b.push(&Tensor::new(vec![2, 1], vec![-1.0, -2.0]).unwrap()).unwrap();
        let d = b.draw(32, &mut r).unwrap();
        assert!(d.data().iter().all(|v| (10.0..=11.0).contains(v)));
    }
}
