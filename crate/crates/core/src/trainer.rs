//! Hybrid generative–discriminative training.
//!
//! Each iteration draws a data batch, refines replay-buffer samples with SGLD
//! into negatives, and updates the network on
//! `α·c·ℓ_G + (1-α)·ℓ_D` where `ℓ_D` is cross-entropy, `ℓ_G` the
//! contrastive-divergence loss and `c = g_D / (g_G + ε)` a stop-gradient ratio
//! of the two losses' parameter-gradient norms.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::checkpoint::Checkpoint;
use crate::dataset::Dataset;
use crate::energy::{posteriors, record_marginal_energy};
use crate::error::{Error, Result};
use crate::network::{EnergyModel, NetworkSpec};
use crate::optim::{adam_step, lr_at, AdamConfig, AdamState};
use crate::sampler::{sample_chain, InitBox, ReplayBuffer, SgldConfig};
use crate::tensor::Tensor;

/// Which iterate `train` returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Final,
    /// Lowest held-out cross-entropy among the end-of-epoch evaluations.
    BestHoldoutLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub label_smoothing: f64,
    pub input_noise: f64,
    pub balance_eps: f64,
    pub adam: AdamConfig,
    pub sgld: SgldConfig,
    pub buffer_capacity: usize,
    pub reinit_prob: f64,
    /// Random crop and horizontal flip; applied to image data only.
    pub augment: bool,
    /// Held-out evaluation period; `None` means once per epoch.
    pub eval_every: Option<usize>,
    pub selection: Selection,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            learning_rate: 1e-4,
            batch_size: 64,
            iterations: 5000,
            warmup: 1000,
            label_smoothing: 0.0,
            input_noise: 0.05,
            balance_eps: 1e-8,
            adam: AdamConfig::default(),
            sgld: SgldConfig::default(),
            buffer_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            reinit_prob: ReplayBuffer::DEFAULT_REINIT,
            augment: true,
            eval_every: None,
            selection: Selection::Final,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.iterations > 0 && self.warmup >= self.iterations {
            return Err(Error::Config(format!(
                "warmup ({}) must be shorter than the run ({})",
                self.warmup, self.iterations
            )));
        }
        let rates = [self.learning_rate, self.label_smoothing, self.input_noise, self.balance_eps];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config("rates must be finite and non-negative".into()));
        }
        if self.label_smoothing >= 1.0 {
            return Err(Error::Config("label smoothing must be below 1".into()));
        }
        if self.alpha > 0.0 {
            self.sgld.validate()?;
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainRecord {
    pub iter: usize,
    pub loss: f64,
    pub l_d: f64,
    pub l_g: f64,
    pub c: f64,
    pub g_d: f64,
    pub g_g: f64,
    pub lr: f64,
    pub holdout_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub const HEADER: &'static str = "iter,loss,l_d,l_g,c,g_d,g_g,lr,holdout_acc";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.records {
            let acc = r.holdout_acc.map(|a| a.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.iter, r.loss, r.l_d, r.l_g, r.c, r.g_d, r.g_g, r.lr, acc
            ));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Target distribution for smoothed cross-entropy: `1 - s` on the true
/// class, `s / (K - 1)` on each other class.
fn smoothed_targets(labels: &[usize], classes: usize, smoothing: f64) -> Result<Tensor> {
    let off = if classes > 1 { smoothing / (classes - 1) as f64 } else { 0.0 };
    let on = if classes > 1 { 1.0 - smoothing } else { 1.0 };
    let mut data = vec![off; labels.len() * classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Label { label: y, classes });
        }
        data[i * classes + y] = on;
    }
    Tensor::new(vec![labels.len(), classes], data)
}

/// Mean smoothed cross-entropy of `[B, K]` logits, recorded on a tape.
pub fn record_disc_loss(tape: &mut Tape, logits: Var, labels: &[usize], smoothing: f64) -> Result<Var> {
    let shape = tape.value(logits).shape().to_vec();
    let (b, k) = (shape[0], shape[1]);
    if labels.len() != b {
        return Err(Error::Dimension(format!("{} labels for {b} rows", labels.len())));
    }
    let q = tape.constant(smoothed_targets(labels, k, smoothing)?);
    let lse = tape.logsumexp(logits)?;
    let lse_total = tape.sum(lse)?;
    let picked = tape.mul(logits, q)?;
    let picked_total = tape.sum(picked)?;
    let diff = tape.sub(lse_total, picked_total)?;
    tape.scale(diff, 1.0 / b as f64)
}

/// `ℓ_G = mean E(x⁺) - mean E(x⁻)`, with negatives as constants.
pub fn record_cd_loss(tape: &mut Tape, model: &EnergyModel, params: &[Var], x_pos: &Tensor, x_neg: &Tensor) -> Result<Var> {
    let pos = tape.constant(x_pos.clone());
    let neg = tape.constant(x_neg.clone());
    let lp = model.record(tape, params, pos, None)?;
    let ln = model.record(tape, params, neg, None)?;
    let ep = record_marginal_energy(tape, lp)?;
    let en = record_marginal_energy(tape, ln)?;
    let mp = tape.mean(ep)?;
    let mn = tape.mean(en)?;
    tape.sub(mp, mn)
}

/// Mean smoothed cross-entropy of a model on a labeled batch.
pub fn disc_loss(model: &EnergyModel, x: &Tensor, y: &[usize], smoothing: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let logits = model.record(&mut tape, &params, xv, None)?;
    let l = record_disc_loss(&mut tape, logits, y, smoothing)?;
    Ok(tape.value(l).item())
}

/// Contrastive-divergence loss `mean E(x⁺) - mean E(x⁻)`.
pub fn cd_loss(model: &EnergyModel, x_pos: &Tensor, x_neg: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false);
    let l = record_cd_loss(&mut tape, model, &params, x_pos, x_neg)?;
    Ok(tape.value(l).item())
}

/// Gradient-norm ratio `g_D / (g_G + ε)`.
pub fn grad_balance(g_d: f64, g_g: f64, eps: f64) -> f64 {
    g_d / (g_g + eps)
}

/// `α·c·ℓ_G + (1-α)·ℓ_D`.
pub fn combined_loss(alpha: f64, c: f64, l_g: f64, l_d: f64) -> f64 {
    alpha * c * l_g + (1.0 - alpha) * l_d
}

/// Global Euclidean norm over a list of tensors.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// Value and parameter gradients of the discriminative loss on a batch.
pub fn disc_loss_and_grads(
    model: &EnergyModel,
    x: &Tensor,
    y: &[usize],
    smoothing: f64,
    dropout: Option<&mut dyn RngCore>,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let logits = model.record(&mut tape, &params, xv, dropout)?;
    let l = record_disc_loss(&mut tape, logits, y, smoothing)?;
    let mut g = tape.backward(l)?;
    let grads = params.iter().map(|&p| g.take(p).expect("parameter leaf")).collect();
    Ok((tape.value(l).item(), grads))
}

/// Value and parameter gradients of the contrastive-divergence loss.
pub fn cd_loss_and_grads(model: &EnergyModel, x_pos: &Tensor, x_neg: &Tensor) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, true);
    let l = record_cd_loss(&mut tape, model, &params, x_pos, x_neg)?;
    let mut g = tape.backward(l)?;
    let grads = params.iter().map(|&p| g.take(p).expect("parameter leaf")).collect();
    Ok((tape.value(l).item(), grads))
}

/// Adds i.i.d. Gaussian noise of standard deviation `std` to every entry.
pub fn add_input_noise<R: Rng + ?Sized>(x: &Tensor, std: f64, rng: &mut R) -> Tensor {
    if std == 0.0 {
        return x.clone();
    }
    let mut out = x.clone();
    for v in out.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += std * z;
    }
    out
}

/// Random shift by up to `pad` pixels (background -1 fills the exposed edge)
/// and random horizontal flip, per image.
pub fn augment_images<R: Rng + ?Sized>(x: &Tensor, pad: usize, rng: &mut R) -> Tensor {
    let [b, c, h, w] = *x.shape() else { return x.clone() };
    let mut out = Tensor::full(x.shape(), -1.0);
    let p = pad as i64;
    for i in 0..b {
        let dy = rng.random_range(-p..=p) as isize;
        let dx = rng.random_range(-p..=p) as isize;
        let flip = rng.random::<bool>();
        let src = x.row(i).to_vec();
        let dst = out.row_mut(i);
        for ch in 0..c {
            for yy in 0..h {
                let sy = yy as isize + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for xx in 0..w {
                    let tx = if flip { w - 1 - xx } else { xx };
                    let sx = tx as isize + dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    dst[(ch * h + yy) * w + xx] = src[(ch * h + sy as usize) * w + sx as usize];
                }
            }
        }
    }
    out
}

/// Fraction of rows whose arg-max logit equals the label.
pub fn accuracy(model: &EnergyModel, data: &Dataset) -> Result<f64> {
    let preds = predict(model, data.inputs())?;
    let hits = preds.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Arg-max class for every row, evaluated in chunks.
pub fn predict(model: &EnergyModel, inputs: &Tensor) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(inputs.rows());
    for chunk in chunks(inputs.rows(), 1024) {
        let logits = model.forward(&inputs.select_rows(&chunk))?;
        out.extend(logits.data().chunks(model.num_classes()).map(argmax));
    }
    Ok(out)
}

/// Mean unsmoothed cross-entropy on a dataset.
pub fn mean_nll(model: &EnergyModel, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for chunk in chunks(data.len(), 1024) {
        let p = posteriors(model, &data.inputs().select_rows(&chunk))?;
        for (row, &i) in chunk.iter().enumerate() {
            total -= p.row(row)[data.labels()[i]].max(1e-300).ln();
        }
    }
    Ok(total / data.len() as f64)
}

fn chunks(n: usize, size: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(size).map(move |s| (s..(s + size).min(n)).collect())
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mutable training state: model, optimizer moments, replay buffer, RNG.
pub struct Trainer {
    pub model: EnergyModel,
    pub adam: AdamState,
    pub buffer: ReplayBuffer,
    pub cfg: TrainConfig,
    rng: ChaCha8Rng,
    step: usize,
}

/// Salt separating the training RNG stream from the initialization stream.
const TRAIN_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// The RNG a [`Trainer`] seeded with `seed` draws batches, noise and chains from.
pub fn training_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ TRAIN_STREAM)
}

impl Trainer {
    pub fn new(model: EnergyModel, cfg: TrainConfig, init: InitBox) -> Result<Self> {
        cfg.validate()?;
        let buffer = ReplayBuffer::new(model.spec().input_shape.clone(), init, cfg.buffer_capacity, cfg.reinit_prob)?;
        let adam = AdamState::zeros_like(model.params());
        let rng = training_rng(cfg.seed);
        Ok(Self { model, adam, buffer, cfg, rng, step: 0 })
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Draws a training batch from `data`, augmenting images when configured.
    pub fn sample_batch(&mut self, data: &Dataset) -> (Tensor, Vec<usize>) {
        let idx = data.sample_indices(self.cfg.batch_size, &mut self.rng);
        let mut x = data.inputs().select_rows(&idx);
        if self.cfg.augment && data.is_image() {
            x = augment_images(&x, 2, &mut self.rng);
        }
        let y = idx.iter().map(|&i| data.labels()[i]).collect();
        (x, y)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { alpha: self.cfg.alpha, step: self.step as u64, model: self.model.clone(), moments: Some(self.adam.clone()) }
    }

    /// One iteration of the hybrid objective on a labeled batch.
    pub fn train_step(&mut self, x: &Tensor, y: &[usize]) -> Result<TrainRecord> {
        let t = self.step;
        let cfg = &self.cfg;
        let alpha = cfg.alpha;
        let lr = lr_at(t, cfg.learning_rate, cfg.warmup, cfg.iterations.max(1));
        let x_pos = add_input_noise(x, cfg.input_noise, &mut self.rng);

        let dropout = (self.model.spec().dropout > 0.0).then_some(&mut self.rng as &mut dyn RngCore);
        let (l_d, grads_d) = disc_loss_and_grads(&self.model, &x_pos, y, cfg.label_smoothing, dropout)?;
        let g_d = global_norm(&grads_d);

        let (l_g, g_g, c, grads) = if alpha == 0.0 {
            (0.0, 0.0, 1.0, grads_d)
        } else {
            let x0 = self.buffer.draw(x.rows(), &mut self.rng)?;
            let x_neg = sample_chain(&self.model, &x0, &cfg.sgld, &mut self.rng)?;
            let (l_g, grads_g) = cd_loss_and_grads(&self.model, &x_pos, &x_neg)?;
            let g_g = global_norm(&grads_g);
            self.buffer.push(&x_neg)?;
            // the ratio only applies while both objectives are active
            let c = if alpha < 1.0 { grad_balance(g_d, g_g, cfg.balance_eps) } else { 1.0 };
            let grads = if alpha == 1.0 {
                grads_g
            } else {
                let wg = alpha * c;
                let wd = 1.0 - alpha;
                grads_g
                    .iter()
                    .zip(&grads_d)
                    .map(|(gg, gd)| gg.zip_map(gd, |a, b| wg * a + wd * b))
                    .collect::<Result<Vec<_>>>()?
            };
            (l_g, g_g, c, grads)
        };

        let loss = combined_loss(alpha, c, l_g, l_d);
        if !loss.is_finite() {
            return Err(Error::divergence("loss", t, &[l_d, l_g, c]));
        }
        adam_step(self.model.params_mut(), &grads, &mut self.adam, lr, &self.cfg.adam).map_err(|e| match e {
            Error::Divergence(mut info) => {
                info.iteration = t;
                Error::Divergence(info)
            }
            other => other,
        })?;
        self.step += 1;
        Ok(TrainRecord { iter: t, loss, l_d, l_g, c, g_d, g_g, lr, holdout_acc: None })
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

impl TrainOutcome {
    pub fn model(&self) -> &EnergyModel {
        &self.checkpoint.model
    }
}

/// A run that stopped early, with the last state whose parameters were finite.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub last_good: Checkpoint,
    pub log: TrainLog,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training stopped after {} iterations: {}", self.log.records.len(), self.error)
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Builds a model from `spec` and `cfg.seed` and runs `cfg.iterations` steps.
pub fn train(
    data: &Dataset,
    holdout: Option<&Dataset>,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let fail = |error: Error, model: Option<EnergyModel>| TrainFailure {
        error,
        last_good: Checkpoint { alpha: cfg.alpha, step: 0, model: model.unwrap_or_else(|| placeholder_model(spec)), moments: None },
        log: TrainLog::default(),
    };
    if data.is_empty() {
        return Err(fail(Error::Config("training set is empty".into()), None));
    }
    let model = EnergyModel::build(spec.clone(), cfg.seed).map_err(|e| fail(e, None))?;
    if data.input_shape() != spec.input_shape.as_slice() || data.num_classes() != spec.num_classes {
        return Err(fail(Error::Config("dataset does not match the network's input shape or class count".into()), Some(model)));
    }
    let mut trainer = Trainer::new(model.clone(), cfg.clone(), data.init_box()).map_err(|e| fail(e, Some(model)))?;
    run(&mut trainer, data, holdout)
}

/// Runs the remaining iterations of an existing trainer.
pub fn run(trainer: &mut Trainer, data: &Dataset, holdout: Option<&Dataset>) -> std::result::Result<TrainOutcome, TrainFailure> {
    let cfg = trainer.cfg.clone();
    let epoch = data.len().div_ceil(cfg.batch_size).max(1);
    let eval_every = cfg.eval_every.unwrap_or(epoch).max(1);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, Checkpoint)> = None;

    while trainer.step < cfg.iterations {
        let last_good = trainer.checkpoint();
        let (x, y) = trainer.sample_batch(data);
        let mut rec = match trainer.train_step(&x, &y) {
            Ok(r) => r,
            Err(error) => return Err(TrainFailure { error, last_good, log }),
        };
        if !trainer.adam.m.iter().all(Tensor::all_finite) || !trainer.model.params().iter().all(Tensor::all_finite) {
            let flat: Vec<f64> = trainer.model.params().iter().flat_map(|p| p.data().to_vec()).collect();
            return Err(TrainFailure { error: Error::divergence("parameters", rec.iter, &flat), last_good, log });
        }
        let done = trainer.step;
        if let Some(h) = holdout.filter(|h| !h.is_empty()) {
            if done % eval_every == 0 || done == cfg.iterations {
                let eval = accuracy(&trainer.model, h).and_then(|a| Ok((a, mean_nll(&trainer.model, h)?)));
                match eval {
                    Ok((acc, nll)) => {
                        rec.holdout_acc = Some(acc);
                        if cfg.selection == Selection::BestHoldoutLoss && best.as_ref().is_none_or(|(b, _)| nll < *b) {
                            best = Some((nll, trainer.checkpoint()));
                        }
                    }
                    Err(error) => return Err(TrainFailure { error, last_good, log }),
                }
            }
        }
        log.records.push(rec);
    }
    let checkpoint = match (cfg.selection, best) {
        (Selection::BestHoldoutLoss, Some((_, ck))) => ck,
        _ => trainer.checkpoint(),
    };
    Ok(TrainOutcome { checkpoint, log })
}

fn placeholder_model(spec: &NetworkSpec) -> EnergyModel {
    EnergyModel::build(spec.clone(), 0).unwrap_or_else(|_| {
        EnergyModel::build(NetworkSpec::mlp(1, &[], 1, 0.2), 0).expect("trivial network is valid")
    })
}

/// The 11-point grid 0.0, 0.1, ..., 1.0.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LayerSpec;

    fn affine_model(w: &[f64], b: &[f64], k: usize, n: usize) -> EnergyModel {
        let spec = NetworkSpec {
            input_shape: vec![n],
            layers: vec![LayerSpec::Affine { inputs: n, outputs: k }],
            num_classes: k,
            dropout: 0.0,
        };
        EnergyModel::from_parts(spec, vec![Tensor::new(vec![k, n], w.to_vec()).unwrap(), Tensor::vector(b)]).unwrap()
    }

    #[test]
    fn disc_loss_examples() {
        // logits [ln 3, 0] give posterior [0.75, 0.25]
        let m = affine_model(&[0.0, 0.0], &[3.0_f64.ln(), 0.0], 2, 1);
        let x = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        assert!((disc_loss(&m, &x, &[0], 0.0).unwrap() + 0.75_f64.ln()).abs() < 1e-15);
        let uniform = affine_model(&[0.0; 3], &[0.0; 3], 3, 1);
        assert!((disc_loss(&uniform, &x, &[2], 0.0).unwrap() - 3.0_f64.ln()).abs() < 1e-15);
        let sharp = affine_model(&[0.0, 0.0], &[800.0, 0.0], 2, 1);
        assert_eq!(disc_loss(&sharp, &x, &[0], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn smoothing_spreads_mass() {
        let q = smoothed_targets(&[1], 3, 0.1).unwrap();
        assert_eq!(q.data(), &[0.05, 0.9, 0.05]);
        let single = smoothed_targets(&[0], 1, 0.1).unwrap();
        assert_eq!(single.data(), &[1.0]);
    }

    #[test]
    fn cd_loss_examples() {
        // identity on one input: logits [x], marginal score = x
        let m = affine_model(&[1.0], &[0.0], 1, 1);
        let pos = Tensor::new(vec![2, 1], vec![2.0, 4.0]).unwrap();
        let neg = Tensor::new(vec![2, 1], vec![0.0, 2.0]).unwrap();
        assert!((cd_loss(&m, &pos, &neg).unwrap() + 2.0).abs() < 1e-15);
        let (l, g) = cd_loss_and_grads(&m, &pos, &pos).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn balance_and_combination() {
        assert!((grad_balance(1.0, 1.0, 1e-8) - 1.0).abs() < 1e-7);
        assert!((grad_balance(2.0, 4.0, 1e-8) - 0.5).abs() < 1e-8);
        assert_eq!(grad_balance(0.0, 3.0, 1e-8), 0.0);
        assert_eq!(combined_loss(0.0, 5.0, 7.0, 0.3), 0.3);
        assert_eq!(combined_loss(1.0, 2.0, -1.5, 0.3), -3.0);
        assert!((combined_loss(0.5, 2.0, -1.0, 0.7) + 0.65).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig { iterations: 10, warmup: 2, ..Default::default() };
        assert!(cfg.validate().is_ok());
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        cfg.alpha = 0.5;
        cfg.warmup = 10;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_iterations_returns_initial_model() {
        let x = Tensor::new(vec![4, 2], vec![0.0, 1.0, 1.0, 0.0, -1.0, 0.5, 0.2, 0.2]).unwrap();
        let data = Dataset::new(x, vec![0, 1, 0, 1], 2).unwrap();
        let spec = NetworkSpec::points2d(2);
        let cfg = TrainConfig { iterations: 0, warmup: 0, ..Default::default() };
        let out = train(&data, None, &spec, &cfg).unwrap();
        assert_eq!(out.model(), &EnergyModel::build(spec, cfg.seed).unwrap());
        assert!(out.log.records.is_empty());
    }

    #[test]
    fn augmentation_keeps_range_and_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::new(vec![2, 1, 4, 4], (0..32).map(|i| (i as f64 / 16.0) - 1.0).collect()).unwrap();
        let y = augment_images(&x, 1, &mut rng);
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn log_csv_header_and_rows() {
        let log = TrainLog {
            records: vec![TrainRecord { iter: 0, loss: 1.5, l_d: 1.5, l_g: 0.0, c: 1.0, g_d: 2.0, g_g: 0.0, lr: 0.0, holdout_acc: None }],
        };
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TrainLog::HEADER));
        assert_eq!(lines.next(), Some("0,1.5,1.5,0,1,2,0,0,"));
    }
}
