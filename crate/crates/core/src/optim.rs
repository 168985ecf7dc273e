//! Adam and the warmup + cosine learning-rate schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// One bias-corrected Adam update. Parameters are untouched when any
/// gradient entry is non-finite.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension("parameter, gradient and moment counts differ".into()));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Dimension(format!("gradient {:?} for parameter {:?}", g.shape(), p.shape())));
        }
    }
    if grads.iter().any(|g| !g.all_finite()) {
        let flat: Vec<f64> = grads.iter().flat_map(|g| g.data().iter().copied()).collect();
        return Err(Error::divergence("adam", state.step as usize, &flat));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((pv, &gv), mv), vv) in
            p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
        {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Linear warmup from 0 to `base` over `warmup` iterations, then cosine decay to 0 at `total`.
pub fn lr_at(t: usize, base: f64, warmup: usize, total: usize) -> f64 {
    if t < warmup {
        return base * t as f64 / warmup as f64;
    }
    if total <= warmup || t >= total {
        return if t >= total { 0.0 } else { base };
    }
    let progress = (t - warmup) as f64 / (total - warmup) as f64;
    base * 0.5 * (1.0 + (PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_landmarks() {
        let (base, w, total) = (1e-4, 1000, 5000);
        assert_eq!(lr_at(0, base, w, total), 0.0);
        assert_eq!(lr_at(w, base, w, total), base);
        assert_eq!(lr_at(total, base, w, total), 0.0);
        let mid = lr_at(w + (total - w) / 2, base, w, total);
        assert!((mid - base / 2.0).abs() < 1e-18);
        assert!((lr_at(500, base, w, total) - base / 2.0).abs() < 1e-18);
    }

    #[test]
    fn schedule_without_warmup_starts_at_base() {
        assert_eq!(lr_at(0, 0.3, 0, 10), 0.3);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut params = vec![Tensor::vector(&[1.0, -2.0, 0.5])];
        let grads = vec![Tensor::vector(&[0.3, -7.0, 1e-3])];
        let mut st = AdamState::zeros_like(&params);
        adam_step(&mut params, &grads, &mut st, 0.01, &AdamConfig::default()).unwrap();
        let expect = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (p, e) in params[0].data().iter().zip(expect) {
            assert!((p - e).abs() < 1e-6, "{p} vs {e}");
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut params = vec![Tensor::vector(&[1.0, 2.0])];
        let grads = vec![Tensor::zeros(&[2])];
        let mut st = AdamState::zeros_like(&params);
        for _ in 0..50 {
            adam_step(&mut params, &grads, &mut st, 0.1, &AdamConfig::default()).unwrap();
        }
        assert_eq!(params[0].data(), &[1.0, 2.0]);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut params = vec![Tensor::vector(&[1.0])];
        let grads = vec![Tensor::vector(&[f64::NAN])];
        let mut st = AdamState::zeros_like(&params);
        let err = adam_step(&mut params, &grads, &mut st, 0.1, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
        assert_eq!(params[0].data(), &[1.0]);
        assert_eq!(st.step, 0);
    }
}
