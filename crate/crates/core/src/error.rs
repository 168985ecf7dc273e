use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Snapshot of where and how a chain or training run produced non-finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceInfo {
    pub stage: &'static str,
    pub iteration: usize,
    pub non_finite: usize,
    pub max_abs_finite: f64,
}

impl fmt::Display for DivergenceInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} diverged at iteration {}: {} non-finite values (largest finite magnitude {:.3e})",
            self.stage, self.iteration, self.non_finite, self.max_abs_finite
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("{0}")]
    Divergence(DivergenceInfo),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn divergence(stage: &'static str, iteration: usize, values: &[f64]) -> Self {
        let non_finite = values.iter().filter(|v| !v.is_finite()).count();
        let max_abs_finite =
            values.iter().filter(|v| v.is_finite()).fold(0.0_f64, |m, v| m.max(v.abs()));
        Error::Divergence(DivergenceInfo { stage, iteration, non_finite, max_abs_finite })
    }
}
