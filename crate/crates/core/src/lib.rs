//! Joint energy-based models trained along the generative–discriminative
//! continuum, exact grid oracles for low-dimensional checks, and a suite of
//! human-alignment metrics evaluated on synthetic stand-in datasets.

mod binio;

pub mod autodiff;
pub mod checkpoint;
pub mod dataset;
pub mod energy;
pub mod metrics;
pub mod error;
pub mod network;
pub mod optim;
pub mod oracle;
pub mod sampler;
pub mod synthdata;
pub mod sweep;
pub mod tensor;
pub mod trainer;

pub use autodiff::{GradientSet, Gradients, Tape, Var};
pub use checkpoint::Checkpoint;
pub use dataset::Dataset;
pub use error::{DivergenceInfo, Error, Result};
pub use network::{EnergyModel, LayerSpec, NetworkSpec};
pub use tensor::Tensor;
