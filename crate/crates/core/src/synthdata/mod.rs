//! Deterministic synthetic datasets and the file formats shared by all of
//! them. Every generator is a pure function of its configuration and seed.

pub mod cueconflict;
pub mod formats;
pub mod humans;
pub mod mixture;
pub mod perceptual;
pub mod probe;

pub use cueconflict::{gen_cue_conflict, CueConflictSet};
pub use formats::{load_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes, Table};
pub use humans::{gen_observers, gen_soft_labels, ObserverConfig, ObserverResponses, Response, SoftLabelSet, Stimulus};
pub use mixture::{gen_mixture2d, gen_mixture2d_from, LabeledPoints2D, MixtureSpec};
pub use perceptual::{gen_perceptual, gen_perceptual_with, Distortion, Pair, PerceptualConfig, PerceptualSet, Triplet};
pub use probe::{gen_probeset, ProbeAttributes, ProbeSet};
