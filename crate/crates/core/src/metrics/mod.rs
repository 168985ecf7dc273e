//! Alignment metrics comparing model behavior with (simulated) observer data.

pub mod behavior;
pub mod perceptual;
pub mod probes;
pub mod report;
pub mod saliency;

pub use behavior::{
    consistency_trials, error_consistency, kappa, mean_human_entropy, shape_bias, soft_label_ce, soft_label_kl,
    ConditionTrials, ConsistencyDataset, ShapeBiasMode,
};
pub use perceptual::{average_precision, jnd_map, layer_distances, perceptual_distance, perceptual_distances, two_afc, two_afc_score};
pub use probes::{pearson, probe_classify, probe_regress, r_squared, rating_correlation, ProbeResult, RidgeModel};
pub use report::{MetricRow, MetricsReport, Status};
pub use saliency::{mean_saliency_alignment, saliency_alignment, saliency_map, saliency_maps, spearman, SaliencyMode};
