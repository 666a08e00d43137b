//! Evaluation toolkit for MR image reconstructions feeding an anomaly
//! detector: reconstruction metrics over whole volumes and inside predicted
//! boxes, detection scoring, k-space undersampling with zero-filled
//! reconstruction, controlled SSIM-only perturbations, and the statistics
//! used to relate them.

pub mod boxes;
pub mod detection;
pub mod harness;
pub mod kspace;
pub mod manifest;
pub mod metrics;
pub mod normalize;
pub mod perturb;
pub mod sidecar;
pub mod stats;
pub mod volume;

pub use boxes::{BoundingBox, BoxLabel, Compartment, Prediction, PredictionSet, SliceKey};
pub use metrics::{MetricTriple, SsimParams};
pub use volume::{load_volume, save_volume, ImageVolume};
