//! Models EV driver charging behavior from session records.
//!
//! The pipeline: ingest charging sessions ([`session`]), compute per-user
//! behavioral features ([`features`]), group users by K-means ([`kmeans`]),
//! classify users with a from-scratch multilayer perceptron ([`mlp`]), and
//! generate day-ahead aggregate load envelopes by Monte-Carlo sampling from
//! group statistics ([`forecast`]). [`synth`] generates labeled synthetic
//! datasets for end-to-end verification and [`eval`] runs the k-fold
//! cross-validation protocol.

pub mod eval;
pub mod features;
pub mod forecast;
pub mod kmeans;
pub mod mlp;
pub mod session;
pub mod synth;

pub use eval::{ExperimentConfig, ExperimentReport};
pub use features::{FeatureMatrix, UserFeatureTuple};
pub use forecast::{CohortStats, DayAheadForecast, RateLimits};
pub use kmeans::{ClusterModel, KmeansConfig};
pub use mlp::{MlpModel, TrainConfig, UserRecordMatrix};
pub use session::{ChargingSession, ParseMode, SessionDataset};
pub use synth::{CohortSpec, LabeledDataset};
