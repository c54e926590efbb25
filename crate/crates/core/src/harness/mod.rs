//! The batch experiment harness: configuration, pipeline orchestration,
//! baselines, parameter sweeps, and artifact output.

pub mod baselines;
pub mod config;
pub mod metrics;
pub mod output;
pub mod pipeline;
pub mod sweep;

pub use config::{ExperimentConfig, Preset};
pub use metrics::{Algorithm, ConfusionCounts, MetricsRow};
pub use pipeline::{run_pipeline, CalibrationArtifact, Pipeline, RunOutput};
pub use sweep::{sweep, SweepAxis, SweepRow};
