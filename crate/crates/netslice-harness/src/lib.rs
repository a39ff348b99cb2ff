//! Experiment harness for the slicing testbed: flat key-value
//! configuration, staged pipelines with schema-versioned artifacts, the
//! metrics CSV contract, and the `netslice` CLI built on top.

pub mod artifacts;
pub mod config;
pub mod metrics;
pub mod pipeline;

pub use config::{ConfigError, ExperimentConfig, KeyValues};
pub use metrics::{compute_metrics, to_csv, MetricsRecord, CSV_HEADER};
