//! Condition monitoring for industrial pumps.
//!
//! The pipeline cleans sensor logs, injects synthetic critical alerts, labels
//! every reading with a fixed engineering limit and an adaptive 95th-percentile
//! limit, trains three classifiers per monitored parameter, evaluates them on a
//! stratified hold-out split, and replays series through thresholds and models
//! as a stream of alert events.

pub mod config;
pub mod domain;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod stream;
pub mod synth;
pub mod thresholds;

pub use domain::{
    HealthLabel, ParameterKind, PerParameter, Provenance, SensorReading, SensorSeries,
    ThresholdPair,
};
pub use error::{Error, Result};
