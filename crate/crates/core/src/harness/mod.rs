//! Experiment runner: reproducible end-to-end runs (fleet generation,
//! enrollment, training, calibration, evaluation), ablations over one axis,
//! and machine/human-readable reports.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{AblationAxis, ArbiterParams, ExperimentConfig, FleetMix, MemoryParams};
pub use experiment::{run_ablation, run_experiment, run_seed, SeedOutcome};
pub use report::{
    config_hash, emit_report, measure_wire_overhead, AblationReport, AggregateMetrics,
    ExperimentReport, MeanStd,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Configuration rejected; `field` is the dotted path of the offending
    /// entry.
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Puf(#[from] crate::puf::PufError),
    #[error(transparent)]
    Imaging(#[from] crate::imaging::ImagingError),
    #[error(transparent)]
    Openset(#[from] crate::openset::OpensetError),
    #[error(transparent)]
    Protocol(#[from] crate::protocol::ProtocolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Self::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
