//! Experiment orchestration for the hybridsynth pipeline: configuration,
//! dataset and partition setup, provider and iteration sweeps, and metrics
//! output.

pub mod config;
pub mod experiment;
pub mod schema_gen;
pub mod summarize;

use hybridsynth::agents::AgentError;
use hybridsynth::datamodel::DataError;
use thiserror::Error;

pub use config::{DatasetSource, ExperimentConfig, PartitionStrategy};
pub use experiment::{
    build_dataset, run_experiment, run_point, RunRecord, METRICS_FILE, PHASES_FILE,
};
pub use schema_gen::schema_from_csv;
pub use summarize::{mean_sd, read_records, render_table, summarize, SummaryRow};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("pipeline aborted: {0}")]
    Pipeline(#[from] AgentError),
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl CliError {
    /// 1 for configuration and input problems, 2 for a pipeline abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Pipeline(_) => 2,
        }
    }
}
