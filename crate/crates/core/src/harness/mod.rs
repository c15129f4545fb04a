//! Experiment pipeline: system, corpora, training, sweeps and output files.
//!
//! All randomness is derived from `data.seed`; stage outputs are cached
//! under content hashes of their inputs.

pub mod cache;
pub mod config;
pub mod plot;
pub mod sweep;

use std::path::Path;

use thiserror::Error;

pub use cache::Cache;
pub use config::{DataSpec, ExperimentConfig, FigureId, Method, ModelsSpec, NetSpec, SweepSpec, SystemSpec, TrainSpec};
pub use plot::{emit_plot_data, write_plot_data};
pub use sweep::{
    build_corpora, build_corpus, build_system, evaluate_method, oracle_check, oracle_check_csv, run_experiment,
    run_sweep, test_frames, train_all, train_model, Corpus, Detector, ExactRow, OracleCheckRow, PointResult,
    RunOptions, RunReport, TrainedModel, THRESHOLD_SUFFIX,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing axis coverage: {0}")]
    Coverage(String),
    #[error("stage failed: {0}")]
    Stage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}
