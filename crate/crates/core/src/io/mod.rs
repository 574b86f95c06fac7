//! Run configuration, manifests, and CSV persistence of trajectories,
//! episodes and result tables.

mod config;
mod manifest;
mod results;
mod trajectory;

use std::path::Path;

use thiserror::Error;

pub use config::{BenchmarkConfig, PolicyName, RunConfig};
pub use manifest::{code_version, Manifest, MANIFEST_FILE};
pub use results::{count_rows, format_report, rows_from_reports, write_episodes, write_summary, write_trials};
pub use trajectory::{
    cohort_mean, load_trajectory, persist_trajectory, plot_columns, read_table, read_trajectory, write_table, write_trajectory,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
}

impl IoError {
    pub(crate) fn at(path: &Path, source: std::io::Error) -> Self {
        IoError::File {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        IoError::Csv {
            path: path.display().to_string(),
            source,
        }
    }
}
