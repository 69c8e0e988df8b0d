//! Matrix Market files, matrix statistics, test-matrix generators and
//! report serialization.

mod generate;
mod mtx;
mod report;
mod stats;

use std::path::PathBuf;

use thiserror::Error;

use crate::formats::FormatError;

pub use generate::{generate, generate_test_matrix, GeneratorKind, DEFAULT_PECLET};
pub use mtx::{parse_matrix_market, read_matrix_market, write_matrix_market, write_matrix_market_to};
pub use report::{write_bench_csv, JsonReport, RunManifest, BENCH_CSV_HEADER, SCHEMA_VERSION};
pub use stats::{compute_stats, MatrixStats};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported Matrix Market field: {0}")]
    UnsupportedField(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io { path: path.into(), source }
    }
}
