use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::autotune::BenchRecord;
use crate::formats::StorageFormat;
use crate::kernels::ExecPolicy;
use crate::krylov::SolverConfig;

use super::IoError;

/// Value of the `schema` field in every JSON report.
pub const SCHEMA_VERSION: &str = "sparsekit.report/v1";

pub const BENCH_CSV_HEADER: [&str; 8] =
    ["kernel", "matrix", "block_size", "workers_per_row", "strategy", "reps", "mean_ms", "stddev_ms"];

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub matrix_path: Option<String>,
    pub format: Option<StorageFormat>,
    pub policy: Option<ExecPolicy>,
    pub solver: Option<SolverConfig>,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        RunManifest {
            command: command.to_string(),
            args,
            matrix_path: None,
            format: None,
            policy: None,
            solver: None,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }

    pub fn with_matrix(mut self, path: &str) -> Self {
        self.matrix_path = Some(path.to_string());
        self
    }

    pub fn with_format(mut self, format: StorageFormat) -> Self {
        self.format = Some(format);
        self
    }

    pub fn with_policy(mut self, policy: ExecPolicy) -> Self {
        self.policy = Some(policy);
        self
    }

    pub fn with_solver(mut self, cfg: SolverConfig) -> Self {
        self.solver = Some(cfg);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JsonReport<T: Serialize> {
    pub schema: &'static str,
    pub kind: String,
    pub manifest: RunManifest,
    pub result: T,
}

impl<T: Serialize> JsonReport<T> {
    pub fn new(kind: &str, manifest: RunManifest, result: T) -> Self {
        JsonReport { schema: SCHEMA_VERSION, kind: kind.to_string(), manifest, result }
    }

    pub fn to_json(&self) -> Result<String, IoError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Benchmark records as CSV with [`BENCH_CSV_HEADER`]; times in
/// milliseconds with six decimals.
pub fn write_bench_csv<W: Write>(w: W, records: &[BenchRecord]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(BENCH_CSV_HEADER)?;
    for r in records {
        out.write_record([
            r.kernel_name.clone(),
            r.matrix_name.clone(),
            r.policy.block_size().to_string(),
            r.policy.workers_per_row().to_string(),
            r.policy.grid_strategy().to_string(),
            r.reps.to_string(),
            format!("{:.6}", r.mean_time * 1e3),
            format!("{:.6}", r.stddev_time * 1e3),
        ])?;
    }
    out.flush().map_err(|e| IoError::io("<csv>", e))?;
    Ok(())
}
