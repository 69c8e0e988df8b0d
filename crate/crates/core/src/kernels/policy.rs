use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::KernelError;

/// Block sizes the tuner explores (threads-per-block analogue).
pub const BLOCK_SIZES: [usize; 6] = [32, 64, 128, 256, 512, 1024];
/// Lanes cooperating on one CSR row (threads-per-warp analogue).
pub const WORKERS_PER_ROW: [usize; 6] = [1, 2, 4, 8, 16, 32];

/// Environment variable overriding the default worker-pool size.
pub const WORKERS_ENV: &str = "SPARSEKIT_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridStrategy {
    /// Fill the first grid dimension, spill into the second.
    #[default]
    FlatX,
    /// Square two-dimensional grid once the first dimension overflows.
    Square,
}

impl GridStrategy {
    pub const ALL: [GridStrategy; 2] = [GridStrategy::FlatX, GridStrategy::Square];

    pub fn as_str(self) -> &'static str {
        match self {
            GridStrategy::FlatX => "flat",
            GridStrategy::Square => "square",
        }
    }
}

impl fmt::Display for GridStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GridStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "flat" | "flatx" | "flat-x" => Ok(GridStrategy::FlatX),
            "square" => Ok(GridStrategy::Square),
            other => Err(format!("unknown grid strategy '{other}' (expected flat or square)")),
        }
    }
}

/// Execution policy of a data-parallel kernel.
///
/// `block_size` is the chunk length of reductions and the row-batch
/// granularity of SpMV; `workers_per_row` is the number of lanes that share
/// one CSR row; `worker_count` is the size of the thread pool the kernel runs
/// on. Results never depend on `worker_count` or `grid_strategy`; they depend
/// on `block_size` (dot-product partials) and `workers_per_row` (CSR row
/// summation order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ExecPolicy {
    block_size: usize,
    workers_per_row: usize,
    grid_strategy: GridStrategy,
    worker_count: usize,
}

impl ExecPolicy {
    pub fn new(block_size: usize, workers_per_row: usize, grid_strategy: GridStrategy) -> Result<Self, KernelError> {
        if !BLOCK_SIZES.contains(&block_size) {
            return Err(KernelError::InvalidPolicy(format!("block size {block_size} not in {BLOCK_SIZES:?}")));
        }
        if !WORKERS_PER_ROW.contains(&workers_per_row) {
            return Err(KernelError::InvalidPolicy(format!(
                "workers per row {workers_per_row} not in {WORKERS_PER_ROW:?}"
            )));
        }
        Ok(ExecPolicy { block_size, workers_per_row, grid_strategy, worker_count: default_worker_count() })
    }

    pub fn with_worker_count(mut self, workers: usize) -> Self {
        self.worker_count = workers.max(1);
        self
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn workers_per_row(&self) -> usize {
        self.workers_per_row
    }

    pub fn grid_strategy(&self) -> GridStrategy {
        self.grid_strategy
    }

    pub fn worker_count(&self) -> usize {
        self.worker_count
    }

    /// CSR rows handled by one block.
    pub fn rows_per_block(&self) -> usize {
        self.block_size / self.workers_per_row
    }

    /// Same tunable parameters, ignoring the pool size.
    pub fn same_shape(&self, other: &ExecPolicy) -> bool {
        self.block_size == other.block_size
            && self.workers_per_row == other.workers_per_row
            && self.grid_strategy == other.grid_strategy
    }

    /// The full tuning grid: every block size x lanes-per-row x strategy.
    pub fn candidate_grid() -> Vec<ExecPolicy> {
        let mut out = Vec::with_capacity(BLOCK_SIZES.len() * WORKERS_PER_ROW.len() * 2);
        for &bs in &BLOCK_SIZES {
            for &tw in &WORKERS_PER_ROW {
                for s in GridStrategy::ALL {
                    out.push(ExecPolicy::new(bs, tw, s).expect("grid values are valid"));
                }
            }
        }
        out
    }
}

impl Default for ExecPolicy {
    /// 256 per block, 8 lanes per row.
    fn default() -> Self {
        ExecPolicy::new(256, 8, GridStrategy::FlatX).expect("default policy is valid")
    }
}

impl fmt::Display for ExecPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>/{}", self.block_size, self.workers_per_row, self.grid_strategy)
    }
}

pub fn default_worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeviceLimits {
    pub max_grid_x: usize,
    pub max_threads_per_block: usize,
}

impl Default for DeviceLimits {
    fn default() -> Self {
        DeviceLimits { max_grid_x: 65535, max_threads_per_block: 1024 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridShape {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl GridShape {
    pub fn capacity(&self) -> usize {
        self.x * self.y * self.z
    }
}

/// Blocks needed for an SpMV over `n_rows` rows:
/// `ceil(workers_per_row * n_rows / block_size)`.
pub fn grid_spmv_blocks(n_rows: usize, policy: &ExecPolicy) -> usize {
    (policy.workers_per_row * n_rows).div_ceil(policy.block_size)
}

/// Lays `required_blocks` out on a grid whose first dimension is bounded by
/// `limits.max_grid_x`.
pub fn compute_grid(required_blocks: usize, strategy: GridStrategy, limits: &DeviceLimits) -> GridShape {
    let required = required_blocks.max(1);
    let max_x = limits.max_grid_x.max(1);
    if required <= max_x {
        return GridShape { x: required, y: 1, z: 1 };
    }
    match strategy {
        GridStrategy::FlatX => GridShape { x: max_x, y: required.div_ceil(max_x), z: 1 },
        GridStrategy::Square => {
            let c = ceil_sqrt(required);
            GridShape { x: c, y: c, z: 1 }
        }
    }
}

fn ceil_sqrt(n: usize) -> usize {
    let mut c = (n as f64).sqrt() as usize;
    while c * c < n {
        c += 1;
    }
    while c > 0 && (c - 1) * (c - 1) >= n {
        c -= 1;
    }
    c
}
