//! Data-parallel vector and SpMV kernels driven by an [`ExecPolicy`].
//!
//! The policy carries the launch parameters of a GPU-style kernel (block
//! size, lanes per row, grid layout) and maps them onto CPU task
//! decomposition over a worker pool.

mod policy;
mod pool;
mod spmv;
mod vector;

use thiserror::Error;

pub use policy::{
    compute_grid, default_worker_count, grid_spmv_blocks, DeviceLimits, ExecPolicy, GridShape, GridStrategy,
    BLOCK_SIZES, WORKERS_ENV, WORKERS_PER_ROW,
};
pub use spmv::{spmv, spmv_into};
pub use vector::{axpby, daxpy, dot, dot_weighted, norm2, scal_elementwise, scale, xpay};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("{op}: expected length {expected}, got {found}")]
    DimensionMismatch { op: &'static str, expected: usize, found: usize },
    #[error("invalid execution policy: {0}")]
    InvalidPolicy(String),
}
