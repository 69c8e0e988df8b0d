//! Sparse linear algebra toolkit: storage formats, policy-driven SpMV and
//! vector kernels, an execution-policy auto-tuner, preconditioned Krylov
//! solvers, and a sub-structured parallel conjugate gradient.

pub mod autotune;
pub mod formats;
pub mod io;
pub mod kernels;
pub mod krylov;
pub mod substructure;
