//! Preconditioned Krylov solvers built from the policy-driven kernels.
//!
//! Preconditioning is applied from the left with the Jacobi (inverse
//! diagonal) preconditioner. `solve_pcg` follows the classic
//! preconditioned CG loop and measures convergence by `<r, z> / ||r0||`; the
//! other solvers measure `||M^-1 r|| / ||M^-1 r0||` and confirm convergence on
//! a freshly computed residual before stopping.

mod bicgcr;
mod bicgstab;
mod cg;
mod gcr;
mod jacobi;
mod tfqmr;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::formats::SparseMatrix;
use crate::kernels::{self, ExecPolicy, KernelError};

pub use bicgcr::solve_bicgcr;
pub use bicgstab::{solve_bicgstab, solve_bicgstab_l};
pub use cg::{solve_cg_classic, solve_pcg, solve_pcg_traced, CgTraceStep};
pub use gcr::solve_gcr;
pub use jacobi::JacobiPreconditioner;
pub use tfqmr::solve_tfqmr;

/// A scalar "vanishes" below this magnitude.
pub const BREAKDOWN_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("{method} breakdown at iteration {iteration}: {quantity} vanished")]
    Breakdown { method: &'static str, quantity: &'static str, iteration: usize },
    #[error("{method}: non-finite value at iteration {iteration}")]
    NonFinite { method: &'static str, iteration: usize },
    #[error("zero diagonal entry in row {row}, Jacobi preconditioner undefined")]
    ZeroDiagonal { row: usize },
    #[error("matrix must be square, got {n_rows}x{n_cols}")]
    NotSquare { n_rows: usize, n_cols: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

impl FromStr for Preconditioner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Preconditioner::None),
            "jacobi" | "diag" | "diagonal" => Ok(Preconditioner::Jacobi),
            other => Err(format!("unknown preconditioner '{other}' (expected none or jacobi)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
    /// Directions kept by GCR before restarting.
    pub restart: usize,
    /// Degree of the minimal-residual polynomial in BiCGStab(l).
    pub stab_l: usize,
    pub policy: ExecPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-6,
            max_iterations: 30_000,
            preconditioner: Preconditioner::Jacobi,
            restart: 50,
            stab_l: 2,
            policy: ExecPolicy::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return bad("tolerance must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if self.restart == 0 {
            return bad("restart must be at least 1");
        }
        if self.stab_l == 0 {
            return bad("stab_l must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub method: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual_measure: f64,
    /// One convergence measure per iteration.
    pub residual_history: Vec<f64>,
    /// Seconds.
    pub wall_time: f64,
    pub solution: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cg,
    Gcr,
    BiCgCr,
    TfQmr,
    BiCgStab,
    BiCgStabL,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Cg, Method::Gcr, Method::BiCgCr, Method::TfQmr, Method::BiCgStab, Method::BiCgStabL];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cg => "cg",
            Method::Gcr => "gcr",
            Method::BiCgCr => "bicgcr",
            Method::TfQmr => "tfqmr",
            Method::BiCgStab => "bicgstab",
            Method::BiCgStabL => "bicgstabl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

/// Runs `method` on `A x = b` from `x0`.
pub fn solve(
    method: Method,
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    match method {
        Method::Cg => solve_pcg(a, b, x0, cfg),
        Method::Gcr => solve_gcr(a, b, x0, cfg),
        Method::BiCgCr => solve_bicgcr(a, b, x0, cfg),
        Method::TfQmr => solve_tfqmr(a, b, x0, cfg),
        Method::BiCgStab => solve_bicgstab(a, b, x0, cfg),
        Method::BiCgStabL => solve_bicgstab_l(a, b, x0, cfg),
    }
}

/// The left-preconditioned operator `M^-1 A` plus the data every solver
/// needs from the problem.
pub(crate) struct Operator<'a> {
    a: &'a SparseMatrix,
    jacobi: Option<JacobiPreconditioner>,
    policy: ExecPolicy,
}

impl<'a> Operator<'a> {
    pub(crate) fn new(a: &'a SparseMatrix, b: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let (n_rows, n_cols) = (a.n_rows(), a.n_cols());
        if n_rows != n_cols {
            return Err(SolverError::NotSquare { n_rows, n_cols });
        }
        for (op, len) in [("rhs", b.len()), ("initial guess", x0.len())] {
            if len != n_rows {
                return Err(KernelError::DimensionMismatch { op, expected: n_rows, found: len }.into());
            }
        }
        let jacobi = match cfg.preconditioner {
            Preconditioner::None => None,
            Preconditioner::Jacobi => Some(JacobiPreconditioner::new(a)?),
        };
        Ok(Operator { a, jacobi, policy: cfg.policy })
    }

    pub(crate) fn n(&self) -> usize {
        self.a.n_rows()
    }

    pub(crate) fn policy(&self) -> &ExecPolicy {
        &self.policy
    }

    pub(crate) fn matrix(&self) -> &SparseMatrix {
        self.a
    }

    /// `v <- M^-1 v`
    pub(crate) fn precondition(&self, v: &mut [f64]) -> Result<(), SolverError> {
        if let Some(j) = &self.jacobi {
            j.apply(v, &self.policy)?;
        }
        Ok(())
    }

    /// `out <- M^-1 A v`
    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64]) -> Result<(), SolverError> {
        kernels::spmv_into(self.a, v, out, &self.policy)?;
        self.precondition(out)
    }

    /// `M^-1 (b - A x)`
    pub(crate) fn residual(&self, b: &[f64], x: &[f64]) -> Result<Vec<f64>, SolverError> {
        let mut r = kernels::spmv(self.a, x, &self.policy)?;
        kernels::axpby(1.0, b, -1.0, &mut r, &self.policy)?;
        self.precondition(&mut r)?;
        Ok(r)
    }

    pub(crate) fn dot(&self, x: &[f64], y: &[f64]) -> Result<f64, SolverError> {
        Ok(kernels::dot(x, y, &self.policy)?)
    }

    pub(crate) fn norm(&self, x: &[f64]) -> f64 {
        kernels::norm2(x, &self.policy)
    }
}

/// Bookkeeping shared by the residual-norm based solvers.
pub(crate) struct Monitor {
    method: &'static str,
    tolerance: f64,
    r0_norm: f64,
    history: Vec<f64>,
    started: std::time::Instant,
}

impl Monitor {
    pub(crate) fn new(method: &'static str, cfg: &SolverConfig, r0_norm: f64) -> Self {
        Monitor { method, tolerance: cfg.tolerance, r0_norm, history: Vec::new(), started: std::time::Instant::now() }
    }

    pub(crate) fn ratio(&self, norm: f64) -> f64 {
        norm / self.r0_norm
    }

    /// Records one iteration's measure; true when it is below tolerance.
    pub(crate) fn record(&mut self, measure: f64) -> Result<bool, SolverError> {
        if !measure.is_finite() {
            return Err(SolverError::NonFinite { method: self.method, iteration: self.history.len() + 1 });
        }
        self.history.push(measure);
        Ok(measure <= self.tolerance)
    }

    pub(crate) fn below_tolerance(&self, measure: f64) -> bool {
        measure <= self.tolerance
    }

    /// `||M^-1 (b - A x)|| / ||M^-1 r0||` from scratch.
    pub(crate) fn true_measure(&self, op: &Operator, b: &[f64], x: &[f64]) -> Result<f64, SolverError> {
        Ok(self.ratio(op.norm(&op.residual(b, x)?)))
    }

    pub(crate) fn iterations(&self) -> usize {
        self.history.len()
    }

    pub(crate) fn guard(&self, value: f64, quantity: &'static str) -> Result<f64, SolverError> {
        if !value.is_finite() {
            return Err(SolverError::NonFinite { method: self.method, iteration: self.iterations() + 1 });
        }
        if value.abs() < BREAKDOWN_THRESHOLD {
            return Err(SolverError::Breakdown { method: self.method, quantity, iteration: self.iterations() + 1 });
        }
        Ok(value)
    }

    pub(crate) fn finish(self, converged: bool, final_measure: f64, solution: Vec<f64>) -> SolveReport {
        SolveReport {
            method: self.method.to_string(),
            converged,
            iterations: self.history.len(),
            final_residual_measure: final_measure,
            residual_history: self.history,
            wall_time: self.started.elapsed().as_secs_f64(),
            solution,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::formats::{HybWidth, StorageFormat};

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        for cfg in [
            SolverConfig { tolerance: 0.0, ..Default::default() },
            SolverConfig { max_iterations: 0, ..Default::default() },
            SolverConfig { restart: 0, ..Default::default() },
            SolverConfig { stab_l: 0, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(SolverError::InvalidConfig(_))));
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn scaled_identity_converges_immediately_everywhere() {
        let b: Vec<f64> = (0..12).map(|i| (i as f64 - 5.5) * 0.75).collect();
        for alpha in [1.0, 3.5, 0.01] {
            let base = scaled_identity(12, alpha);
            for f in StorageFormat::ALL {
                let a = base.convert(f, HybWidth::Auto, usize::MAX).unwrap();
                for pre in [Preconditioner::None, Preconditioner::Jacobi] {
                    for pol in [ExecPolicy::default(), ExecPolicy::new(32, 1, Default::default()).unwrap()] {
                        let cfg = SolverConfig { preconditioner: pre, policy: pol, stab_l: 4, ..Default::default() };
                        for m in Method::ALL {
                            let rep = solve(m, &a, &b, &[0.0; 12], &cfg).unwrap();
                            assert!(rep.converged, "{m} alpha={alpha} {f}");
                            assert!(rep.iterations <= 1, "{m}: {} iterations", rep.iterations);
                            assert!(rel_residual(&a, &rep.solution, &b) < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let a = tridiag(4, 2.0, -1.0);
        let cfg = SolverConfig::default();
        assert!(matches!(
            solve(Method::Cg, &a, &[1.0; 3], &[0.0; 4], &cfg),
            Err(SolverError::Kernel(KernelError::DimensionMismatch { .. }))
        ));
        let rect = dense(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);
        assert!(matches!(solve(Method::Gcr, &rect, &[1.0; 2], &[0.0; 3], &cfg), Err(SolverError::NotSquare { .. })));
    }

    #[test]
    fn zero_rhs_is_already_solved() {
        let a = tridiag(5, 2.0, -1.0);
        for m in Method::ALL {
            let rep = solve(m, &a, &[0.0; 5], &[0.0; 5], &SolverConfig::default()).unwrap();
            assert!(rep.converged);
            assert_eq!(rep.iterations, 0);
            assert_eq!(rep.solution, vec![0.0; 5]);
        }
    }
}
