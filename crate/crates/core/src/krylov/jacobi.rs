use crate::formats::SparseMatrix;
use crate::kernels::{scal_elementwise, ExecPolicy, KernelError};

use super::SolverError;

/// Diagonal preconditioner, `M = diag(A)`, stored as `1 / a_ii`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(a: &SparseMatrix) -> Result<Self, SolverError> {
        let inv_diag = a
            .diagonal()
            .into_iter()
            .enumerate()
            .map(|(row, d)| if d == 0.0 { Err(SolverError::ZeroDiagonal { row }) } else { Ok(1.0 / d) })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(JacobiPreconditioner { inv_diag })
    }

    pub fn inv_diag(&self) -> &[f64] {
        &self.inv_diag
    }

    /// `v <- M^-1 v`
    pub fn apply(&self, v: &mut [f64], policy: &ExecPolicy) -> Result<(), KernelError> {
        scal_elementwise(v, &self.inv_diag, policy)
    }
}
