//! Sparse storage formats: COO, CSR, ELL and HYB, plus a dense row-major
//! matrix used as the reference for equivalence checks.
//!
//! All indices are 0-based. Every format value is immutable once built, so a
//! matrix can be shared freely between kernel workers.
//!
//! Conversions only move values around; they never combine them (except for
//! the summation of duplicate coordinates when a [`CooMatrix`] is built). As a
//! consequence `to_dense(convert(m)) == to_dense(m)` holds bit-for-bit.

mod coo;
mod csr;
mod dense;
mod ell;
mod hyb;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

pub use coo::CooMatrix;
pub use csr::CsrMatrix;
pub use dense::DenseMatrix;
pub use ell::{EllMatrix, DEFAULT_ELL_MAX_SLOTS};
pub use hyb::{HybMatrix, HybWidth};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("entry ({row}, {col}) is outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange { row: usize, col: usize, n_rows: usize, n_cols: usize },
    #[error("ELL storage needs {slots} slots ({n_rows} rows x width {width}), cap is {cap}")]
    EllBlowup { n_rows: usize, width: usize, slots: usize, cap: usize },
    #[error("invalid matrix structure: {0}")]
    InvalidStructure(String),
}

/// Storage scheme tag, used by the CLI and by reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageFormat {
    Coo,
    Csr,
    Ell,
    Hyb,
}

impl StorageFormat {
    pub const ALL: [StorageFormat; 4] =
        [StorageFormat::Coo, StorageFormat::Csr, StorageFormat::Ell, StorageFormat::Hyb];

    pub fn as_str(self) -> &'static str {
        match self {
            StorageFormat::Coo => "coo",
            StorageFormat::Csr => "csr",
            StorageFormat::Ell => "ell",
            StorageFormat::Hyb => "hyb",
        }
    }
}

impl fmt::Display for StorageFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StorageFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "coo" => Ok(StorageFormat::Coo),
            "csr" => Ok(StorageFormat::Csr),
            "ell" => Ok(StorageFormat::Ell),
            "hyb" => Ok(StorageFormat::Hyb),
            other => Err(format!("unknown storage format '{other}' (expected coo, csr, ell or hyb)")),
        }
    }
}

/// A sparse matrix in any of the supported storage schemes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum SparseMatrix {
    Coo(CooMatrix),
    Csr(CsrMatrix),
    Ell(EllMatrix),
    Hyb(HybMatrix),
}

impl SparseMatrix {
    pub fn format(&self) -> StorageFormat {
        match self {
            SparseMatrix::Coo(_) => StorageFormat::Coo,
            SparseMatrix::Csr(_) => StorageFormat::Csr,
            SparseMatrix::Ell(_) => StorageFormat::Ell,
            SparseMatrix::Hyb(_) => StorageFormat::Hyb,
        }
    }

    pub fn n_rows(&self) -> usize {
        match self {
            SparseMatrix::Coo(m) => m.n_rows(),
            SparseMatrix::Csr(m) => m.n_rows(),
            SparseMatrix::Ell(m) => m.n_rows(),
            SparseMatrix::Hyb(m) => m.n_rows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            SparseMatrix::Coo(m) => m.n_cols(),
            SparseMatrix::Csr(m) => m.n_cols(),
            SparseMatrix::Ell(m) => m.n_cols(),
            SparseMatrix::Hyb(m) => m.n_cols(),
        }
    }

    /// Number of stored entries (padding excluded).
    pub fn nnz(&self) -> usize {
        match self {
            SparseMatrix::Coo(m) => m.nnz(),
            SparseMatrix::Csr(m) => m.nnz(),
            SparseMatrix::Ell(m) => m.nnz(),
            SparseMatrix::Hyb(m) => m.nnz(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            SparseMatrix::Coo(m) => m.to_dense(),
            SparseMatrix::Csr(m) => m.to_dense(),
            SparseMatrix::Ell(m) => m.to_dense(),
            SparseMatrix::Hyb(m) => m.to_dense(),
        }
    }

    /// Canonical CSR view of the matrix, whatever its storage.
    pub fn to_csr(&self) -> CsrMatrix {
        match self {
            SparseMatrix::Coo(m) => m.to_csr(),
            SparseMatrix::Csr(m) => m.clone(),
            SparseMatrix::Ell(m) => m.to_csr(),
            SparseMatrix::Hyb(m) => m.to_csr(),
        }
    }

    /// Re-encode in `target` format. `hyb_width` only matters for HYB and
    /// `ell_cap` only for ELL.
    pub fn convert(
        &self,
        target: StorageFormat,
        hyb_width: HybWidth,
        ell_cap: usize,
    ) -> Result<SparseMatrix, FormatError> {
        if target == self.format() {
            if let (SparseMatrix::Hyb(h), HybWidth::Fixed(w)) = (self, hyb_width) {
                if h.width() != w {
                    return Ok(SparseMatrix::Hyb(self.to_csr().to_hyb(hyb_width)));
                }
            }
            return Ok(self.clone());
        }
        let csr = self.to_csr();
        Ok(match target {
            StorageFormat::Coo => SparseMatrix::Coo(csr.to_coo()),
            StorageFormat::Csr => SparseMatrix::Csr(csr),
            StorageFormat::Ell => SparseMatrix::Ell(csr.to_ell_capped(ell_cap)?),
            StorageFormat::Hyb => SparseMatrix::Hyb(csr.to_hyb(hyb_width)),
        })
    }

    /// Diagonal entries (0.0 where no entry is stored).
    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            SparseMatrix::Csr(m) => m.diagonal(),
            other => other.to_csr().diagonal(),
        }
    }
}

impl From<CooMatrix> for SparseMatrix {
    fn from(m: CooMatrix) -> Self {
        SparseMatrix::Coo(m)
    }
}

impl From<CsrMatrix> for SparseMatrix {
    fn from(m: CsrMatrix) -> Self {
        SparseMatrix::Csr(m)
    }
}

impl From<EllMatrix> for SparseMatrix {
    fn from(m: EllMatrix) -> Self {
        SparseMatrix::Ell(m)
    }
}

impl From<HybMatrix> for SparseMatrix {
    fn from(m: HybMatrix) -> Self {
        SparseMatrix::Hyb(m)
    }
}
