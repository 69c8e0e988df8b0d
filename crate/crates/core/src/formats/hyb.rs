use serde::Serialize;

use super::{CooMatrix, CsrMatrix, DenseMatrix, EllMatrix};

/// ELL width selection for HYB conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum HybWidth {
    /// Smallest width that stores at least two thirds of the rows entirely.
    #[default]
    Auto,
    Fixed(usize),
}

impl HybWidth {
    pub fn resolve(self, csr: &CsrMatrix) -> usize {
        match self {
            HybWidth::Fixed(w) => w,
            HybWidth::Auto => auto_width(csr),
        }
    }
}

fn auto_width(csr: &CsrMatrix) -> usize {
    let n = csr.n_rows();
    if n == 0 {
        return 0;
    }
    let mut counts: Vec<usize> = (0..n).map(|i| csr.row_nnz(i)).collect();
    counts.sort_unstable();
    // smallest w with 3 * #{rows: nnz <= w} >= 2 * n
    let covered = (2 * n).div_ceil(3);
    counts[covered - 1]
}

/// Hybrid storage: each row keeps its first `width` entries in the ELL part
/// and spills the rest into the COO part.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybMatrix {
    ell_part: EllMatrix,
    coo_part: CooMatrix,
}

impl HybMatrix {
    pub fn from_csr(csr: &CsrMatrix, width: HybWidth) -> Self {
        let w = width.resolve(csr);
        let ell_part = EllMatrix::from_csr_prefix(csr, w);
        let (mut ri, mut ci, mut vs) = (Vec::new(), Vec::new(), Vec::new());
        for row in 0..csr.n_rows() {
            for (c, v) in csr.row(row).skip(w) {
                ri.push(row);
                ci.push(c);
                vs.push(v);
            }
        }
        let coo_part = CooMatrix::from_canonical_parts(csr.n_rows(), csr.n_cols(), ri, ci, vs);
        HybMatrix { ell_part, coo_part }
    }

    pub fn n_rows(&self) -> usize {
        self.ell_part.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.ell_part.n_cols()
    }

    pub fn width(&self) -> usize {
        self.ell_part.width()
    }

    pub fn ell_part(&self) -> &EllMatrix {
        &self.ell_part
    }

    pub fn coo_part(&self) -> &CooMatrix {
        &self.coo_part
    }

    pub fn nnz(&self) -> usize {
        self.ell_part.nnz() + self.coo_part.nnz()
    }

    pub fn to_csr(&self) -> CsrMatrix {
        // ELL slots hold a prefix of each row, COO the suffix: re-merge per row
        let ell = self.ell_part.to_csr();
        let coo = self.coo_part.to_csr();
        let n = self.n_rows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let (mut col_idx, mut values) = (Vec::with_capacity(self.nnz()), Vec::with_capacity(self.nnz()));
        row_ptr.push(0);
        for r in 0..n {
            for (c, v) in ell.row(r).chain(coo.row(r)) {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(values.len());
        }
        CsrMatrix::from_canonical_parts(n, self.n_cols(), row_ptr, col_idx, values)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = self.ell_part.to_dense();
        for (r, c, v) in self.coo_part.iter() {
            d.set(r, c, v);
        }
        d
    }
}
