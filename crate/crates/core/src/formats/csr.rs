use serde::Serialize;

use super::{CooMatrix, DenseMatrix, EllMatrix, FormatError, HybMatrix, HybWidth, DEFAULT_ELL_MAX_SLOTS};

/// Compressed sparse row storage in canonical form: `row_ptr[0] == 0`,
/// `row_ptr[n_rows] == nnz`, columns strictly increasing inside each row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Validating constructor.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, FormatError> {
        let bad = |msg: String| Err(FormatError::InvalidStructure(msg));
        if row_ptr.len() != n_rows + 1 {
            return bad(format!("row_ptr has length {}, expected {}", row_ptr.len(), n_rows + 1));
        }
        if col_idx.len() != values.len() {
            return bad(format!("{} column indices but {} values", col_idx.len(), values.len()));
        }
        if row_ptr[0] != 0 || row_ptr[n_rows] != values.len() {
            return bad("row_ptr must start at 0 and end at nnz".into());
        }
        for i in 0..n_rows {
            let (s, e) = (row_ptr[i], row_ptr[i + 1]);
            if s > e {
                return bad(format!("row_ptr decreases at row {i}"));
            }
            for k in s..e {
                if col_idx[k] >= n_cols {
                    return Err(FormatError::IndexOutOfRange { row: i, col: col_idx[k], n_rows, n_cols });
                }
                if k > s && col_idx[k] <= col_idx[k - 1] {
                    return bad(format!("columns of row {i} are not strictly increasing"));
                }
            }
        }
        Ok(CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values })
    }

    pub(crate) fn from_canonical_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), n_rows + 1);
        debug_assert_eq!(row_ptr[n_rows], values.len());
        CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        CsrMatrix { n_rows: n, n_cols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: diag.to_vec() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_nnz(&self, row: usize) -> usize {
        self.row_ptr[row + 1] - self.row_ptr[row]
    }

    /// `(col, value)` pairs of one row, in column order.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.n_rows).map(|i| self.row_nnz(i)).max().unwrap_or(0)
    }

    /// Value stored at `(row, col)`, if any.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let r = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[r.clone()].binary_search(&col).ok().map(|k| self.values[r.start + k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i).unwrap_or(0.0)).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut row_ptr = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                let k = next[c];
                col_idx[k] = i;
                values[k] = v;
                next[c] += 1;
            }
        }
        CsrMatrix { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, col_idx, values }
    }

    pub fn to_coo(&self) -> CooMatrix {
        let mut row_idx = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            row_idx.extend(std::iter::repeat_n(i, self.row_nnz(i)));
        }
        CooMatrix::from_canonical_parts(self.n_rows, self.n_cols, row_idx, self.col_idx.clone(), self.values.clone())
    }

    /// Full ELL with the default slot cap.
    pub fn to_ell(&self) -> Result<EllMatrix, FormatError> {
        self.to_ell_capped(DEFAULT_ELL_MAX_SLOTS)
    }

    /// Full ELL (width = longest row). Fails with `EllBlowup` when
    /// `n_rows * width` would exceed `max_slots`.
    pub fn to_ell_capped(&self, max_slots: usize) -> Result<EllMatrix, FormatError> {
        let width = self.max_row_nnz();
        let slots = self.n_rows.saturating_mul(width);
        if slots > max_slots {
            return Err(FormatError::EllBlowup { n_rows: self.n_rows, width, slots, cap: max_slots });
        }
        Ok(EllMatrix::from_csr_prefix(self, width))
    }

    pub fn to_hyb(&self, width: HybWidth) -> HybMatrix {
        HybMatrix::from_csr(self, width)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                d.set(i, c, v);
            }
        }
        d
    }
}
