use serde::Serialize;

use super::{CsrMatrix, DenseMatrix, FormatError};

/// Coordinate storage: three parallel arrays `(row_idx, col_idx, values)`.
///
/// Entries are kept sorted row-major, then by column, with no repeated
/// coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CooMatrix {
    n_rows: usize,
    n_cols: usize,
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CooMatrix {
    /// Builds a canonical COO matrix from arbitrary `(row, col, value)`
    /// triples. Repeated coordinates are summed in input order.
    pub fn from_triples<I>(n_rows: usize, n_cols: usize, triples: I) -> Result<Self, FormatError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triples.into_iter().collect();
        if let Some(&(row, col, _)) = entries.iter().find(|&&(r, c, _)| r >= n_rows || c >= n_cols) {
            return Err(FormatError::IndexOutOfRange { row, col, n_rows, n_cols });
        }
        // stable sort keeps duplicates in input order, so summation order is the input order
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_idx = Vec::with_capacity(entries.len());
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            if row_idx.last() == Some(&r) && col_idx.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        Ok(CooMatrix { n_rows, n_cols, row_idx, col_idx, values })
    }

    /// Callers guarantee canonical ordering and in-range indices.
    pub(crate) fn from_canonical_parts(
        n_rows: usize,
        n_cols: usize,
        row_idx: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert!(row_idx.len() == col_idx.len() && col_idx.len() == values.len());
        debug_assert!(row_idx
            .iter()
            .zip(&col_idx)
            .zip(row_idx.iter().zip(&col_idx).skip(1))
            .all(|(a, b)| (a.0, a.1) < (b.0, b.1)));
        CooMatrix { n_rows, n_cols, row_idx, col_idx, values }
    }

    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        CooMatrix { n_rows, n_cols, row_idx: Vec::new(), col_idx: Vec::new(), values: Vec::new() }
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

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.row_idx.iter().zip(&self.col_idx).zip(&self.values).map(|((&r, &c), &v)| (r, c, v))
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        for &r in &self.row_idx {
            row_ptr[r + 1] += 1;
        }
        for i in 0..self.n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        // entries are already row-major sorted, so the arrays carry over unchanged
        CsrMatrix::from_canonical_parts(self.n_rows, self.n_cols, row_ptr, self.col_idx.clone(), self.values.clone())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            d.set(r, c, v);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    #[test]
    fn example_matches_worked_arrays() {
        let m = example_coo();
        assert_eq!(m.row_idx(), &[0, 0, 1, 1, 2, 2, 3, 3, 3, 4, 4]);
        assert_eq!(m.col_idx(), &[0, 1, 1, 2, 0, 2, 1, 3, 4, 2, 4]);
        assert_eq!(m.values(), &[-5.0, 14.0, 8.0, 1.0, 2.0, 10.0, 4.0, 2.0, 9.0, 15.0, 7.0]);
    }

    #[test]
    fn shuffled_input_is_sorted() {
        let mut t = example_triples();
        t.reverse();
        t.swap(2, 7);
        assert_eq!(CooMatrix::from_triples(5, 5, t).unwrap(), example_coo());
    }

    #[test]
    fn empty_triples() {
        let m = CooMatrix::from_triples(3, 4, Vec::new()).unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.to_csr().row_ptr(), &[0, 0, 0, 0]);
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CooMatrix::from_triples(1, 1, vec![(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.iter().next(), Some((0, 0, 3.0)));
        let mut oracle = DenseMatrix::zeros(1, 1);
        oracle.set(0, 0, 1.0 + 2.0);
        assert_eq!(m.to_dense(), oracle);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let err = CooMatrix::from_triples(2, 2, vec![(0, 0, 1.0), (2, 1, 1.0)]).unwrap_err();
        assert_eq!(err, FormatError::IndexOutOfRange { row: 2, col: 1, n_rows: 2, n_cols: 2 });
        assert!(CooMatrix::from_triples(2, 2, vec![(1, 5, 1.0)]).is_err());
    }
}
