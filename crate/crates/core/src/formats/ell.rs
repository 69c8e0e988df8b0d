use serde::Serialize;

use super::{CooMatrix, CsrMatrix, DenseMatrix};

/// Default cap on `n_rows * width` for full ELL conversion (2^27 slots,
/// about 2 GiB of values and indices).
pub const DEFAULT_ELL_MAX_SLOTS: usize = 1 << 27;

/// ELLPACK storage: an `n_rows x width` block of values and column indices,
/// both laid out column-major so slot `s` of row `r` lives at
/// `s * n_rows + r`.
///
/// Unused slots hold value `0.0` and the sentinel column index `n_cols`,
/// which is never a valid column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllMatrix {
    n_rows: usize,
    n_cols: usize,
    width: usize,
    coef: Vec<f64>,
    jcoef: Vec<usize>,
}

impl EllMatrix {
    /// ELL holding the first `min(width, row_nnz)` entries of each row.
    pub(crate) fn from_csr_prefix(csr: &CsrMatrix, width: usize) -> Self {
        let n = csr.n_rows();
        let sentinel = csr.n_cols();
        let mut coef = vec![0.0; n * width];
        let mut jcoef = vec![sentinel; n * width];
        for row in 0..n {
            for (slot, (c, v)) in csr.row(row).take(width).enumerate() {
                coef[slot * n + row] = v;
                jcoef[slot * n + row] = c;
            }
        }
        EllMatrix { n_rows: n, n_cols: csr.n_cols(), width, coef, jcoef }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Column index marking a padded slot.
    pub fn padding_sentinel(&self) -> usize {
        self.n_cols
    }

    pub fn coef(&self) -> &[f64] {
        &self.coef
    }

    pub fn jcoef(&self) -> &[usize] {
        &self.jcoef
    }

    pub fn slot(&self, row: usize, slot: usize) -> (usize, f64) {
        let k = slot * self.n_rows + row;
        (self.jcoef[k], self.coef[k])
    }

    /// Stored (non-padding) entries.
    pub fn nnz(&self) -> usize {
        self.jcoef.iter().filter(|&&c| c != self.n_cols).count()
    }

    /// Row-major view of `coef` as `n_rows` rows of `width` values.
    pub fn coef_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows).map(|r| (0..self.width).map(|s| self.slot(r, s).1).collect()).collect()
    }

    /// Row-major view of `jcoef`; padded slots show the sentinel.
    pub fn jcoef_rows(&self) -> Vec<Vec<usize>> {
        (0..self.n_rows).map(|r| (0..self.width).map(|s| self.slot(r, s).0).collect()).collect()
    }

    fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (0..self.width).filter_map(move |s| {
                let (c, v) = self.slot(r, s);
                (c != self.n_cols).then_some((r, c, v))
            })
        })
    }

    pub fn to_coo(&self) -> CooMatrix {
        let (mut ri, mut ci, mut vs) = (Vec::new(), Vec::new(), Vec::new());
        for (r, c, v) in self.entries() {
            ri.push(r);
            ci.push(c);
            vs.push(v);
        }
        CooMatrix::from_canonical_parts(self.n_rows, self.n_cols, ri, ci, vs)
    }

    pub fn to_csr(&self) -> CsrMatrix {
        self.to_coo().to_csr()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.entries() {
            d.set(r, c, v);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::FormatError;
    use super::*;

    #[test]
    fn example_layout() {
        let ell = example_coo().to_csr().to_ell().unwrap();
        let pad = ell.padding_sentinel();
        assert_eq!(pad, 5);
        assert_eq!(ell.width(), 3);
        assert_eq!(
            ell.coef_rows(),
            vec![
                vec![-5.0, 14.0, 0.0],
                vec![8.0, 1.0, 0.0],
                vec![2.0, 10.0, 0.0],
                vec![4.0, 2.0, 9.0],
                vec![15.0, 7.0, 0.0],
            ]
        );
        assert_eq!(
            ell.jcoef_rows(),
            vec![vec![0, 1, pad], vec![1, 2, pad], vec![0, 2, pad], vec![1, 3, 4], vec![2, 4, pad]]
        );
        assert_eq!(ell.nnz(), 11);
    }

    #[test]
    fn column_major_addressing() {
        let n = 7;
        let width = 4;
        let triples = (0..n).flat_map(|r| (0..width).map(move |s| (r, s, (100 * r + s) as f64)));
        let ell = CooMatrix::from_triples(n, width, triples).unwrap().to_csr().to_ell().unwrap();
        for r in 0..n {
            for s in 0..width {
                assert_eq!(ell.coef()[s * n + r], (100 * r + s) as f64);
            }
        }
    }

    #[test]
    fn diagonal_has_width_one() {
        let ell = CsrMatrix::identity(4).to_ell().unwrap();
        assert_eq!(ell.width(), 1);
    }

    #[test]
    fn full_row_blows_up_under_cap() {
        let mut t: Vec<_> = (0..100).map(|i| (i, i, 1.0)).collect();
        t.extend((0..100).map(|j| (17, j, 2.0)));
        let csr = CooMatrix::from_triples(100, 100, t).unwrap().to_csr();
        let err = csr.to_ell_capped(9_999).unwrap_err();
        assert_eq!(err, FormatError::EllBlowup { n_rows: 100, width: 100, slots: 10_000, cap: 9_999 });
        assert!(csr.to_ell_capped(10_000).is_ok());
    }

    #[test]
    fn empty_matrix() {
        let ell = CooMatrix::empty(3, 3).to_csr().to_ell().unwrap();
        assert_eq!(ell.width(), 0);
        assert_eq!(ell.to_dense(), DenseMatrix::zeros(3, 3));
    }
}
