//! Sparse matrix-vector products.
//!
//! * CSR: the "vector" scheme. Each row is shared by `workers_per_row`
//!   lanes; lane `l` accumulates entries `l, l + tw, l + 2tw, ...` and the
//!   lane sums are folded with a binary tree (stride `tw/2, tw/4, ..., 1`).
//!   A block covers `block_size / workers_per_row` rows.
//! * ELL: one lane per row, slots visited column-major, padded slots skipped.
//!   A block covers `block_size` rows.
//! * COO: per-row accumulation in stored order over row blocks of
//!   `block_size` rows.
//! * HYB: ELL part, then the COO overflow added row by row.
//!
//! Every output row is written by exactly one block and its summation order
//! is fixed by the policy, so outputs are bit-identical across runs and pool
//! sizes.

use crate::formats::{CooMatrix, CsrMatrix, EllMatrix, HybMatrix, SparseMatrix};

use super::pool::for_each_chunk_mut;
use super::{grid_spmv_blocks, ExecPolicy, KernelError};

/// `y = A x` into a fresh vector.
pub fn spmv(m: &SparseMatrix, x: &[f64], policy: &ExecPolicy) -> Result<Vec<f64>, KernelError> {
    let mut y = vec![0.0; m.n_rows()];
    spmv_into(m, x, &mut y, policy)?;
    Ok(y)
}

/// `y = A x`, overwriting `y`.
pub fn spmv_into(m: &SparseMatrix, x: &[f64], y: &mut [f64], policy: &ExecPolicy) -> Result<(), KernelError> {
    if x.len() != m.n_cols() {
        return Err(KernelError::DimensionMismatch { op: "spmv", expected: m.n_cols(), found: x.len() });
    }
    if y.len() != m.n_rows() {
        return Err(KernelError::DimensionMismatch { op: "spmv", expected: m.n_rows(), found: y.len() });
    }
    match m {
        SparseMatrix::Csr(a) => csr_vector(a, x, y, policy),
        SparseMatrix::Ell(a) => {
            ell_rows(a, x, y, policy);
        }
        SparseMatrix::Coo(a) => {
            y.fill(0.0);
            coo_accumulate(a, x, y, policy);
        }
        SparseMatrix::Hyb(a) => hyb(a, x, y, policy),
    }
    Ok(())
}

fn csr_vector(a: &CsrMatrix, x: &[f64], y: &mut [f64], policy: &ExecPolicy) {
    let tw = policy.workers_per_row();
    let rows_per_block = policy.rows_per_block();
    debug_assert_eq!(y.len().div_ceil(rows_per_block), grid_spmv_blocks(y.len(), policy));
    let (row_ptr, cols, vals) = (a.row_ptr(), a.col_idx(), a.values());
    for_each_chunk_mut(y, rows_per_block, policy, a.nnz() + a.n_rows(), |block, yc| {
        let first = block * rows_per_block;
        for (k, out) in yc.iter_mut().enumerate() {
            let r = row_ptr[first + k]..row_ptr[first + k + 1];
            *out = row_lanes(&cols[r.clone()], &vals[r], x, tw);
        }
    });
}

#[inline]
fn row_lanes(cols: &[usize], vals: &[f64], x: &[f64], tw: usize) -> f64 {
    if tw == 1 {
        return cols.iter().zip(vals).fold(0.0, |acc, (&c, &v)| acc + v * x[c]);
    }
    let mut lanes = [0.0f64; 32];
    let mask = tw - 1;
    for (k, (&c, &v)) in cols.iter().zip(vals).enumerate() {
        lanes[k & mask] += v * x[c];
    }
    let mut stride = tw / 2;
    while stride > 0 {
        for i in 0..stride {
            lanes[i] += lanes[i + stride];
        }
        stride /= 2;
    }
    lanes[0]
}

fn ell_rows(a: &EllMatrix, x: &[f64], y: &mut [f64], policy: &ExecPolicy) {
    let n = a.n_rows();
    let width = a.width();
    let pad = a.padding_sentinel();
    let (coef, jcoef) = (a.coef(), a.jcoef());
    let bs = policy.block_size();
    for_each_chunk_mut(y, bs, policy, n * width.max(1), |block, yc| {
        let first = block * bs;
        yc.fill(0.0);
        for s in 0..width {
            let base = s * n + first;
            let (cs, js) = (&coef[base..base + yc.len()], &jcoef[base..base + yc.len()]);
            for ((out, &v), &c) in yc.iter_mut().zip(cs).zip(js) {
                if c != pad {
                    *out += v * x[c];
                }
            }
        }
    });
}

/// Adds `A x` for a row-sorted COO matrix into `y`.
fn coo_accumulate(a: &CooMatrix, x: &[f64], y: &mut [f64], policy: &ExecPolicy) {
    let (rows, cols, vals) = (a.row_idx(), a.col_idx(), a.values());
    if rows.is_empty() {
        return;
    }
    let bs = policy.block_size();
    for_each_chunk_mut(y, bs, policy, a.nnz() + a.n_rows(), |block, yc| {
        let first = block * bs;
        let last = first + yc.len();
        let start = rows.partition_point(|&r| r < first);
        let end = rows.partition_point(|&r| r < last);
        for k in start..end {
            yc[rows[k] - first] += vals[k] * x[cols[k]];
        }
    });
}

fn hyb(a: &HybMatrix, x: &[f64], y: &mut [f64], policy: &ExecPolicy) {
    ell_rows(a.ell_part(), x, y, policy);
    coo_accumulate(a.coo_part(), x, y, policy);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{CooMatrix, HybWidth, StorageFormat, DEFAULT_ELL_MAX_SLOTS};
    use crate::kernels::GridStrategy;

    fn example() -> SparseMatrix {
        let t = vec![
            (0, 0, -5.0),
            (0, 1, 14.0),
            (1, 1, 8.0),
            (1, 2, 1.0),
            (2, 0, 2.0),
            (2, 2, 10.0),
            (3, 1, 4.0),
            (3, 3, 2.0),
            (3, 4, 9.0),
            (4, 2, 15.0),
            (4, 4, 7.0),
        ];
        SparseMatrix::Coo(CooMatrix::from_triples(5, 5, t).unwrap())
    }

    fn all_formats(m: &SparseMatrix) -> Vec<SparseMatrix> {
        StorageFormat::ALL.iter().map(|&f| m.convert(f, HybWidth::Fixed(2), DEFAULT_ELL_MAX_SLOTS).unwrap()).collect()
    }

    #[test]
    fn example_row_sums_and_first_column() {
        for m in all_formats(&example()) {
            for p in ExecPolicy::candidate_grid() {
                assert_eq!(spmv(&m, &[1.0; 5], &p).unwrap(), vec![9.0, 9.0, 12.0, 15.0, 22.0]);
                assert_eq!(spmv(&m, &[1.0, 0.0, 0.0, 0.0, 0.0], &p).unwrap(), vec![-5.0, 0.0, 2.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn identity_in_every_format() {
        let id = SparseMatrix::Csr(CsrMatrix::identity(4));
        let x = [0.5, -3.25, 7.0, 1e-3];
        for m in all_formats(&id) {
            assert_eq!(spmv(&m, &x, &ExecPolicy::default()).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn dimension_mismatch() {
        let err = spmv(&example(), &[1.0; 4], &ExecPolicy::default()).unwrap_err();
        assert_eq!(err, KernelError::DimensionMismatch { op: "spmv", expected: 5, found: 4 });
    }

    #[test]
    fn lanes_beyond_row_length_are_harmless() {
        let p = ExecPolicy::new(32, 32, GridStrategy::FlatX).unwrap();
        let m = example().convert(StorageFormat::Csr, HybWidth::Auto, DEFAULT_ELL_MAX_SLOTS).unwrap();
        assert_eq!(spmv(&m, &[1.0; 5], &p).unwrap(), vec![9.0, 9.0, 12.0, 15.0, 22.0]);
    }

    #[test]
    fn tree_order_for_two_lanes() {
        // lanes: (a0 + a2) and (a1 + a3), then folded
        let cols = [0, 1, 2, 3];
        let vals = [1e16, 1.0, -1e16, 1.0];
        let x = [1.0; 4];
        let two = row_lanes(&cols, &vals, &x, 2);
        assert_eq!(two, (1e16 + -1e16) + (1.0 + 1.0));
        let one = row_lanes(&cols, &vals, &x, 1);
        assert_eq!(one, ((1e16 + 1.0) + -1e16) + 1.0);
    }

    #[test]
    fn large_matrix_pool_sizes_agree() {
        // big enough to take the parallel path
        let n = 40_000;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + (i % 7) as f64));
            if i > 0 {
                t.push((i, i - 1, -1.0 - (i % 3) as f64 * 0.1));
            }
            if i + 3 < n {
                t.push((i, i + 3, 0.3));
            }
        }
        let base = SparseMatrix::Coo(CooMatrix::from_triples(n, n, t).unwrap());
        let x: Vec<f64> = (0..n).map(|i| ((i * 31) % 97) as f64 / 97.0).collect();
        for m in all_formats(&base) {
            let p = ExecPolicy::new(64, 4, GridStrategy::Square).unwrap();
            let a = spmv(&m, &x, &p.with_worker_count(1)).unwrap();
            let b = spmv(&m, &x, &p.with_worker_count(4)).unwrap();
            assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }
}
