use serde::Serialize;

use crate::formats::SparseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixStats {
    /// Number of rows.
    pub h: usize,
    pub nz: usize,
    /// `nz / (rows * cols)`.
    pub density: f64,
    /// `100 * density`.
    pub density_percent: f64,
    /// Largest number of entries in one row.
    pub max_row: usize,
    /// First row reaching `max_row`.
    pub max_row_index: usize,
    /// Largest `|col - row|` over stored entries.
    pub bandwidth: usize,
    pub nz_per_h_mean: f64,
    /// Population standard deviation of the per-row entry counts.
    pub nz_per_h_stddev: f64,
}

pub fn compute_stats(m: &SparseMatrix) -> MatrixStats {
    let csr = m.to_csr();
    let (h, w) = (csr.n_rows(), csr.n_cols());
    let nz = csr.nnz();
    let counts: Vec<usize> = (0..h).map(|r| csr.row_nnz(r)).collect();
    let (mut max_row, mut max_row_index) = (0, 0);
    for (r, &c) in counts.iter().enumerate() {
        if c > max_row {
            max_row = c;
            max_row_index = r;
        }
    }
    let bandwidth = (0..h).flat_map(|r| csr.row(r).map(move |(c, _)| r.abs_diff(c))).max().unwrap_or(0);
    let cells = (h as f64) * (w as f64);
    let density = if cells > 0.0 { nz as f64 / cells } else { 0.0 };
    let mean = if h > 0 { nz as f64 / h as f64 } else { 0.0 };
    let var = if h > 0 { counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / h as f64 } else { 0.0 };
    MatrixStats {
        h,
        nz,
        density,
        density_percent: 100.0 * density,
        max_row,
        max_row_index,
        bandwidth,
        nz_per_h_mean: mean,
        nz_per_h_stddev: var.sqrt(),
    }
}
