use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::formats::CooMatrix;

use super::{write_matrix_market, IoError};

/// Cell Péclet number used by `convdiff2d` unless overridden.
pub const DEFAULT_PECLET: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    /// 5-point Laplacian on an `n x n` grid.
    Poisson2d,
    /// Tridiagonal `(-1, 2, -1)` of order `n`.
    Laplace1d,
    /// First-order upwind convection-diffusion on an `n x n` grid.
    Convdiff2d,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 3] = [GeneratorKind::Poisson2d, GeneratorKind::Laplace1d, GeneratorKind::Convdiff2d];

    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::Poisson2d => "poisson2d",
            GeneratorKind::Laplace1d => "laplace1d",
            GeneratorKind::Convdiff2d => "convdiff2d",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown generator '{s}' (expected poisson2d, laplace1d or convdiff2d)"))
    }
}

/// Builds the test matrix. `n` is the grid side for the 2D kinds and the
/// order for `laplace1d`; `peclet` only affects `convdiff2d`.
///
/// The convection-diffusion stencil upwinds a flow with cell Péclet numbers
/// `pe` along x and `pe / 2` along y: diagonal `4 + pe_x + pe_y`, west
/// `-1 - pe_x`, south `-1 - pe_y`, east and north `-1`.
pub fn generate(kind: GeneratorKind, n: usize, peclet: f64) -> Result<CooMatrix, IoError> {
    if n < 2 {
        return Err(IoError::Invalid(format!("{kind} needs n >= 2, got {n}")));
    }
    let mut t = Vec::new();
    match kind {
        GeneratorKind::Laplace1d => {
            for i in 0..n {
                if i > 0 {
                    t.push((i, i - 1, -1.0));
                }
                t.push((i, i, 2.0));
                if i + 1 < n {
                    t.push((i, i + 1, -1.0));
                }
            }
            return Ok(CooMatrix::from_triples(n, n, t)?);
        }
        GeneratorKind::Poisson2d | GeneratorKind::Convdiff2d => {
            let (px, py) = if kind == GeneratorKind::Poisson2d { (0.0, 0.0) } else { (peclet, peclet / 2.0) };
            for i in 0..n {
                for j in 0..n {
                    let r = i * n + j;
                    if i > 0 {
                        t.push((r, r - n, -1.0 - py));
                    }
                    if j > 0 {
                        t.push((r, r - 1, -1.0 - px));
                    }
                    t.push((r, r, 4.0 + px + py));
                    if j + 1 < n {
                        t.push((r, r + 1, -1.0));
                    }
                    if i + 1 < n {
                        t.push((r, r + n, -1.0));
                    }
                }
            }
        }
    }
    Ok(CooMatrix::from_triples(n * n, n * n, t)?)
}

pub fn generate_test_matrix(
    kind: GeneratorKind,
    n: usize,
    peclet: f64,
    path: impl AsRef<Path>,
) -> Result<CooMatrix, IoError> {
    let m = generate(kind, n, peclet)?;
    write_matrix_market(path, &m)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::SparseMatrix;
    use crate::io::{compute_stats, read_matrix_market};

    #[test]
    fn poisson_three() {
        let m = generate(GeneratorKind::Poisson2d, 3, DEFAULT_PECLET).unwrap();
        assert_eq!((m.n_rows(), m.n_cols(), m.nnz()), (9, 9, 33));
        let d = m.to_dense();
        assert!((0..9).all(|i| d.get(i, i) == 4.0));
        assert_eq!(d.row(4), &[0.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn laplace_four() {
        let m = generate(GeneratorKind::Laplace1d, 4, DEFAULT_PECLET).unwrap();
        let s = compute_stats(&SparseMatrix::Coo(m));
        assert_eq!(s.bandwidth, 1);
        assert!(s.nz_per_h_stddev > 0.0);
    }

    #[test]
    fn convdiff_is_nonsymmetric() {
        let d = generate(GeneratorKind::Convdiff2d, 4, 2.0).unwrap().to_dense();
        assert_eq!(d.get(5, 4), -3.0);
        assert_eq!(d.get(4, 5), -1.0);
        assert_eq!(d.get(5, 1), -2.0);
        assert_eq!(d.get(5, 5), 7.0);
    }

    #[test]
    fn small_n_rejected() {
        assert!(generate(GeneratorKind::Laplace1d, 1, 1.0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for kind in GeneratorKind::ALL {
            let p = dir.path().join(format!("{kind}.mtx"));
            let m = generate_test_matrix(kind, 5, 0.7, &p).unwrap();
            assert_eq!(read_matrix_market(&p).unwrap(), m);
        }
    }
}
