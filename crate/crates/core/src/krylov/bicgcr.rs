use crate::formats::SparseMatrix;
use crate::kernels::{daxpy, spmv_into, xpay};

use super::{Monitor, Operator, SolveReport, SolverConfig, SolverError};

/// Bi-conjugate residual method (BiCR).
///
/// Runs the biconjugate recurrences on `M^-1 A` and its transpose
/// `A^T M^-1` with shadow residual `r* = r0`, choosing `alpha` so the
/// residual sequences are bi-A-orthogonal. On symmetric systems without
/// preconditioning it coincides with the conjugate residual method.
pub fn solve_bicgcr(a: &SparseMatrix, b: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
    let op = Operator::new(a, b, x0, cfg)?;
    let pol = *op.policy();
    let n = op.n();

    let mut x = x0.to_vec();
    let mut r = op.residual(b, &x)?;
    let r0 = op.norm(&r);
    let mut mon = Monitor::new("bicgcr", cfg, if r0 == 0.0 { 1.0 } else { r0 });
    if r0 == 0.0 {
        return Ok(mon.finish(true, 0.0, x));
    }

    let at = SparseMatrix::Csr(op.matrix().to_csr().transpose());
    let mut scratch = vec![0.0; n];
    // out <- A^T M^-1 v
    let mut apply_t = |v: &[f64], out: &mut [f64]| -> Result<(), SolverError> {
        scratch.copy_from_slice(v);
        op.precondition(&mut scratch)?;
        spmv_into(&at, &scratch, out, &pol)?;
        Ok(())
    };

    let mut rs = r.clone();
    let mut ar = vec![0.0; n];
    let mut at_rs = vec![0.0; n];
    op.apply(&r, &mut ar)?;
    apply_t(&rs, &mut at_rs)?;
    let mut p = r.clone();
    let mut ps = rs.clone();
    let mut ap = ar.clone();
    let mut at_ps = at_rs.clone();
    let mut num = op.dot(&rs, &ar)?;
    let mut measure = 1.0;

    while mon.iterations() < cfg.max_iterations {
        let den = mon.guard(op.dot(&at_ps, &ap)?, "(A^T p*, A p)")?;
        let alpha = mon.guard(num, "(r*, A r)")? / den;
        daxpy(alpha, &p, &mut x, &pol)?;
        daxpy(-alpha, &ap, &mut r, &pol)?;
        daxpy(-alpha, &at_ps, &mut rs, &pol)?;

        measure = mon.ratio(op.norm(&r));
        if mon.record(measure)? {
            let true_measure = mon.true_measure(&op, b, &x)?;
            if mon.below_tolerance(true_measure) {
                return Ok(mon.finish(true, true_measure, x));
            }
        }

        op.apply(&r, &mut ar)?;
        apply_t(&rs, &mut at_rs)?;
        let num_new = op.dot(&rs, &ar)?;
        let beta = num_new / num;
        num = num_new;
        xpay(&r, beta, &mut p, &pol)?;
        xpay(&rs, beta, &mut ps, &pol)?;
        xpay(&ar, beta, &mut ap, &pol)?;
        xpay(&at_rs, beta, &mut at_ps, &pol)?;
    }
    Ok(mon.finish(false, measure, x))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::{solve_pcg, Preconditioner};
    use super::*;

    #[test]
    fn nonsymmetric_system_solved() {
        let a = random_diag_dominant(40, 13);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() + 0.2).collect();
        for pre in [Preconditioner::None, Preconditioner::Jacobi] {
            let cfg = SolverConfig { tolerance: 1e-10, preconditioner: pre, ..Default::default() };
            let rep = solve_bicgcr(&a, &b, &[0.0; 40], &cfg).unwrap();
            assert!(rep.converged);
            assert!(rel_residual(&a, &rep.solution, &b) < 1e-8);
        }
    }

    #[test]
    fn symmetric_case_converges_like_cg() {
        let a = tridiag(50, 2.2, -1.0);
        let b = vec![1.0; 50];
        let cfg = SolverConfig { tolerance: 1e-8, preconditioner: Preconditioner::None, ..Default::default() };
        let cr = solve_bicgcr(&a, &b, &[0.0; 50], &cfg).unwrap();
        let cg = solve_pcg(&a, &b, &[0.0; 50], &cfg).unwrap();
        assert!(cr.converged && cg.converged);
        assert!(cr.iterations <= 2 * cg.iterations + 2, "{} vs {}", cr.iterations, cg.iterations);
        // minimal residual property: history never increases
        for w in cr.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
    }
}
