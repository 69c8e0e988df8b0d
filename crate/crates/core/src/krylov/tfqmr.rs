use crate::formats::SparseMatrix;
use crate::kernels::{daxpy, xpay};

use super::{Monitor, Operator, SolveReport, SolverConfig, SolverError};

/// Transpose-free QMR.
///
/// One iteration covers the two quasi-minimization half steps that share a
/// value of `alpha`. The cheap bound `tau * sqrt(k + 1)` on the residual
/// norm after `k` half steps drives the stopping test; it is confirmed on
/// the true residual before the solver stops.
pub fn solve_tfqmr(a: &SparseMatrix, b: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
    let op = Operator::new(a, b, x0, cfg)?;
    let pol = *op.policy();
    let n = op.n();

    let mut x = x0.to_vec();
    let r0 = op.residual(b, &x)?;
    let tau0 = op.norm(&r0);
    let mut mon = Monitor::new("tfqmr", cfg, if tau0 == 0.0 { 1.0 } else { tau0 });
    if tau0 == 0.0 {
        return Ok(mon.finish(true, 0.0, x));
    }

    let mut w = r0.clone();
    let mut u = r0.clone();
    let mut au = vec![0.0; n];
    op.apply(&u, &mut au)?;
    let mut v = au.clone();
    let mut u_next = vec![0.0; n];
    let mut au_next = vec![0.0; n];
    let mut d = vec![0.0; n];
    let r_star = r0;
    let mut rho = mon.guard(op.dot(&r_star, &r_star)?, "rho")?;
    let (mut tau, mut theta, mut eta) = (tau0, 0.0f64, 0.0f64);
    let mut half_steps = 0usize;
    let mut measure = 1.0;

    while mon.iterations() < cfg.max_iterations {
        let alpha = rho / mon.guard(op.dot(&v, &r_star)?, "(v, r*)")?;
        u_next.copy_from_slice(&u);
        daxpy(-alpha, &v, &mut u_next, &pol)?;
        op.apply(&u_next, &mut au_next)?;

        for half in 0..2 {
            let (uh, auh) = if half == 0 { (&u, &au) } else { (&u_next, &au_next) };
            daxpy(-alpha, auh, &mut w, &pol)?;
            xpay(uh, theta * theta * eta / alpha, &mut d, &pol)?;
            theta = op.norm(&w) / tau;
            let c = 1.0 / (1.0 + theta * theta).sqrt();
            tau *= theta * c;
            eta = c * c * alpha;
            daxpy(eta, &d, &mut x, &pol)?;
            half_steps += 1;

            measure = mon.ratio(tau * ((half_steps + 1) as f64).sqrt());
            if mon.below_tolerance(measure) {
                let true_measure = mon.true_measure(&op, b, &x)?;
                if mon.below_tolerance(true_measure) {
                    mon.record(measure)?;
                    return Ok(mon.finish(true, true_measure, x));
                }
            }
        }

        let rho_new = mon.guard(op.dot(&w, &r_star)?, "rho")?;
        let beta = rho_new / rho;
        rho = rho_new;
        // u <- w + beta u_next, v <- A u + beta (A u_next + beta v)
        u.copy_from_slice(&w);
        daxpy(beta, &u_next, &mut u, &pol)?;
        op.apply(&u, &mut au)?;
        xpay(&au_next, beta, &mut v, &pol)?;
        xpay(&au, beta, &mut v, &pol)?;

        mon.record(measure)?;
    }
    Ok(mon.finish(false, measure, x))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::Preconditioner;
    use super::*;

    #[test]
    fn nonsymmetric_system_solved() {
        let a = random_diag_dominant(45, 21);
        let b: Vec<f64> = (0..45).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        for pre in [Preconditioner::None, Preconditioner::Jacobi] {
            let cfg = SolverConfig { tolerance: 1e-10, preconditioner: pre, ..Default::default() };
            let rep = solve_tfqmr(&a, &b, &[0.0; 45], &cfg).unwrap();
            assert!(rep.converged);
            assert!(rel_residual(&a, &rep.solution, &b) < 1e-8);
        }
    }

    #[test]
    fn spd_system_solved() {
        let a = tridiag(80, 2.0, -1.0);
        let b = vec![1.0; 80];
        let cfg = SolverConfig { tolerance: 1e-9, ..Default::default() };
        let rep = solve_tfqmr(&a, &b, &[0.0; 80], &cfg).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.residual_history.len(), rep.iterations);
        assert!(rel_residual(&a, &rep.solution, &b) < 1e-7);
    }
}
