use crate::formats::SparseMatrix;
use crate::kernels::{daxpy, xpay};

use super::{Monitor, Operator, SolveReport, SolverConfig, SolverError};

/// BiCGStab with shadow residual `r^ = r0`.
///
/// One iteration is a BiCG step followed by a one-dimensional minimal
/// residual step. If the intermediate residual `s` already meets the
/// tolerance the iteration ends after the half step.
pub fn solve_bicgstab(a: &SparseMatrix, b: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
    let op = Operator::new(a, b, x0, cfg)?;
    let pol = *op.policy();
    let n = op.n();

    let mut x = x0.to_vec();
    let mut r = op.residual(b, &x)?;
    let r0 = op.norm(&r);
    let mut mon = Monitor::new("bicgstab", cfg, if r0 == 0.0 { 1.0 } else { r0 });
    if r0 == 0.0 {
        return Ok(mon.finish(true, 0.0, x));
    }

    let r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut measure = 1.0;
    while mon.iterations() < cfg.max_iterations {
        let rho_new = mon.guard(op.dot(&r_hat, &r)?, "rho")?;
        if mon.iterations() == 0 {
            p.copy_from_slice(&r);
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            daxpy(-omega, &v, &mut p, &pol)?;
            xpay(&r, beta, &mut p, &pol)?;
        }
        op.apply(&p, &mut v)?;
        alpha = rho_new / mon.guard(op.dot(&r_hat, &v)?, "(r^, v)")?;
        // r now holds s = r - alpha v
        daxpy(-alpha, &v, &mut r, &pol)?;
        daxpy(alpha, &p, &mut x, &pol)?;

        let half = mon.ratio(op.norm(&r));
        if mon.below_tolerance(half) {
            let true_measure = mon.true_measure(&op, b, &x)?;
            if mon.below_tolerance(true_measure) {
                mon.record(half)?;
                return Ok(mon.finish(true, true_measure, x));
            }
        }

        op.apply(&r, &mut t)?;
        let tt = mon.guard(op.dot(&t, &t)?, "(t, t)")?;
        omega = mon.guard(op.dot(&t, &r)? / tt, "omega")?;
        daxpy(omega, &r, &mut x, &pol)?;
        daxpy(-omega, &t, &mut r, &pol)?;
        rho = rho_new;

        measure = mon.ratio(op.norm(&r));
        if mon.record(measure)? {
            let true_measure = mon.true_measure(&op, b, &x)?;
            if mon.below_tolerance(true_measure) {
                return Ok(mon.finish(true, true_measure, x));
            }
            r = op.residual(b, &x)?;
        }
    }
    Ok(mon.finish(false, measure, x))
}

/// BiCGStab(l) with `l = cfg.stab_l`.
///
/// Each iteration (cycle) performs `l` BiCG steps followed by an
/// `l`-dimensional minimal residual update. The residual is also checked
/// after every inner BiCG step.
pub fn solve_bicgstab_l(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    let op = Operator::new(a, b, x0, cfg)?;
    let pol = *op.policy();
    let n = op.n();
    let l = cfg.stab_l;

    let mut x = x0.to_vec();
    let first = op.residual(b, &x)?;
    let r0_norm = op.norm(&first);
    let mut mon = Monitor::new("bicgstabl", cfg, if r0_norm == 0.0 { 1.0 } else { r0_norm });
    if r0_norm == 0.0 {
        return Ok(mon.finish(true, 0.0, x));
    }

    let r_tilde = first.clone();
    let mut r = vec![vec![0.0; n]; l + 1];
    let mut u = vec![vec![0.0; n]; l + 1];
    r[0] = first;
    let (mut rho0, mut alpha, mut omega) = (1.0, 0.0, 1.0);
    let mut tau = vec![vec![0.0; l + 1]; l + 1];
    let mut sigma = vec![0.0; l + 1];
    let mut gamma = vec![0.0; l + 1];
    let mut gamma_p = vec![0.0; l + 1];
    let mut gamma_pp = vec![0.0; l + 1];
    let mut measure = 1.0;

    while mon.iterations() < cfg.max_iterations {
        rho0 *= -omega;
        for j in 0..l {
            let rho1 = op.dot(&r[j], &r_tilde)?;
            let beta = alpha * rho1 / mon.guard(rho0, "rho")?;
            rho0 = rho1;
            for i in 0..=j {
                xpay(&r[i], -beta, &mut u[i], &pol)?;
            }
            let (lo, hi) = u.split_at_mut(j + 1);
            op.apply(&lo[j], &mut hi[0])?;
            alpha = rho0 / mon.guard(op.dot(&u[j + 1], &r_tilde)?, "gamma")?;
            for i in 0..=j {
                daxpy(-alpha, &u[i + 1], &mut r[i], &pol)?;
            }
            let (lo, hi) = r.split_at_mut(j + 1);
            op.apply(&lo[j], &mut hi[0])?;
            daxpy(alpha, &u[0], &mut x, &pol)?;

            let inner = mon.ratio(op.norm(&r[0]));
            if mon.below_tolerance(inner) {
                let true_measure = mon.true_measure(&op, b, &x)?;
                if mon.below_tolerance(true_measure) {
                    mon.record(inner)?;
                    return Ok(mon.finish(true, true_measure, x));
                }
            }
        }

        // minimal residual part: modified Gram-Schmidt on r[1..=l]
        for j in 1..=l {
            for i in 1..j {
                tau[i][j] = op.dot(&r[j], &r[i])? / sigma[i];
                let (lo, hi) = r.split_at_mut(j);
                daxpy(-tau[i][j], &lo[i], &mut hi[0], &pol)?;
            }
            sigma[j] = mon.guard(op.dot(&r[j], &r[j])?, "sigma")?;
            gamma_p[j] = op.dot(&r[0], &r[j])? / sigma[j];
        }
        gamma[l] = gamma_p[l];
        omega = gamma[l];
        for j in (1..l).rev() {
            gamma[j] = gamma_p[j] - ((j + 1)..=l).map(|i| tau[j][i] * gamma[i]).sum::<f64>();
        }
        for j in 1..l {
            gamma_pp[j] = gamma[j + 1] + ((j + 1)..l).map(|i| tau[j][i] * gamma[i + 1]).sum::<f64>();
        }
        daxpy(gamma[1], &r[0], &mut x, &pol)?;
        {
            let (r_lo, r_hi) = r.split_at_mut(1);
            daxpy(-gamma_p[l], &r_hi[l - 1], &mut r_lo[0], &pol)?;
            let (u_lo, u_hi) = u.split_at_mut(1);
            daxpy(-gamma[l], &u_hi[l - 1], &mut u_lo[0], &pol)?;
            for j in 1..l {
                daxpy(-gamma[j], &u_hi[j - 1], &mut u_lo[0], &pol)?;
                daxpy(gamma_pp[j], &r_hi[j - 1], &mut x, &pol)?;
                daxpy(-gamma_p[j], &r_hi[j - 1], &mut r_lo[0], &pol)?;
            }
        }

        measure = mon.ratio(op.norm(&r[0]));
        if mon.record(measure)? {
            let true_measure = mon.true_measure(&op, b, &x)?;
            if mon.below_tolerance(true_measure) {
                return Ok(mon.finish(true, true_measure, x));
            }
            r[0] = op.residual(b, &x)?;
        }
    }
    Ok(mon.finish(false, measure, x))
}
