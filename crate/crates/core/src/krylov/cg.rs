use serde::Serialize;

use crate::formats::SparseMatrix;
use crate::kernels::{daxpy, spmv_into, xpay};

use super::{Monitor, Operator, SolveReport, SolverConfig, SolverError};

const SOLUTION_CHECK_FACTOR: f64 = 100.0;

/// Scalars of one preconditioned CG iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CgTraceStep {
    pub rho: f64,
    /// `None` on the first iteration, where `p = z`.
    pub beta: Option<f64>,
    pub sigma: f64,
    pub alpha: f64,
}

/// Preconditioned conjugate gradients.
///
/// The convergence measure is `|<r, M^-1 r>| / ||b - A x0||`. It is tested as
/// soon as the new `rho` is known, so the reported iteration count is the
/// number of solution updates performed. Since that measure is not a
/// residual norm ratio, a pass is accepted only if the true residual also
/// satisfies `||b - A x|| / ||b|| <= 100 * tolerance`; otherwise the
/// iteration continues.
pub fn solve_pcg(a: &SparseMatrix, b: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
    pcg(a, b, x0, cfg, None)
}

/// [`solve_pcg`] that also returns the per-iteration scalars.
pub fn solve_pcg_traced(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<(SolveReport, Vec<CgTraceStep>), SolverError> {
    let mut trace = Vec::new();
    let report = pcg(a, b, x0, cfg, Some(&mut trace))?;
    Ok((report, trace))
}

fn pcg(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    mut trace: Option<&mut Vec<CgTraceStep>>,
) -> Result<SolveReport, SolverError> {
    let op = Operator::new(a, b, x0, cfg)?;
    let pol = *op.policy();
    let n = op.n();

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    spmv_into(a, &x, &mut r, &pol)?;
    crate::kernels::axpby(1.0, b, -1.0, &mut r, &pol)?;
    let mut norm_r0 = op.norm(&r);
    if norm_r0 == 0.0 {
        norm_r0 = 1.0;
    }
    let mut mon = Monitor::new("cg", cfg, norm_r0);

    let mut z = r.clone();
    op.precondition(&mut z)?;
    let mut rho = op.dot(&r, &z)?;
    let norm_b = op.norm(b);
    let solution_ok = |x: &[f64]| -> Result<bool, SolverError> {
        let mut res = vec![0.0; n];
        spmv_into(a, x, &mut res, &pol)?;
        crate::kernels::axpby(1.0, b, -1.0, &mut res, &pol)?;
        Ok(op.norm(&res) <= SOLUTION_CHECK_FACTOR * cfg.tolerance * if norm_b > 0.0 { norm_b } else { 1.0 })
    };
    let mut measure = mon.ratio(rho.abs());
    if !measure.is_finite() {
        return Err(SolverError::NonFinite { method: "cg", iteration: 0 });
    }
    if mon.below_tolerance(measure) && solution_ok(&x)? {
        return Ok(mon.finish(true, measure, x));
    }

    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut rho_prev = 0.0;
    while mon.iterations() < cfg.max_iterations {
        let beta = if mon.iterations() == 0 {
            std::mem::swap(&mut p, &mut z);
            None
        } else {
            let beta = rho / mon.guard(rho_prev, "rho")?;
            // p <- z + beta p
            xpay(&z, beta, &mut p, &pol)?;
            Some(beta)
        };
        spmv_into(a, &p, &mut ap, &pol)?;
        let sigma = mon.guard(op.dot(&p, &ap)?, "sigma")?;
        let alpha = rho / sigma;
        daxpy(alpha, &p, &mut x, &pol)?;
        daxpy(-alpha, &ap, &mut r, &pol)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(CgTraceStep { rho, beta, sigma, alpha });
        }
        rho_prev = rho;

        z.copy_from_slice(&r);
        op.precondition(&mut z)?;
        rho = op.dot(&r, &z)?;
        measure = mon.ratio(rho.abs());
        if mon.record(measure)? && solution_ok(&x)? {
            return Ok(mon.finish(true, measure, x));
        }
    }
    Ok(mon.finish(false, measure, x))
}

/// Unpreconditioned CG in descent-direction form.
///
/// With gradient `g = K x - b` and direction `w`, each iteration takes the
/// energy-minimizing step `rho = -(g, w) / (Kw, w)`, updates `x += rho w`, `g += rho Kw`, and
/// conjugates `w = g + gamma w` with `gamma = -(g, Kw) / (Kw, w)`. The
/// measure is `||g|| / ||g0||`. `cfg.preconditioner` is ignored.
pub fn solve_cg_classic(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    let plain = SolverConfig { preconditioner: super::Preconditioner::None, ..*cfg };
    let op = Operator::new(a, b, x0, &plain)?;
    let pol = *op.policy();
    let n = op.n();

    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    spmv_into(a, &x, &mut g, &pol)?;
    daxpy(-1.0, b, &mut g, &pol)?;
    let g0 = op.norm(&g);
    let mut mon = Monitor::new("cg-classic", cfg, if g0 == 0.0 { 1.0 } else { g0 });
    if g0 == 0.0 {
        return Ok(mon.finish(true, 0.0, x));
    }

    let mut w = g.clone();
    let mut kw = vec![0.0; n];
    let mut measure = 1.0;
    while mon.iterations() < cfg.max_iterations {
        spmv_into(a, &w, &mut kw, &pol)?;
        let kww = mon.guard(op.dot(&kw, &w)?, "(Kw, w)")?;
        let rho = -op.dot(&g, &w)? / kww;
        daxpy(rho, &w, &mut x, &pol)?;
        daxpy(rho, &kw, &mut g, &pol)?;
        let gamma = -op.dot(&g, &kw)? / kww;
        xpay(&g, gamma, &mut w, &pol)?;
        measure = mon.ratio(op.norm(&g));
        if mon.record(measure)? {
            return Ok(mon.finish(true, measure, x));
        }
    }
    Ok(mon.finish(false, measure, x))
}
