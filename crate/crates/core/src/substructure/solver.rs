use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::formats::SparseMatrix;
use crate::kernels::{daxpy, dot_weighted, spmv_into, xpay, ExecPolicy, KernelError};
use crate::krylov::{SolveReport, SolverConfig, SolverError, BREAKDOWN_THRESHOLD};

use super::exchange::{endpoints, Endpoint};
use super::{
    partition_matrix, partition_stats, LocalSystem, PartitionSpec, SubdomainStats, SubstructureError,
    DEFAULT_EXCHANGE_TIMEOUT,
};

const METHOD: &str = "cg-substructured";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParallelSolveReport {
    pub report: SolveReport,
    pub n_subdomains: usize,
    /// Wall time of each subdomain worker, seconds.
    pub subdomain_times: Vec<f64>,
    pub subdomains: Vec<SubdomainStats>,
}

struct CancelOnDrop {
    flag: Arc<AtomicBool>,
    armed: bool,
}

impl Drop for CancelOnDrop {
    fn drop(&mut self) {
        if self.armed {
            self.flag.store(true, Ordering::SeqCst);
        }
    }
}

/// Runs `f` on one thread per subdomain. If any worker fails or panics the
/// others are cancelled; the first root-cause error is returned.
fn run_group<T, F>(locals: &[LocalSystem], timeout: Duration, f: F) -> Result<Vec<T>, SubstructureError>
where
    T: Send,
    F: Fn(&LocalSystem, &mut Endpoint) -> Result<T, SubstructureError> + Sync,
{
    let eps = endpoints(locals.len(), timeout);
    let f = &f;
    let results: Vec<Result<T, SubstructureError>> = thread::scope(|s| {
        let handles: Vec<_> = locals
            .iter()
            .zip(eps)
            .map(|(local, mut ep)| {
                s.spawn(move || {
                    let mut guard = CancelOnDrop { flag: ep.cancel_flag(), armed: true };
                    let r = f(local, &mut ep);
                    guard.armed = r.is_err();
                    r
                })
            })
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(i, h)| h.join().unwrap_or(Err(SubstructureError::WorkerPanic(i))))
            .collect()
    });
    let mut out = Vec::with_capacity(results.len());
    let mut cancelled = None;
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(SubstructureError::Cancelled(i)) => {
                cancelled.get_or_insert(SubstructureError::Cancelled(i));
            }
            Err(e) => return Err(e),
        }
    }
    match cancelled {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn check_locals(locals: &[LocalSystem], vectors: &[Vec<f64>], op: &'static str) -> Result<(), SubstructureError> {
    if vectors.len() != locals.len() {
        return Err(KernelError::DimensionMismatch { op, expected: locals.len(), found: vectors.len() }.into());
    }
    for (l, v) in locals.iter().zip(vectors) {
        if v.len() != l.dof() {
            return Err(KernelError::DimensionMismatch { op, expected: l.dof(), found: v.len() }.into());
        }
    }
    Ok(())
}

/// Local products `K_i x_i` followed by interface assembly. `x_locals`
/// must agree on shared equations.
pub fn local_spmv_assemble(
    locals: &[LocalSystem],
    x_locals: &[Vec<f64>],
    policy: &ExecPolicy,
) -> Result<Vec<Vec<f64>>, SubstructureError> {
    check_locals(locals, x_locals, "local spmv")?;
    run_group(locals, DEFAULT_EXCHANGE_TIMEOUT, |local, ep| {
        let k = SparseMatrix::Csr(local.k_local().clone());
        let mut y = vec![0.0; local.dof()];
        spmv_into(&k, &x_locals[local.id()], &mut y, policy)?;
        ep.assemble(local, &mut y)?;
        Ok(y)
    })
}

/// Weighted global dot product; every subdomain receives the same value.
pub fn distributed_dot(
    locals: &[LocalSystem],
    x_locals: &[Vec<f64>],
    y_locals: &[Vec<f64>],
    policy: &ExecPolicy,
) -> Result<Vec<f64>, SubstructureError> {
    check_locals(locals, x_locals, "distributed dot")?;
    check_locals(locals, y_locals, "distributed dot")?;
    run_group(locals, DEFAULT_EXCHANGE_TIMEOUT, |local, ep| {
        let id = local.id();
        let partial = dot_weighted(local.weights(), &x_locals[id], &y_locals[id], policy)?;
        Ok(ep.allreduce(&[partial])?[0])
    })
}

/// [`solve_cg_substructured_with`] using [`DEFAULT_EXCHANGE_TIMEOUT`].
pub fn solve_cg_substructured(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    spec: &PartitionSpec,
    cfg: &SolverConfig,
) -> Result<ParallelSolveReport, SubstructureError> {
    solve_cg_substructured_with(a, b, x0, spec, cfg, DEFAULT_EXCHANGE_TIMEOUT)
}

struct WorkerResult {
    x: Vec<f64>,
    history: Vec<f64>,
    converged: bool,
    final_measure: f64,
    elapsed: f64,
}

/// Descent-form CG (see [`crate::krylov::solve_cg_classic`]) with one
/// worker per subdomain: local SpMV plus interface assembly, and weighted
/// dot products all-reduced across subdomains.
pub fn solve_cg_substructured_with(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    spec: &PartitionSpec,
    cfg: &SolverConfig,
    timeout: Duration,
) -> Result<ParallelSolveReport, SubstructureError> {
    cfg.validate()?;
    let started = Instant::now();
    let n = a.n_rows();
    if x0.len() != n {
        return Err(KernelError::DimensionMismatch { op: "initial guess", expected: n, found: x0.len() }.into());
    }
    let (partition, locals) = partition_matrix(&a.to_csr(), b, spec)?;
    let x0_locals = partition.scatter(x0);

    let results = run_group(&locals, timeout, |local, ep| {
        let t0 = Instant::now();
        let pol = cfg.policy;
        let k = SparseMatrix::Csr(local.k_local().clone());
        let w8 = local.weights();
        let nl = local.dof();
        let mut x = x0_locals[local.id()].clone();

        let mut g = vec![0.0; nl];
        spmv_into(&k, &x, &mut g, &pol)?;
        ep.assemble(local, &mut g)?;
        daxpy(-1.0, local.b_local(), &mut g, &pol)?;
        let g0 = ep.allreduce(&[dot_weighted(w8, &g, &g, &pol)?])?[0].sqrt();
        let mut history = Vec::new();
        let done = |x, history, converged, final_measure| WorkerResult {
            x,
            history,
            converged,
            final_measure,
            elapsed: t0.elapsed().as_secs_f64(),
        };
        if !g0.is_finite() {
            return Err(SolverError::NonFinite { method: METHOD, iteration: 0 }.into());
        }
        if g0 == 0.0 {
            return Ok(done(x, history, true, 0.0));
        }

        let mut w = g.clone();
        let mut kw = vec![0.0; nl];
        let mut measure = 1.0;
        while history.len() < cfg.max_iterations {
            let iteration = history.len() + 1;
            spmv_into(&k, &w, &mut kw, &pol)?;
            ep.assemble(local, &mut kw)?;
            let d = ep.allreduce(&[dot_weighted(w8, &kw, &w, &pol)?, dot_weighted(w8, &g, &w, &pol)?])?;
            let (kww, gw) = (d[0], d[1]);
            if !kww.is_finite() {
                return Err(SolverError::NonFinite { method: METHOD, iteration }.into());
            }
            if kww.abs() < BREAKDOWN_THRESHOLD {
                return Err(SolverError::Breakdown { method: METHOD, quantity: "(Kw, w)", iteration }.into());
            }
            let rho = -gw / kww;
            daxpy(rho, &w, &mut x, &pol)?;
            daxpy(rho, &kw, &mut g, &pol)?;
            let d = ep.allreduce(&[dot_weighted(w8, &g, &kw, &pol)?, dot_weighted(w8, &g, &g, &pol)?])?;
            let gamma = -d[0] / kww;
            xpay(&g, gamma, &mut w, &pol)?;
            measure = d[1].sqrt() / g0;
            if !measure.is_finite() {
                return Err(SolverError::NonFinite { method: METHOD, iteration }.into());
            }
            history.push(measure);
            if measure <= cfg.tolerance {
                return Ok(done(x, history, true, measure));
            }
        }
        Ok(done(x, history, false, measure))
    })?;

    let x_locals: Vec<Vec<f64>> = results.iter().map(|r| r.x.clone()).collect();
    let root = &results[0];
    let report = SolveReport {
        method: METHOD.to_string(),
        converged: root.converged,
        iterations: root.history.len(),
        final_residual_measure: root.final_measure,
        residual_history: root.history.clone(),
        wall_time: started.elapsed().as_secs_f64(),
        solution: partition.gather(&x_locals),
    };
    Ok(ParallelSolveReport {
        report,
        n_subdomains: partition.n_subdomains(),
        subdomain_times: results.iter().map(|r| r.elapsed).collect(),
        subdomains: partition_stats(&locals),
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::kernels::{dot, spmv};
    use crate::krylov::{solve_cg_classic, Preconditioner};

    fn cfg() -> SolverConfig {
        SolverConfig { preconditioner: Preconditioner::None, ..Default::default() }
    }

    #[test]
    fn two_subdomain_block_system_assembles() {
        use crate::formats::CooMatrix;
        let t = vec![(0, 0, 4.0), (0, 2, -1.0), (1, 1, 5.0), (1, 2, -2.0), (2, 0, -1.0), (2, 1, -2.0), (2, 2, 6.0)];
        let a = CooMatrix::from_triples(3, 3, t).unwrap().to_csr();
        let spec = PartitionSpec::OwnerSets(vec![vec![0], vec![1], vec![0, 1]]);
        let (part, locals) = partition_matrix(&a, &[0.0; 3], &spec).unwrap();
        let y = local_spmv_assemble(&locals, &part.scatter(&[1.0; 3]), &ExecPolicy::default()).unwrap();
        assert_eq!(part.gather(&y), vec![3.0, 3.0, 3.0]);
        assert_eq!(y[0], vec![3.0, 3.0]);
        assert_eq!(y[1], vec![3.0, 3.0]);
    }

    #[test]
    fn poisson_assembly_matches_global() {
        let a = poisson2d(16);
        let x: Vec<f64> = (0..256).map(|i| ((i * 37) % 101) as f64 / 10.0 - 5.0).collect();
        let pol = ExecPolicy::default();
        let global = spmv(&SparseMatrix::Csr(a.clone()), &x, &pol).unwrap();
        let (part, locals) = partition_matrix(&a, &[0.0; 256], &PartitionSpec::Parts(4)).unwrap();
        let y = local_spmv_assemble(&locals, &part.scatter(&x), &pol).unwrap();
        let assembled = part.gather(&y);
        for (u, v) in assembled.iter().zip(&global) {
            assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn isolated_subdomains_need_no_messages() {
        let a = crate::formats::CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0]);
        let (part, locals) = partition_matrix(&a, &[0.0; 4], &PartitionSpec::Parts(2)).unwrap();
        assert!(locals.iter().all(|l| l.interfaces().is_empty()));
        let y = local_spmv_assemble(&locals, &part.scatter(&[1.0; 4]), &ExecPolicy::default()).unwrap();
        assert_eq!(y, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn distributed_dot_of_ones_counts_equations() {
        let a = laplace1d(100);
        for parts in [1, 2, 3, 7, 8] {
            let (part, locals) = partition_matrix(&a, &[0.0; 100], &PartitionSpec::Parts(parts)).unwrap();
            let ones = part.scatter(&[1.0; 100]);
            let d = distributed_dot(&locals, &ones, &ones, &ExecPolicy::default()).unwrap();
            assert!(d.iter().all(|v| v.to_bits() == d[0].to_bits()));
            assert!((d[0] - 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_subdomain_dot_is_kernel_dot() {
        let a = laplace1d(300);
        let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..300).map(|i| (i as f64 * 0.11).cos()).collect();
        let pol = ExecPolicy::new(64, 1, Default::default()).unwrap();
        let (part, locals) = partition_matrix(&a, &[0.0; 300], &PartitionSpec::Parts(1)).unwrap();
        let d = distributed_dot(&locals, &part.scatter(&x), &part.scatter(&y), &pol).unwrap();
        assert_eq!(d[0].to_bits(), dot(&x, &y, &pol).unwrap().to_bits());
    }

    #[test]
    fn one_part_reproduces_classic_cg() {
        let a = SparseMatrix::Csr(poisson2d(10));
        let b = vec![1.0; 100];
        let seq = solve_cg_classic(&a, &b, &[0.0; 100], &cfg()).unwrap();
        let par = solve_cg_substructured(&a, &b, &[0.0; 100], &PartitionSpec::Parts(1), &cfg()).unwrap();
        assert_eq!(par.report.iterations, seq.iterations);
        assert_eq!(par.report.residual_history, seq.residual_history);
        assert_eq!(par.report.solution, seq.solution);
    }

    #[test]
    fn parts_track_classic_cg() {
        let a = SparseMatrix::Csr(poisson2d(12));
        let b = vec![1.0; 144];
        let seq = solve_cg_classic(&a, &b, &[0.0; 144], &cfg()).unwrap();
        for parts in [2, 3, 4, 8] {
            let par = solve_cg_substructured(&a, &b, &[0.0; 144], &PartitionSpec::Parts(parts), &cfg()).unwrap();
            assert_eq!(par.report.iterations, seq.iterations, "{parts} parts");
            for (u, v) in par.report.residual_history.iter().zip(&seq.residual_history) {
                assert!((u - v).abs() <= 1e-10, "{parts} parts: {u} vs {v}");
            }
            for (u, v) in par.report.solution.iter().zip(&seq.solution) {
                assert!((u - v).abs() <= 1e-8);
            }
            assert_eq!(par.subdomain_times.len(), parts);
        }
    }

    #[test]
    fn star_and_fully_connected_neighbour_graphs() {
        // dense coupling row 0 touches every subdomain
        use crate::formats::CooMatrix;
        let n = 24;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 30.0));
            if i > 0 {
                t.push((0, i, -1.0));
                t.push((i, 0, -1.0));
            }
        }
        let star = CooMatrix::from_triples(n, n, t).unwrap().to_csr();
        let full = {
            let mut t = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    t.push((i, j, if i == j { 50.0 } else { -1.0 }));
                }
            }
            CooMatrix::from_triples(n, n, t).unwrap().to_csr()
        };
        for a in [star, full] {
            let a = SparseMatrix::Csr(a);
            let seq = solve_cg_classic(&a, &[1.0; 24], &[0.0; 24], &cfg()).unwrap();
            let spec = PartitionSpec::Assignment((0..n).map(|i| i % 6).collect());
            let par = solve_cg_substructured_with(&a, &[1.0; 24], &[0.0; 24], &spec, &cfg(), Duration::from_secs(10))
                .unwrap();
            assert_eq!(par.report.iterations, seq.iterations);
        }
    }

    #[test]
    fn breakdown_is_reported_once_for_the_group() {
        // K w = 0 on the first iteration
        let a = SparseMatrix::Csr(crate::formats::CsrMatrix::from_diagonal(&[0.0, 0.0, 0.0, 0.0]));
        let err = solve_cg_substructured(&a, &[1.0; 4], &[0.0; 4], &PartitionSpec::Parts(2), &cfg()).unwrap_err();
        assert!(matches!(err, SubstructureError::Solver(SolverError::Breakdown { iteration: 1, .. })));
    }
}
