//! Kernel timing and execution-policy search for SpMV.
//!
//! A kernel is repeated at least `min_repetitions` times and until the
//! accumulated time exceeds `clock_resolution_multiplier` times the clock
//! resolution. The tuner measures every policy of a grid this way, one after
//! another, and keeps the fastest.

use std::cmp::Ordering;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::formats::SparseMatrix;
use crate::kernels::{spmv_into, ExecPolicy, KernelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TuneError {
    #[error("clock unavailable or resolution invalid ({0})")]
    ClockUnavailable(f64),
    #[error("the policy grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimingProtocol {
    pub min_repetitions: usize,
    pub clock_resolution_multiplier: usize,
    pub warmup_repetitions: usize,
    /// Hard stop for kernels the clock cannot see at all.
    pub max_repetitions: usize,
}

impl Default for TimingProtocol {
    fn default() -> Self {
        TimingProtocol {
            min_repetitions: 10,
            clock_resolution_multiplier: 100,
            warmup_repetitions: 2,
            max_repetitions: 1_000_000,
        }
    }
}

/// Monotonic time source in seconds.
pub trait Clock {
    fn now(&mut self) -> f64;
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Smallest non-zero step observed between consecutive clock reads, or
/// 1 µs if the clock never moved.
pub fn probe_clock_resolution(clock: &mut dyn Clock) -> f64 {
    const FALLBACK: f64 = 1e-6;
    let mut best = f64::INFINITY;
    for _ in 0..64 {
        let start = clock.now();
        for _ in 0..10_000 {
            let t = clock.now();
            if t > start {
                best = best.min(t - start);
                break;
            }
        }
    }
    if best.is_finite() && best > 0.0 {
        best
    } else {
        FALLBACK
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Measurement {
    pub reps: usize,
    pub total_time: f64,
    pub mean_time: f64,
    pub stddev_time: f64,
}

/// Times `op` on the system clock.
pub fn time_kernel<F>(op: F, protocol: &TimingProtocol, clock_resolution: f64) -> Result<Measurement, TuneError>
where
    F: FnMut() -> Result<(), KernelError>,
{
    time_kernel_with_clock(op, protocol, clock_resolution, &mut SystemClock::new())
}

pub fn time_kernel_with_clock<F>(
    mut op: F,
    protocol: &TimingProtocol,
    clock_resolution: f64,
    clock: &mut dyn Clock,
) -> Result<Measurement, TuneError>
where
    F: FnMut() -> Result<(), KernelError>,
{
    if !(clock_resolution.is_finite() && clock_resolution > 0.0) {
        return Err(TuneError::ClockUnavailable(clock_resolution));
    }
    for _ in 0..protocol.warmup_repetitions {
        op()?;
    }
    let min_reps = protocol.min_repetitions.max(1);
    let target = protocol.clock_resolution_multiplier.max(1) as f64 * clock_resolution;
    let max_reps = protocol.max_repetitions.max(min_reps);

    let mut samples = Vec::with_capacity(min_reps);
    let mut total = 0.0;
    while samples.len() < min_reps || (total < target && samples.len() < max_reps) {
        let t0 = clock.now();
        op()?;
        let dt = (clock.now() - t0).max(0.0);
        total += dt;
        samples.push(dt);
    }
    let reps = samples.len();
    let mean = total / reps as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / reps as f64;
    Ok(Measurement { reps, total_time: total, mean_time: mean, stddev_time: var.sqrt() })
}

/// One timed kernel under one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub kernel_name: String,
    pub matrix_name: String,
    pub policy: ExecPolicy,
    pub reps: usize,
    pub total_time: f64,
    pub mean_time: f64,
    pub stddev_time: f64,
}

impl BenchRecord {
    pub fn new(kernel_name: &str, matrix_name: &str, policy: ExecPolicy, m: Measurement) -> Self {
        BenchRecord {
            kernel_name: kernel_name.to_string(),
            matrix_name: matrix_name.to_string(),
            policy,
            reps: m.reps,
            total_time: m.total_time,
            mean_time: m.mean_time,
            stddev_time: m.stddev_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub best_policy: ExecPolicy,
    /// One record per grid policy, in grid order.
    pub table: Vec<BenchRecord>,
    /// The (256, 8) reference: taken from the table when the grid contains
    /// it, measured separately otherwise.
    pub default_record: BenchRecord,
    /// `default.mean_time / best.mean_time`.
    pub speedup_vs_default: f64,
}

fn tie_break(a: &BenchRecord, b: &BenchRecord) -> Ordering {
    a.mean_time
        .total_cmp(&b.mean_time)
        .then(a.policy.block_size().cmp(&b.policy.block_size()))
        .then(a.policy.workers_per_row().cmp(&b.policy.workers_per_row()))
        .then(a.policy.grid_strategy().cmp(&b.policy.grid_strategy()))
}

/// Fastest record; ties go to the smaller block size, then fewer lanes per
/// row, then the flat grid.
pub fn select_best(table: &[BenchRecord]) -> Option<&BenchRecord> {
    table.iter().min_by(|a, b| tie_break(a, b))
}

pub fn measure_spmv(
    m: &SparseMatrix,
    matrix_name: &str,
    policy: ExecPolicy,
    protocol: &TimingProtocol,
    clock_resolution: f64,
) -> Result<BenchRecord, TuneError> {
    let x = vec![1.0; m.n_cols()];
    let mut y = vec![0.0; m.n_rows()];
    let meas = time_kernel(|| spmv_into(m, &x, &mut y, &policy), protocol, clock_resolution)?;
    Ok(BenchRecord::new(&format!("spmv_{}", m.format()), matrix_name, policy, meas))
}

/// Measures SpMV under every policy of `grid`, sequentially.
pub fn tune_spmv(
    m: &SparseMatrix,
    matrix_name: &str,
    grid: &[ExecPolicy],
    protocol: &TimingProtocol,
) -> Result<TuneResult, TuneError> {
    if grid.is_empty() {
        return Err(TuneError::EmptyGrid);
    }
    let resolution = probe_clock_resolution(&mut SystemClock::new());
    let table =
        grid.iter().map(|&p| measure_spmv(m, matrix_name, p, protocol, resolution)).collect::<Result<Vec<_>, _>>()?;
    let best = select_best(&table).expect("non-empty table").clone();

    let reference = ExecPolicy::default();
    let default_record = match table.iter().find(|r| r.policy.same_shape(&reference)) {
        Some(r) => r.clone(),
        None => {
            let worker_count = grid[0].worker_count();
            measure_spmv(m, matrix_name, reference.with_worker_count(worker_count), protocol, resolution)?
        }
    };
    let speedup_vs_default = if best.mean_time > 0.0 { default_record.mean_time / best.mean_time } else { 1.0 };
    Ok(TuneResult { best_policy: best.policy, table, default_record, speedup_vs_default })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::CsrMatrix;
    use crate::kernels::GridStrategy;
    use std::cell::Cell;
    use std::rc::Rc;

    /// Advances only when the kernel under test runs.
    struct FakeClock(Rc<Cell<f64>>);

    impl Clock for FakeClock {
        fn now(&mut self) -> f64 {
            self.0.get()
        }
    }

    fn fake_run(op_cost: f64, resolution: f64, protocol: &TimingProtocol) -> Measurement {
        let t = Rc::new(Cell::new(0.0));
        let t2 = t.clone();
        let op = move || {
            t2.set(t2.get() + op_cost);
            Ok(())
        };
        time_kernel_with_clock(op, protocol, resolution, &mut FakeClock(t)).unwrap()
    }

    #[test]
    fn slow_kernel_needs_only_minimum_reps() {
        let m = fake_run(1e-3, 1e-6, &TimingProtocol::default());
        assert_eq!(m.reps, 10);
        assert!((m.total_time - 1e-2).abs() < 1e-12);
        assert!((m.mean_time - m.total_time / m.reps as f64).abs() < 1e-18);
    }

    #[test]
    fn fast_kernel_runs_until_hundred_resolutions() {
        let m = fake_run(1e-6, 1e-6, &TimingProtocol::default());
        assert!(m.reps >= 100, "reps = {}", m.reps);
        assert!(m.total_time >= 100.0 * 1e-6 * (1.0 - 1e-9));
        assert!(m.reps <= 101);
    }

    #[test]
    fn zero_work_kernel_terminates() {
        let p = TimingProtocol { max_repetitions: 500, ..TimingProtocol::default() };
        let m = fake_run(0.0, 1e-6, &p);
        assert_eq!(m.reps, 500);
        assert_eq!(m.mean_time, 0.0);
        assert_eq!(m.stddev_time, 0.0);
    }

    #[test]
    fn warmup_is_excluded() {
        let calls = Cell::new(0usize);
        let t = Rc::new(Cell::new(0.0));
        let t2 = t.clone();
        let op = || {
            calls.set(calls.get() + 1);
            t2.set(t2.get() + 1.0);
            Ok(())
        };
        let m = time_kernel_with_clock(op, &TimingProtocol::default(), 1e-6, &mut FakeClock(t)).unwrap();
        assert_eq!(m.reps, 10);
        assert_eq!(calls.get(), 12);
    }

    #[test]
    fn more_min_reps_never_means_fewer_reps() {
        let mut last = 0;
        for min in 1..40 {
            let p = TimingProtocol { min_repetitions: min, ..TimingProtocol::default() };
            let r = fake_run(3e-6, 1e-6, &p).reps;
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn invalid_resolution_is_rejected() {
        let err = time_kernel(|| Ok(()), &TimingProtocol::default(), 0.0).unwrap_err();
        assert!(matches!(err, TuneError::ClockUnavailable(_)));
    }

    #[test]
    fn real_clock_probe_is_positive() {
        let r = probe_clock_resolution(&mut SystemClock::new());
        assert!(r > 0.0 && r < 1e-2);
    }

    fn rec(bs: usize, tw: usize, s: GridStrategy, mean: f64) -> BenchRecord {
        let p = ExecPolicy::new(bs, tw, s).unwrap();
        BenchRecord::new(
            "spmv_csr",
            "m",
            p,
            Measurement { reps: 10, total_time: mean * 10.0, mean_time: mean, stddev_time: 0.0 },
        )
    }

    #[test]
    fn selection_tie_break() {
        let table = vec![
            rec(256, 8, GridStrategy::Square, 1.0),
            rec(256, 8, GridStrategy::FlatX, 1.0),
            rec(64, 16, GridStrategy::FlatX, 1.0),
            rec(64, 8, GridStrategy::Square, 1.0),
            rec(1024, 1, GridStrategy::FlatX, 2.0),
        ];
        let best = select_best(&table).unwrap();
        assert_eq!(best.policy, ExecPolicy::new(64, 8, GridStrategy::Square).unwrap());
        let mut rev = table.clone();
        rev.reverse();
        assert_eq!(select_best(&rev).unwrap().policy, best.policy);
        let faster = vec![rec(1024, 32, GridStrategy::Square, 0.5), rec(32, 1, GridStrategy::FlatX, 0.6)];
        assert_eq!(select_best(&faster).unwrap().policy.block_size(), 1024);
    }

    #[test]
    fn singleton_grid() {
        let m = SparseMatrix::Csr(CsrMatrix::identity(64));
        let p = ExecPolicy::new(128, 2, GridStrategy::FlatX).unwrap();
        let quick = TimingProtocol { min_repetitions: 2, clock_resolution_multiplier: 1, ..Default::default() };
        let res = tune_spmv(&m, "id64", &[p], &quick).unwrap();
        assert_eq!(res.best_policy, p);
        assert_eq!(res.table.len(), 1);
        assert!(res.default_record.policy.same_shape(&ExecPolicy::default()));
        assert!(res.speedup_vs_default > 0.0);
        assert_eq!(tune_spmv(&m, "id64", &[], &quick).unwrap_err(), TuneError::EmptyGrid);
    }
}
