//! Worker pools and the two chunked launch shapes every kernel uses.
//!
//! Work is split into fixed chunks whose boundaries depend only on the
//! policy, never on the number of workers, so a kernel produces the same
//! bits whether it runs inline or on a pool.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rayon::ThreadPool;

use super::ExecPolicy;

/// Below this many scalar operations a kernel runs inline.
const PARALLEL_MIN_WORK: usize = 1 << 14;

fn pool(workers: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS.get_or_init(Default::default).lock().expect("pool registry poisoned");
    pools
        .entry(workers)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(move |i| format!("sparsekit-{workers}-{i}"))
                    .build()
                    .expect("failed to build worker pool"),
            )
        })
        .clone()
}

fn go_parallel(policy: &ExecPolicy, work: usize) -> bool {
    policy.worker_count() > 1 && work >= PARALLEL_MIN_WORK
}

/// Runs `f(chunk_index, chunk)` over consecutive `chunk`-sized pieces of
/// `out`.
pub(crate) fn for_each_chunk_mut<F>(out: &mut [f64], chunk: usize, policy: &ExecPolicy, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunk = chunk.max(1);
    if go_parallel(policy, work) {
        pool(policy.worker_count()).install(|| {
            out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        });
    } else {
        out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Evaluates `f` on each `chunk`-sized index range of `0..len`, returning
/// the results in range order.
pub(crate) fn map_chunks<T, F>(len: usize, chunk: usize, policy: &ExecPolicy, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = len.div_ceil(chunk);
    let range = |i: usize| i * chunk..((i + 1) * chunk).min(len);
    if go_parallel(policy, len) {
        pool(policy.worker_count()).install(|| (0..n_chunks).into_par_iter().map(|i| f(range(i))).collect())
    } else {
        (0..n_chunks).map(|i| f(range(i))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_everything_in_order() {
        let p = ExecPolicy::default().with_worker_count(4);
        let ranges = map_chunks(100_000, 256, &p, |r| r);
        assert_eq!(ranges.len(), 391);
        assert_eq!(ranges[0], 0..256);
        assert_eq!(ranges.last().unwrap().end, 100_000);
        assert!(ranges.windows(2).all(|w| w[0].end == w[1].start));
    }

    #[test]
    fn parallel_and_inline_agree() {
        let mut a = vec![0.0; 50_000];
        let mut b = a.clone();
        let fill = |i: usize, c: &mut [f64]| c.iter_mut().enumerate().for_each(|(k, v)| *v = (i * 1000 + k) as f64);
        for_each_chunk_mut(&mut a, 100, &ExecPolicy::default().with_worker_count(1), 50_000, fill);
        for_each_chunk_mut(&mut b, 100, &ExecPolicy::default().with_worker_count(3), 50_000, fill);
        assert_eq!(a, b);
    }
}
