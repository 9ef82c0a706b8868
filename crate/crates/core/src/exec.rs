//! Data-parallel fan-out with a sequential fallback.
//!
//! All batch work in the crate (objective evaluations inside one optimizer
//! iteration, benchmark rollouts, per-task generation) goes through
//! [`map_indexed`]. With the `parallel` feature (default) it fans out on rayon;
//! without it the same call runs sequentially. Work items are independent and
//! seeded by index, and results are collected in index order, so both paths
//! return bit-identical output. [`map_indexed_seq`] is always sequential and
//! exists so benches can compare the two on one build.

/// Map `f` over `0..n`, preserving index order in the result.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, preserving index order in the result.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential reference path, available regardless of features.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Run `f` inside a rayon pool with `workers` threads (0 = library default).
/// Without the `parallel` feature the worker count is ignored.
#[cfg(feature = "parallel")]
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("rayon pool");
    pool.install(f)
}

/// Run `f` inside a rayon pool with `workers` threads (0 = library default).
/// Without the `parallel` feature the worker count is ignored.
#[cfg(not(feature = "parallel"))]
pub fn with_workers<T: Send>(_workers: usize, f: impl FnOnce() -> T + Send) -> T {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let f = |i: usize| {
            // Non-trivial float work: summation order inside one item is fixed.
            let mut acc = 0.0f64;
            for k in 0..100 {
                acc += ((i * 31 + k) as f64).sqrt().sin();
            }
            acc
        };
        let par = map_indexed(257, f);
        let seq = map_indexed_seq(257, f);
        assert_eq!(par.len(), seq.len());
        for (a, b) in par.iter().zip(&seq) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
