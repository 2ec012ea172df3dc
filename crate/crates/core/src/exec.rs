//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) work is spread over the current rayon
//! pool; a pool of one thread, or a build without the feature, runs the plain
//! sequential loop. Every caller derives its randomness from an index-keyed
//! stream, so results never depend on which path ran.

/// Evaluate `f(0..len)` and collect the results in index order.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if rayon::current_num_threads() > 1 && len > 1 {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    (0..len).map(f).collect()
}

/// Like [`map_indexed`] but short-circuits on the first error (lowest index wins
/// in the sequential path; some error is returned in the parallel path).
pub fn try_map_indexed<T, E, F>(len: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if rayon::current_num_threads() > 1 && len > 1 {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    (0..len).map(f).collect()
}

/// Run `op` with at most `workers` threads. `workers == 0` keeps the ambient pool.
pub fn with_workers<R, OP>(workers: usize, op: OP) -> R
where
    R: Send,
    OP: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(op);
            }
        }
    }
    let _ = workers;
    op()
}

/// Whether parallel execution is compiled in.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
