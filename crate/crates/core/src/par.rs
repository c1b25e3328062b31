//! Ordered parallel map over work items.

/// Applies `f` to `0..count` on `workers` threads and returns results in index
/// order. Without the `parallel` feature, or with one worker, runs serially.
pub fn map_indexed<T, F>(count: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers > 1 && count > 1 {
            use rayon::prelude::*;
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(|| (0..count).into_par_iter().map(&f).collect());
            }
        }
    }
    let _ = workers;
    (0..count).map(f).collect()
}

/// Default worker count: the machine's available parallelism.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
