//! Order-preserving map over independent work items. Runs on a rayon pool
//! when the `parallel` feature is enabled, sequentially otherwise.

/// Applies `f` to every item and returns results in input order. `jobs`
/// bounds the worker count; 0 means one per core, 1 forces sequential.
pub fn map_ordered<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if jobs != 1 && items.len() > 1 {
        use rayon::prelude::*;
        // nested calls share the pool they already run on
        if rayon::current_thread_index().is_some() {
            return items.par_iter().map(&f).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("failed to start worker pool");
        return pool.install(|| items.par_iter().map(&f).collect());
    }
    let _ = jobs;
    items.iter().map(f).collect()
}

/// Whether this build can run work items concurrently.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
