//! Data-parallel map over independent work items (scenes, box pairs,
//! batch entries), with a sequential fallback when the `parallel` feature
//! is disabled. Output order always matches input order, so results are
//! identical regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over the items, in parallel when the feature is enabled.
pub fn map_items<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sequential map, always available for baseline comparison.
pub fn map_items_seq<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

/// Run `f` inside a rayon pool of `threads` workers (0 = rayon default).
/// Without the `parallel` feature the closure just runs on this thread.
#[cfg(feature = "parallel")]
pub fn with_thread_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    if threads == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool construction")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_thread_pool<R>(_threads: usize, f: impl FnOnce() -> R) -> R {
    f()
}
