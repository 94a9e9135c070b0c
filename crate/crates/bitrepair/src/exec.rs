//! Order-preserving map helpers shared by every record-parallel stage.
//!
//! With the `parallel` feature (the default) `map_ordered` fans out over the
//! rayon pool; without it the same call runs sequentially. Output order always
//! equals input order, so downstream bytes are identical either way. Floating
//! point aggregation is kept out of here on purpose: callers sum in input
//! order after the map.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over a slice, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map over a slice, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Always-sequential variant, kept public so benchmarks can compare both paths.
pub fn map_ordered_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Run `f` inside a thread pool of `threads` workers (0 = library default).
///
/// Built without the `parallel` feature this just calls `f`.
#[cfg(feature = "parallel")]
pub fn with_thread_count<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("failed to build thread pool");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_thread_count<R>(_threads: usize, f: impl FnOnce() -> R) -> R {
    f()
}
