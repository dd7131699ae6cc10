//! Thin switch between rayon and plain iteration.
//!
//! Batch encoding, per-example forward/backward and sweep cells are all
//! embarrassingly parallel. Each helper here maps in input order and collects
//! in input order, so results do not depend on scheduling; the `parallel`
//! feature only changes who does the work.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over a slice, preserving input order in the output.
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Map `f` over index ranges `[start, end)` chunked by `chunk`, in order.
///
/// The chunk boundaries are a pure function of `len` and `chunk`, never of
/// the worker count, which keeps chunked reductions deterministic.
pub fn map_chunks<R, F>(len: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, usize) -> R + Sync + Send,
{
    assert!(chunk > 0);
    let bounds: Vec<(usize, usize)> = (0..len)
        .step_by(chunk)
        .map(|start| (start, usize::min(start + chunk, len)))
        .collect();
    #[cfg(feature = "parallel")]
    {
        bounds.par_iter().map(|&(s, e)| f(s, e)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        bounds.iter().map(|&(s, e)| f(s, e)).collect()
    }
}

/// Size the global worker pool. A no-op without the `parallel` feature or if
/// the pool is already running.
pub fn configure_threads(jobs: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
    }
}
