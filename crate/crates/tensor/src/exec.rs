//! Data-parallel dispatch for the numeric kernels.
//!
//! With the `parallel` feature (default) the helpers here fan work out over the
//! rayon pool. Without it, or after [`set_parallel`]`(false)`, everything runs
//! on the calling thread. Every helper produces identical results in both modes:
//! work is split into fixed chunks and reductions are combined in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
#[cfg(feature = "parallel")]
use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Chunks below this many scalar operations are not worth a task.
const MIN_PARALLEL_WORK: usize = 1 << 14;

/// Toggle the rayon path at runtime. A no-op without the `parallel` feature.
pub fn set_parallel(enabled: bool) {
    #[cfg(feature = "parallel")]
    PARALLEL.store(enabled, Ordering::Relaxed);
    #[cfg(not(feature = "parallel"))]
    let _ = enabled;
}

/// Whether kernels currently dispatch to rayon.
pub fn is_parallel() -> bool {
    #[cfg(feature = "parallel")]
    {
        PARALLEL.load(Ordering::Relaxed)
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

/// Run `f(chunk_index, chunk)` over `data.chunks_mut(chunk)`.
///
/// `work_per_chunk` is a rough scalar-op estimate used to skip the pool for
/// tiny jobs.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, work_per_chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0, "chunk size must be positive");
    #[cfg(feature = "parallel")]
    {
        let n_chunks = data.len().div_ceil(chunk);
        if is_parallel() && n_chunks > 1 && work_per_chunk * n_chunks >= MIN_PARALLEL_WORK {
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    let _ = work_per_chunk;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Evaluate `f(i)` for `i in 0..n`, collecting results in index order.
pub fn map_range<R, F>(n: usize, work_per_item: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && n > 1 && work_per_item * n >= MIN_PARALLEL_WORK {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = work_per_item;
    (0..n).map(f).collect()
}

/// Map over a slice of items, preserving order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && items.len() > 1 {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}
