//! Thin dispatch layer between rayon and plain sequential loops.
//!
//! Every data-parallel loop in the crate goes through one of these helpers,
//! so disabling the `parallel` feature swaps in the sequential fallback
//! without touching kernel code. All call sites hand out independent chunks
//! (typically matrix rows) and keep the per-element accumulation order inside
//! the chunk, so results are bitwise identical in both modes and for any
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to each `size`-sized chunk of `data` with its chunk index.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], size: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if data.is_empty() {
        return;
    }
    debug_assert!(size > 0);
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(size).enumerate().for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(size).enumerate().for_each(|(i, c)| f(i, c));
}

/// Like [`for_each_chunk_mut`] but sums a per-chunk `u64` (used for exact
/// operation counting; integer addition makes the sum order-independent).
pub(crate) fn sum_over_chunks_mut<T, F>(data: &mut [T], size: usize, f: F) -> u64
where
    T: Send,
    F: Fn(usize, &mut [T]) -> u64 + Sync + Send,
{
    if data.is_empty() {
        return 0;
    }
    debug_assert!(size > 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(size).enumerate().map(|(i, c)| f(i, c)).sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(size).enumerate().map(|(i, c)| f(i, c)).sum()
    }
}

/// Populate `out` by mapping each index through `f`.
pub(crate) fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_iter_mut().enumerate().for_each(|(i, slot)| *slot = f(i));
    #[cfg(not(feature = "parallel"))]
    out.iter_mut().enumerate().for_each(|(i, slot)| *slot = f(i));
}
