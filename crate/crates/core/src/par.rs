//! Data-parallel helpers for the tensor kernels.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool
//! unless [`ExecMode::Sequential`] has been selected at runtime. Every helper
//! hands each output chunk to exactly one closure invocation and reductions
//! stay inside that invocation, so both modes produce bitwise-identical
//! results.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Parallel,
    Sequential,
}

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Select the execution mode for all subsequent kernel calls.
///
/// Without the `parallel` feature this is a no-op and kernels always run
/// sequentially.
pub fn set_exec_mode(mode: ExecMode) {
    SEQUENTIAL.store(mode == ExecMode::Sequential, Ordering::SeqCst);
}

pub fn exec_mode() -> ExecMode {
    if cfg!(feature = "parallel") && !SEQUENTIAL.load(Ordering::SeqCst) {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

/// Run `f(index, chunk)` over consecutive `chunk_len`-sized chunks of `data`.
pub(crate) fn for_each_chunk<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk_len == 0 || data.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec_mode() == ExecMode::Parallel {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Evaluate `f` for every index in `0..n`, preserving order.
pub(crate) fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec_mode() == ExecMode::Parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}
