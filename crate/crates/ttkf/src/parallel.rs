//! Execution-mode switch for the data-parallel inner loops.
//!
//! The filter contractions map independently over the `d` tensor-train cores;
//! with the `parallel` feature those maps run on the rayon pool, otherwise
//! they are plain sequential loops. Each unit of work is computed by exactly
//! one thread with the same floating-point schedule, so both modes produce
//! bit-identical results and the toggle is safe to flip for benchmarking.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(cfg!(feature = "parallel"));

/// Enable or disable the rayon path at runtime. Returns the previous setting.
/// Without the `parallel` feature this is a no-op and execution stays
/// sequential.
pub fn set_parallel(enabled: bool) -> bool {
    if cfg!(feature = "parallel") {
        PARALLEL.swap(enabled, Ordering::Relaxed)
    } else {
        false
    }
}

/// Whether core-wise maps currently run on the rayon pool.
pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}

/// Map a fallible `f` over `0..len`, in parallel when enabled.
pub(crate) fn try_map_indexed<U, F>(len: usize, f: F) -> crate::Result<Vec<U>>
where
    U: Send,
    F: Fn(usize) -> crate::Result<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    (0..len).map(f).collect()
}
