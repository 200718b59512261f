//! Data-parallel helpers.
//!
//! Work is always split into the same deterministic units, so the parallel
//! and sequential paths return bit-identical results. With the `parallel`
//! feature off, [`Exec::Parallel`] quietly runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Maps `f` over a slice on a dedicated pool of `workers` threads,
/// preserving order. One worker, or no `parallel` feature, runs inline.
pub fn map_slice_workers<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(|| items.par_iter().map(f).collect());
        }
    }
    let _ = workers;
    items.iter().map(f).collect()
}

/// Splits `total` into `chunk`-sized pieces; the last one may be shorter.
pub fn chunk_sizes(total: usize, chunk: usize) -> Vec<usize> {
    assert!(chunk > 0);
    let mut out = vec![chunk; total / chunk];
    if !total.is_multiple_of(chunk) {
        out.push(total % chunk);
    }
    out
}
