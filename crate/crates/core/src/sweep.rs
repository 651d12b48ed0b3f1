//! Parallel, order-preserving grid sweeps.
//!
//! Results come back indexed by grid position, so every reduction done on
//! them afterwards is independent of how rayon split the work.

use rayon::prelude::*;

use crate::model::grid::{GridPoint, GridSpec};

pub fn map_grid<T, F>(g: &GridSpec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(GridPoint) -> T + Sync + Send,
{
    (0..g.total_points())
        .into_par_iter()
        .map(|i| f(g.point(i)))
        .collect()
}

pub fn map_indices<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Run `op` on a dedicated pool with `threads` workers (0 = rayon default).
pub fn with_threads<R: Send>(threads: usize, op: impl FnOnce() -> R + Send) -> R {
    if threads == 0 {
        return op();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}
