use rayon::prelude::*;

use crate::error::Result;

/// Runs `f(path_index)` for `0..n` on the current rayon pool and returns the
/// results in path-index order, so any reduction over them is independent of
/// the worker count. The first error in index order wins.
pub fn map_paths<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let raw: Vec<Result<T>> = (0..n as u64).into_par_iter().map(f).collect();
    raw.into_iter().collect()
}
