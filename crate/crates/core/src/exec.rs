//! Sharded execution of embarrassingly parallel inner loops.
//!
//! Sampling suites and sweeps are split into shards with per-shard seeds, so
//! the merged result is identical whichever way the shards are scheduled.
//! With the `parallel` feature the shards run on the rayon pool; without it
//! (or with [`ExecMode::Sequential`]) they run in order on one thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Runs `map` over shard indices `0..shards` and folds the results with
/// `merge`. `merge` must be associative and commutative.
pub fn run_shards<T, F, M>(mode: ExecMode, shards: usize, identity: T, map: F, merge: M) -> T
where
    T: Send + Sync + Clone,
    F: Fn(usize) -> T + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..shards).map(map).fold(identity, merge),
        ExecMode::Parallel => run_parallel(shards, identity, map, merge),
    }
}

#[cfg(feature = "parallel")]
fn run_parallel<T, F, M>(shards: usize, identity: T, map: F, merge: M) -> T
where
    T: Send + Sync + Clone,
    F: Fn(usize) -> T + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    (0..shards)
        .into_par_iter()
        .map(map)
        .reduce(|| identity.clone(), &merge)
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<T, F, M>(shards: usize, identity: T, map: F, merge: M) -> T
where
    T: Send + Sync + Clone,
    F: Fn(usize) -> T + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    (0..shards).map(map).fold(identity, merge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let map = |i: usize| (i as f64).sin();
        let merge = |a: f64, b: f64| a.min(b);
        let seq = run_shards(ExecMode::Sequential, 64, f64::INFINITY, map, merge);
        let par = run_shards(ExecMode::Parallel, 64, f64::INFINITY, map, merge);
        assert_eq!(seq, par);
    }
}
