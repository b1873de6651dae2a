//! Data-parallel helpers with a sequential fallback.
//!
//! Work is split into fixed-size index chunks and the per-chunk results are
//! returned in chunk order, so floating-point reductions folded by the
//! caller do not depend on thread scheduling. Parallel and sequential runs
//! therefore produce bit-identical results.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Items per work chunk.
pub const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, otherwise
    /// behaves like `Sequential`.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

fn chunk_ranges(len: usize, chunk: usize) -> impl Iterator<Item = Range<usize>> + Clone {
    let chunk = chunk.max(1);
    (0..len.div_ceil(chunk)).map(move |c| c * chunk..((c + 1) * chunk).min(len))
}

/// Apply `f` to consecutive index ranges covering `0..len`, returning the
/// results in range order.
pub fn map_chunks<T, F>(exec: Execution, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    map_chunks_sized(exec, len, CHUNK, f)
}

pub fn map_chunks_sized<T, F>(exec: Execution, len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && len > chunk {
        use rayon::prelude::*;
        let ranges: Vec<Range<usize>> = chunk_ranges(len, chunk).collect();
        return ranges.into_par_iter().map(f).collect();
    }
    let _ = exec;
    chunk_ranges(len, chunk).map(f).collect()
}

/// Deterministic chunked sum of `f(i)` over `0..len`.
pub fn sum<F>(exec: Execution, len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(exec, len, |r| r.map(&f).sum::<f64>())
        .into_iter()
        .sum()
}

/// Apply `f` to every index independently; results in index order.
pub fn map<T, F>(exec: Execution, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && len > 1 {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let got = map_chunks_sized(Execution::Parallel, 10, 3, |r| r);
        assert_eq!(got, vec![0..3, 3..6, 6..9, 9..10]);
        assert!(map_chunks_sized(Execution::Sequential, 0, 3, |r| r).is_empty());
    }

    #[test]
    fn sum_is_identical_across_modes() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e3 + 1e-7 * i as f64;
        let a = sum(Execution::Sequential, 100_000, f);
        let b = sum(Execution::Parallel, 100_000, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
