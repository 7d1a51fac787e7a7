//! Deterministic data-parallel execution.
//!
//! Every reduction in this crate runs over fixed-size chunks whose partial
//! results are combined in index order. The chunk layout does not depend on
//! the thread count, so parallel and sequential runs produce bit-identical
//! results. The `parallel` feature (on by default) dispatches chunks to the
//! rayon pool; [`set_sequential`] forces the sequential path at runtime,
//! which the benchmarks use to compare both paths in one binary.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force all chunked maps onto the sequential path.
pub fn set_sequential(yes: bool) {
    SEQUENTIAL.store(yes, Ordering::SeqCst);
}

/// True when the sequential path is forced or the `parallel` feature is off.
pub fn is_sequential() -> bool {
    if cfg!(not(feature = "parallel")) {
        return true;
    }
    SEQUENTIAL.load(Ordering::SeqCst)
}

/// Default chunk length for per-atom loops.
pub const CHUNK: usize = 4096;

fn ranges(len: usize, chunk: usize) -> Vec<Range<usize>> {
    assert!(chunk > 0);
    let mut out = Vec::with_capacity(len / chunk + 1);
    let mut start = 0;
    while start < len {
        let end = (start + chunk).min(len);
        out.push(start..end);
        start = end;
    }
    out
}

/// Map fixed chunks of `0..len` to values, preserving chunk order.
pub fn map_chunks<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let rs = ranges(len, chunk);
    #[cfg(feature = "parallel")]
    if !is_sequential() {
        return rs.into_par_iter().map(f).collect();
    }
    rs.into_iter().map(f).collect()
}

/// Chunked sum of `f(i)` over `0..len`, deterministic across thread counts.
pub fn sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(len, CHUNK, |r| r.map(&f).sum::<f64>())
        .into_iter()
        .sum()
}

/// Chunked sum of `f(i)` and `f(i)^2` in one pass; used by the estimators.
pub fn sum_and_sq<F>(len: usize, f: F) -> (f64, f64)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let parts = map_chunks(len, CHUNK, |r| {
        let mut s = 0.0;
        let mut s2 = 0.0;
        for i in r {
            let x = f(i);
            s += x;
            s2 += x * x;
        }
        (s, s2)
    });
    parts
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (s, s2)| (a + s, b + s2))
}

/// Map `0..len` elementwise, in parallel when enabled, preserving order.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let parts = map_chunks(len, CHUNK, |r| r.map(&f).collect::<Vec<_>>());
    let mut out = Vec::with_capacity(len);
    for p in parts {
        out.extend(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_sequential_fold() {
        let xs: Vec<f64> = (0..10_000).map(|i| (i as f64).sin()).collect();
        let par = sum(xs.len(), |i| xs[i]);
        set_sequential(true);
        let seq = sum(xs.len(), |i| xs[i]);
        set_sequential(false);
        assert_eq!(par.to_bits(), seq.to_bits());
    }

    #[test]
    fn ranges_cover_exactly() {
        let rs = ranges(10, 3);
        assert_eq!(rs, vec![0..3, 3..6, 6..9, 9..10]);
    }
}
