//! Static work partitioning for the multi-worker kernels.
//!
//! Work is always split into contiguous chunks decided up front, so which
//! worker computes an element never affects how that element is accumulated.

use std::ops::Range;
use std::thread;

use crate::backend::{Backend, TrafficCounters};
use crate::error::{ConvError, Result};

/// Splits `0..n` into `workers` contiguous ranges; the first `n % workers`
/// ranges get one extra item. Trailing ranges may be empty.
pub fn partition(n: usize, workers: usize) -> Vec<Range<usize>> {
    assert!(workers > 0);
    let (base, extra) = (n / workers, n % workers);
    let mut start = 0;
    (0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

pub(crate) fn check_workers(workers: usize) -> Result<()> {
    if workers == 0 {
        return Err(ConvError::NoWorkers);
    }
    Ok(())
}

/// Output of an instrumented kernel run: the result plus one set of traffic
/// counters per worker (all zero on the native backend).
#[derive(Debug, Clone)]
pub struct KernelRun<T> {
    pub output: T,
    pub per_worker: Vec<TrafficCounters>,
}

impl<T> KernelRun<T> {
    /// Counters summed over all workers.
    pub fn traffic(&self) -> TrafficCounters {
        self.per_worker.iter().sum()
    }

    pub fn measured_ai(&self) -> Option<f64> {
        self.traffic().measured_ai()
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> KernelRun<U> {
        KernelRun {
            output: f(self.output),
            per_worker: self.per_worker,
        }
    }
}

/// Runs `job` once per range, each call with a fresh backend, and returns the
/// per-worker results in worker order. A single range runs on the caller's
/// thread.
pub(crate) fn run_workers<B, R, F>(ranges: &[Range<usize>], job: F) -> Vec<(R, TrafficCounters)>
where
    B: Backend,
    R: Send,
    F: Fn(&mut B, Range<usize>) -> R + Sync,
{
    let run_one = |r: Range<usize>| {
        let mut backend = B::default();
        let out = job(&mut backend, r);
        (out, backend.traffic())
    };
    if ranges.len() == 1 {
        return vec![run_one(ranges[0].clone())];
    }
    thread::scope(|s| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|r| {
                let r = r.clone();
                let run_one = &run_one;
                s.spawn(move || run_one(r))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("kernel worker panicked"))
            .collect()
    })
}

/// Like [`run_workers`], but hands each worker the disjoint slice of `out`
/// covering its range. Consecutive ranges map to consecutive slices whose
/// lengths are given by `chunk_len`.
pub(crate) fn run_on_chunks<B, F>(
    ranges: &[Range<usize>],
    out: &mut [f32],
    chunk_len: impl Fn(&Range<usize>) -> usize,
    job: F,
) -> Vec<TrafficCounters>
where
    B: Backend,
    F: Fn(&mut B, Range<usize>, &mut [f32]) + Sync,
{
    let mut chunks = Vec::with_capacity(ranges.len());
    let mut rest = out;
    for r in ranges {
        let (head, tail) = rest.split_at_mut(chunk_len(r));
        chunks.push((r.clone(), head));
        rest = tail;
    }
    let run_one = |(r, chunk): (Range<usize>, &mut [f32])| {
        let mut backend = B::default();
        job(&mut backend, r, chunk);
        backend.traffic()
    };
    if chunks.len() == 1 {
        return chunks.into_iter().map(run_one).collect();
    }
    thread::scope(|s| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|c| {
                let run_one = &run_one;
                s.spawn(move || run_one(c))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("kernel worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remainder_goes_to_lowest_workers() {
        assert_eq!(partition(10, 4), vec![0..3, 3..6, 6..8, 8..10]);
        assert_eq!(partition(8, 4), vec![0..2, 2..4, 4..6, 6..8]);
        assert_eq!(partition(2, 4), vec![0..1, 1..2, 2..2, 2..2]);
        assert_eq!(partition(5, 1), vec![0..5]);
    }

    #[test]
    fn partition_covers_everything() {
        for n in 0..40 {
            for w in 1..9 {
                let p = partition(n, w);
                assert_eq!(p.len(), w);
                assert_eq!(p.first().unwrap().start, 0);
                assert_eq!(p.last().unwrap().end, n);
                assert!(p.windows(2).all(|x| x[0].end == x[1].start));
            }
        }
    }
}
