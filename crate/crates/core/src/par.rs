//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the current
//! rayon pool; without it everything runs on the calling thread. Reductions
//! split the index space into fixed-size chunks, sum each chunk sequentially
//! and combine the chunk partials in index order, so results do not depend
//! on the number of worker threads.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Rows per reduction chunk.
pub const CHUNK: usize = 2048;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn chunks(n: usize) -> Vec<Range<usize>> {
    (0..n.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(n))
        .collect()
}

/// Apply `f` to each chunk of `0..n` and return the partials in chunk order.
pub fn map_chunks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let ranges = chunks(n);
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

/// Compensated sum of `f(i)` over `0..n`.
pub fn sum(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let parts = map_chunks(n, |r| {
        let mut acc = KahanSum::new();
        for i in r {
            acc.add(f(i));
        }
        acc
    });
    let mut total = KahanSum::new();
    for p in parts {
        total.merge(p);
    }
    total.value()
}

/// Compensated sums of the vector-valued `f(i, out)` over `0..n`.
/// `f` adds its contribution for row `i` into `out`.
pub fn sum_vec(n: usize, width: usize, f: impl Fn(usize, &mut [f64]) + Sync + Send) -> Vec<f64> {
    let parts = map_chunks(n, |r| {
        let mut acc = vec![KahanSum::new(); width];
        let mut buf = vec![0.0; width];
        for i in r {
            buf.iter_mut().for_each(|b| *b = 0.0);
            f(i, &mut buf);
            for (a, &b) in acc.iter_mut().zip(&buf) {
                a.add(b);
            }
        }
        acc
    });
    let mut total = vec![KahanSum::new(); width];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total.iter().map(KahanSum::value).collect()
}

/// Order-preserving map over `0..n`.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Order-preserving map over a slice.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Run `op` on a pool of `threads` workers. A no-op wrapper without the
/// `parallel` feature.
pub fn with_threads<R: Send>(threads: usize, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        op()
    }
}
