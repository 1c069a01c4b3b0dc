//! Data-parallel helpers. With the `parallel` feature these dispatch to rayon
//! unless [`set_sequential`] has been switched on; without it everything runs
//! on the calling thread.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQ: AtomicBool = AtomicBool::new(false);

/// Route every helper through the sequential path (used by the benches).
pub fn set_sequential(on: bool) {
    FORCE_SEQ.store(on, Ordering::Relaxed);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQ.load(Ordering::Relaxed)
}

/// Cap the global pool. Only the first call has any effect.
pub fn init_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Calls `f(chunk_index, chunk)` on consecutive chunks of `chunk` elements.
pub fn for_chunks_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

pub fn sum_range<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    // fixed-size blocks keep the summation order independent of the pool size
    const BLOCK: usize = 4096;
    let blocks = n.div_ceil(BLOCK);
    let partial = map_range(blocks, |b| {
        let lo = b * BLOCK;
        let hi = (lo + BLOCK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.iter().sum()
}

pub fn max_range<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_range(n, f).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_order_stable() {
        let a = sum_range(100_000, |i| (i as f64).sqrt());
        set_sequential(true);
        let b = sum_range(100_000, |i| (i as f64).sqrt());
        set_sequential(false);
        assert_eq!(a, b);
    }

    #[test]
    fn chunks_see_their_index() {
        let mut v = vec![0usize; 40];
        for_chunks_mut(&mut v, 8, |i, c| c.iter_mut().for_each(|x| *x = i));
        assert_eq!(v[0], 0);
        assert_eq!(v[39], 4);
    }
}
