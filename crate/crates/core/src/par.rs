//! Ordered data-parallel helpers.
//!
//! With the `parallel` feature the work is spread over a rayon pool; without
//! it every helper runs the same closure sequentially. Results are always
//! returned in input order, so callers observe identical output regardless of
//! the worker count.

/// Worker count for a batch operation. `0` means "use all available cores".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Jobs(pub usize);

impl Jobs {
    pub const SEQUENTIAL: Jobs = Jobs(1);
    pub const ALL: Jobs = Jobs(0);

    pub fn is_sequential(self) -> bool {
        self.0 == 1 || !cfg!(feature = "parallel")
    }
}

impl Default for Jobs {
    fn default() -> Self {
        Jobs::ALL
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map_ordered<T, R, F>(items: &[T], jobs: Jobs, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    if jobs.is_sequential() || items.len() < 2 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    parallel::map_ordered(items, jobs.0, f)
}

/// Runs `f` over fixed-size chunks of `0..len` and returns the per-chunk
/// results in chunk order. Chunk boundaries depend only on `chunk`, never on
/// the thread count, so any order-sensitive reduction over the returned
/// vector is reproducible bit for bit.
pub fn map_chunks<R, F>(len: usize, chunk: usize, jobs: Jobs, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let ranges: Vec<_> = (0..len)
        .step_by(chunk)
        .map(|s| s..(s + chunk).min(len))
        .collect();
    map_ordered(&ranges, jobs, |_, r| f(r.clone()))
}

#[cfg(feature = "parallel")]
mod parallel {
    use rayon::prelude::*;

    pub fn map_ordered<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        let run = || {
            items
                .par_iter()
                .enumerate()
                .map(|(i, t)| f(i, t))
                .collect()
        };
        if threads == 0 || threads == rayon::current_num_threads() {
            return run();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod parallel {
    pub fn map_ordered<T, R, F>(items: &[T], _threads: usize, f: F) -> Vec<R>
    where
        F: Fn(usize, &T) -> R,
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Sizes the global worker pool. Only the first call has an effect.
pub fn init_global_pool(threads: usize) {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u32> = (0..1000).collect();
        let a = map_ordered(&items, Jobs(4), |i, v| (i as u32) * 2 + v);
        let b = map_ordered(&items, Jobs::SEQUENTIAL, |i, v| (i as u32) * 2 + v);
        assert_eq!(a, b);
    }

    #[test]
    fn chunks_cover_range() {
        let parts = map_chunks(10, 4, Jobs(3), |r| r.len());
        assert_eq!(parts, vec![4, 4, 2]);
        assert!(map_chunks(0, 4, Jobs(3), |r| r.len()).is_empty());
    }
}
