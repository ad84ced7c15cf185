//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) these run on the rayon global
//! pool; without it they degrade to plain sequential iteration. Callers that
//! need to pick at runtime (benchmarks, sweeps inside an already-parallel
//! context) pass an explicit [`Parallelism`].

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution strategy for the bulk kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Falls back to sequential when the crate is built without `parallel`.
    Parallel,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// Ordered `filter_map` over owned items.
pub fn filter_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> Option<U> + Sync + Send,
{
    filter_map_with(Parallelism::default(), items, f)
}

pub fn filter_map_with<T, U, F>(mode: Parallelism, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> Option<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return items.into_par_iter().filter_map(f).collect();
    }
    let _ = mode;
    items.into_iter().filter_map(f).collect()
}

/// Ordered `map` over owned items.
pub fn map_with<T, U, F>(mode: Parallelism, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    filter_map_with(mode, items, |t| Some(f(t)))
}

/// Calls `f(offset, chunk)` for consecutive `chunk_len`-sized pieces of `out`.
pub fn for_each_chunk_mut<F>(mode: Parallelism, out: &mut [u8], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [u8]) + Sync + Send,
{
    assert!(chunk_len > 0);
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        out.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk_len, c));
        return;
    }
    let _ = mode;
    out.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i * chunk_len, c));
}

/// Runs two independent closures, concurrently when parallelism is enabled.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    return rayon::join(a, b);
    #[cfg(not(feature = "parallel"))]
    (a(), b())
}
