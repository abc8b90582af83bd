//! Data-parallel helpers. With the default `parallel` feature these run on
//! a rayon pool; without it they fall back to sequential iteration with
//! identical results (ordered collection, no shared state).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Runs `f` on a dedicated pool of `threads` workers (parallel builds
/// only); `None` or `Some(0)` uses the global default.
pub fn run_with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match threads {
            Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool")
                .install(f),
            _ => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Order-preserving parallel map.
pub fn map_slice<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Send + Sync) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
