//! Order-preserving data-parallel map.
//!
//! With the `parallel` feature the work is spread over the rayon pool;
//! without it (or when `parallel` is false at the call site) it runs
//! sequentially. Either way results come back in input order, so callers
//! that reduce them sequentially stay bit-for-bit deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_ordered<T, U, F>(items: &[T], parallel: bool, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Whether the crate was built with rayon support.
pub const fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}
