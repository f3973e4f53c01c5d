//! Frame-level data parallelism. With the `parallel` feature (default) work is
//! spread over a rayon pool; without it, or with `jobs == 1`, it runs inline.
//! Output order always matches input order.

use crate::error::Result;

/// Maps `f` over `items` with up to `jobs` threads (`0` = all cores).
pub fn map_ordered<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if jobs != 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| crate::error::Error::Config(format!("cannot start worker pool: {e}")))?;
        return Ok(pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()));
    }
    let _ = jobs;
    Ok(items.iter().enumerate().map(|(i, t)| f(i, t)).collect())
}

/// Whether this build can run work in parallel.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
