//! Data-parallel execution helpers.
//!
//! All fan-out loops in the crate (per-slot fits, bootstrap iterations, MCS
//! replications) go through these functions. With the default `parallel`
//! feature they run on rayon; without it they are plain sequential loops.
//! Work items are indexed and seeded independently, so both modes produce
//! bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Label recorded in benchmarks and output metadata.
pub fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "rayon"
    } else {
        "sequential"
    }
}

/// Cap the worker count from the `GDVAR_WORKERS` environment variable.
/// Call once at process start; later calls are ignored by rayon.
pub fn init_workers_from_env() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(v) = std::env::var("GDVAR_WORKERS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    }
}

/// `(0..n).map(f)` collected in index order.
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

/// Fallible variant: first error wins, results stay in index order.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
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
