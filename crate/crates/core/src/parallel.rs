//! Thread pools for the trial-parallel harnesses.

use crate::error::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GMML_THREADS";

/// Worker count: `requested` (or the available parallelism), capped by
/// `GMML_THREADS` when it holds a positive integer.
pub fn thread_count(requested: Option<usize>) -> usize {
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let n = requested.unwrap_or(default).max(1);
    match std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(cap) if cap > 0 => n.min(cap),
        _ => n,
    }
}

/// Runs `f` inside a dedicated pool of `thread_count(requested)` workers.
pub fn install<T: Send>(requested: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(requested))
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    Ok(pool.install(f))
}
