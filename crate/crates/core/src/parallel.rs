//! Thread-count control for the rayon pool used by the kernels.

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "MGTPC_THREADS";

/// Reads `MGTPC_THREADS`; unset or `0` means automatic.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::contract(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = one per core).
/// Results do not depend on the thread count.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::contract(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}
