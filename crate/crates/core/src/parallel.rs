//! Worker-pool sizing. `PONDER_THREADS` caps the number of workers; results
//! are always assembled in input order so output does not depend on it.

use rayon::prelude::*;

pub const THREADS_ENV: &str = "PONDER_THREADS";

/// Worker count from `PONDER_THREADS`, or `None` to use rayon's default.
pub fn env_threads() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Order-preserving parallel map.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    if rayon::current_thread_index().is_some() {
        return items.par_iter().map(f).collect();
    }
    match env_threads() {
        Some(1) => items.iter().map(f).collect(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(f).collect(),
        },
        None => items.par_iter().map(f).collect(),
    }
}
