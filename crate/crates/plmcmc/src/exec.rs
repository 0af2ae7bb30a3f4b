use plmcmc_core::exec::Executor;
use rayon::prelude::*;

use crate::error::{AppError, Result};

/// Environment variable giving the default worker count.
pub const THREADS_ENV: &str = "PLMCMC_THREADS";

/// Runs work items on a dedicated rayon pool. Results come back in index
/// order, so output does not depend on the thread count.
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    /// `None` or `Some(0)` uses one thread per core.
    pub fn new(threads: Option<usize>) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(0))
            .build()
            .map_err(|e| AppError::usage(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Parallel {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
