//! Ordered parallel map over independent jobs.
//!
//! Jobs are indexed, and each job seeds its own randomness from its index,
//! so the output is the same for every thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub struct Workers {
    pool: Option<rayon::ThreadPool>,
    threads: usize,
}

impl Workers {
    /// `threads <= 1` runs jobs inline on the caller's thread.
    pub fn new(threads: usize) -> Result<Self> {
        let threads = threads.max(1);
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self { pool, threads })
    }

    pub fn serial() -> Self {
        Self { pool: None, threads: 1 }
    }

    /// Available cores, capped at 16.
    pub fn default_threads() -> usize {
        std::thread::available_parallelism().map_or(1, |n| n.get()).min(16)
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Runs `job(0..n)` and returns results in index order. The first error
    /// by index wins.
    pub fn map<T, F>(&self, n: usize, job: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match &self.pool {
            None => (0..n).map(job).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&job).collect::<Vec<_>>().into_iter().collect()),
        }
    }
}
