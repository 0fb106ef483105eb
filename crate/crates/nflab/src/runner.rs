//! Worker pool. Jobs carry their own seeds and results are collected in job
//! order, so output does not depend on the thread count.

use nflab_core::attractor::{JobMap, SampleJob, SamplePoint};
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

pub const THREADS_VAR: &str = "NFLAB_THREADS";

pub struct Pool {
    pool: ThreadPool,
}

impl Pool {
    /// Pool capped by `NFLAB_THREADS` (unset, empty or 0 means all cores).
    pub fn from_env() -> anyhow::Result<Self> {
        let threads = match std::env::var(THREADS_VAR) {
            Ok(v) if !v.trim().is_empty() => v.trim().parse::<usize>().map_err(|_| {
                anyhow::anyhow!("{THREADS_VAR} must be a non-negative integer, got {v:?}")
            })?,
            _ => 0,
        };
        Self::with_threads(threads)
    }

    pub fn with_threads(threads: usize) -> anyhow::Result<Self> {
        let pool = ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Pool { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Maps `f` over `items` in parallel, preserving order.
    pub fn map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }
}

impl JobMap for Pool {
    fn map_jobs(
        &self,
        jobs: &[SampleJob],
        run: &(dyn Fn(&SampleJob) -> nflab_core::Result<Vec<SamplePoint>> + Sync),
    ) -> Vec<nflab_core::Result<Vec<SamplePoint>>> {
        self.map(jobs, run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let pool = Pool::with_threads(3).unwrap();
        let items: Vec<u64> = (0..1000).collect();
        let out = pool.map(&items, |x| x * x);
        assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
        assert_eq!(pool.threads(), 3);
    }
}
