use std::sync::Arc;

use fracture_df_core::exec::Executor;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Runs particle evaluations on a rayon pool. Results come back in index
/// order, so the output does not depend on the number of threads.
#[derive(Clone)]
pub struct RayonExecutor {
    pool: Arc<ThreadPool>,
}

impl RayonExecutor {
    /// `threads = 0` lets rayon pick.
    pub fn new(threads: usize) -> anyhow::Result<Self> {
        let pool = ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool: Arc::new(pool) })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl Executor for RayonExecutor {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}
