//! Execution strategy for embarrassingly parallel per-particle work.
//!
//! The core crate only ships the sequential strategy; a threaded one lives in
//! the std companion crate.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluates `f(0), f(1), ..., f(n - 1)` and returns the results in index order.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Default, Clone, Copy)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
