//! Execution strategy for independent work items.
//!
//! The core crate never spawns threads. Anything embarrassingly parallel
//! (chains, rows, gradient chunks) goes through an [`Executor`], and the
//! results always come back in index order so reductions stay bitwise
//! deterministic regardless of the executor.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every item on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
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
