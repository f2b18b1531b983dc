//! Trial-level fan-out.
//!
//! Trials are independent and each derives its own streams from its index, so
//! the result of [`map_trials`] does not depend on the execution mode. With the
//! `parallel` feature disabled only [`Execution::Sequential`] exists.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

/// `f(0), f(1), …, f(n-1)` in index order.
pub fn map_trials<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Number of indices in `0..n` for which `pred` holds.
pub fn count_trials<F>(n: usize, exec: Execution, pred: F) -> usize
where
    F: Fn(usize) -> bool + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).filter(|&i| pred(i)).count(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().filter(|&i| pred(i)).count(),
    }
}
