//! Execution policy for data-parallel loops.
//!
//! Every data-parallel map in the crate is routed through [`Exec::map`], so a
//! caller (or a benchmark) can pick the sequential path explicitly. Results
//! are always returned in input order; reductions over them happen
//! sequentially in the caller, which keeps floating-point sums identical
//! between the two paths.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is on; sequential otherwise.
    #[default]
    Parallel,
}

impl Exec {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            #[cfg(not(feature = "parallel"))]
            Exec::Parallel => items.iter().map(f).collect(),
        }
    }

    /// Like [`Exec::map`] but passes the item index as well.
    pub fn map_indexed<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items
                .par_iter()
                .enumerate()
                .map(|(i, t)| f(i, t))
                .collect(),
            #[cfg(not(feature = "parallel"))]
            Exec::Parallel => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        }
    }

    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}
