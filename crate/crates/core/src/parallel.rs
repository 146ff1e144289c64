//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the batch loops below run on the
//! rayon pool; without it they are plain iterators. Results never depend on
//! the strategy: randomness is always drawn sequentially by the caller before
//! work is handed out, and `find_first` returns the lowest matching index.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Strategy {
    pub const fn default_for_build() -> Self {
        #[cfg(feature = "parallel")]
        {
            Strategy::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Strategy::Sequential
        }
    }
}

impl Default for Strategy {
    fn default() -> Self {
        Self::default_for_build()
    }
}

pub fn map<T, U, F>(strategy: Strategy, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match strategy {
        Strategy::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Strategy::Parallel => items.par_iter().map(f).collect(),
    }
}

pub fn find_first<T, F>(strategy: Strategy, items: &[T], pred: F) -> Option<usize>
where
    T: Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    match strategy {
        Strategy::Sequential => items.iter().position(pred),
        #[cfg(feature = "parallel")]
        Strategy::Parallel => items.par_iter().position_first(pred),
    }
}

pub fn all<T, F>(strategy: Strategy, items: &[T], pred: F) -> bool
where
    T: Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    match strategy {
        Strategy::Sequential => items.iter().all(pred),
        #[cfg(feature = "parallel")]
        Strategy::Parallel => items.par_iter().all(pred),
    }
}
