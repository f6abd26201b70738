//! Data-parallel helpers. With the `parallel` feature work is spread over a
//! rayon pool; without it, or with one worker, everything runs in order on
//! the calling thread. Results are always returned in input order.

use crate::error::{Error, Result};

/// How many worker threads to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workers(usize);

impl Workers {
    pub const SINGLE: Workers = Workers(1);

    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("worker count must be >= 1"));
        }
        Ok(Self(n))
    }

    /// One worker per available core.
    pub fn all() -> Self {
        Self(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self.0 > 1
    }
}

impl Default for Workers {
    fn default() -> Self {
        Self::SINGLE
    }
}

pub fn map<T, R, F>(workers: Workers, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers.is_parallel() {
        use rayon::prelude::*;
        return install(workers, || items.par_iter().map(&f).collect());
    }
    let _ = workers;
    items.iter().map(f).collect()
}

pub fn map_mut<T, R, F>(workers: Workers, items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(&mut T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers.is_parallel() {
        use rayon::prelude::*;
        return install(workers, || items.par_iter_mut().map(&f).collect());
    }
    let _ = workers;
    items.iter_mut().map(f).collect()
}

#[cfg(feature = "parallel")]
fn install<R: Send>(workers: Workers, op: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.get())
        .build()
    {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}
