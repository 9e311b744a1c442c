//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it, or with `Executor::sequential()`, items run in order on the
//! calling thread. Results always come back in input order, so outputs are
//! identical either way.

#[cfg(feature = "parallel")]
use std::sync::Arc;

#[derive(Clone, Default)]
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
    sequential: bool,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("parallel", &self.is_parallel())
            .finish()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Self {
            sequential: true,
            ..Self::default()
        }
    }

    /// Parallel on the global pool when the feature is enabled.
    pub fn parallel() -> Self {
        Self::default()
    }

    /// A dedicated pool with `threads` workers; 0 means the global pool and
    /// 1 means sequential.
    pub fn with_threads(threads: usize) -> Self {
        match threads {
            0 => Self::parallel(),
            1 => Self::sequential(),
            #[cfg(feature = "parallel")]
            n => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => Self {
                    pool: Some(Arc::new(pool)),
                    sequential: false,
                },
                Err(e) => {
                    tracing::warn!("could not build a {n}-thread pool ({e}); running sequentially");
                    Self::sequential()
                }
            },
            #[cfg(not(feature = "parallel"))]
            _ => Self::sequential(),
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && !self.sequential
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if !self.sequential {
            use rayon::prelude::*;
            let run = || items.par_iter().map(&f).collect();
            return match &self.pool {
                Some(pool) => pool.install(run),
                None => run(),
            };
        }
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = Executor::sequential().map(&xs, |x| x * x);
        let par = Executor::with_threads(4).map(&xs, |x| x * x);
        assert_eq!(seq, par);
        assert!(!Executor::sequential().is_parallel());
    }
}
