//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature (on by default) items run on a rayon pool;
//! without it, or with `jobs == 1`, they run sequentially on the calling
//! thread. Results are identical either way.

/// Worker count setting. `None` uses every available core.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Jobs(pub Option<usize>);

impl Jobs {
    pub const SEQUENTIAL: Jobs = Jobs(Some(1));

    pub fn is_sequential(self) -> bool {
        self.0 == Some(1) || !cfg!(feature = "parallel")
    }
}

pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, R, F>(items: &[T], jobs: Jobs, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match jobs.0 {
        None => items.par_iter().map(f).collect(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(f).collect(),
        },
    }
}

/// Maps `f` over `items`, keeping input order.
pub fn par_map<T, R, F>(items: &[T], jobs: Jobs, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs.is_sequential() {
        return map_sequential(items, f);
    }
    #[cfg(feature = "parallel")]
    {
        map_parallel(items, jobs, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(items, f)
    }
}
