//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] dispatches to
//! rayon; without it every call runs sequentially. Results are always returned
//! in index order so downstream aggregation is independent of scheduling.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Index of the minimum of `f` over `0..n`; ties go to the lowest index.
/// NaN values never win.
pub fn argmin_indexed<F>(exec: Execution, n: usize, f: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    fn better(a: (usize, f64), b: (usize, f64)) -> (usize, f64) {
        if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) || a.1.is_nan() {
            b
        } else {
            a
        }
    }
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n)
                .into_par_iter()
                .map(|i| (i, f(i)))
                .filter(|(_, v)| !v.is_nan())
                .reduce_with(better)
        }
        _ => (0..n)
            .map(|i| (i, f(i)))
            .filter(|(_, v)| !v.is_nan())
            .reduce(better),
    }
}
