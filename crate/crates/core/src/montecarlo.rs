//! Deterministic sample-parallel execution.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Evaluates `f(i)` for `i in 0..n` on `workers` threads and returns the
/// results in index order, so the output is independent of the worker count.
pub fn run_samples<T, F>(n: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if workers <= 1 {
        return (0..n).map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let a = run_samples(100, 1, |i| Ok(i * i)).unwrap();
        let b = run_samples(100, 4, |i| Ok(i * i)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_error_is_reported() {
        let r: Result<Vec<u64>> = run_samples(10, 2, |i| {
            if i == 7 {
                Err(Error::InvalidParameter("seven".into()))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }
}
