//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper partitions work into fixed-size chunks that do not depend
//! on the thread count, so sequential and parallel execution produce
//! bitwise-identical results.

use ndarray::{s, Array2, ArrayView2, Axis};

/// How to run data-parallel loops. Without the `parallel` feature,
/// `Parallel` silently runs sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Rows per gemm chunk.
pub(crate) const ROW_CHUNK: usize = 16;

/// `items.iter().map(f).collect()`, order preserved.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Fallible [`map`]; the error reported is the one at the lowest index.
pub fn try_map<T, R, E, F>(exec: Execution, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(exec, items, f).into_iter().collect()
}

/// `a · bᵀ` computed in row chunks of `a`.
pub(crate) fn matmul_transposed(exec: Execution, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    let bt = b.t();
    let run = |(mut dst, src): (ndarray::ArrayViewMut2<f64>, ArrayView2<f64>)| {
        dst.assign(&src.dot(&bt));
    };
    let chunks = out
        .axis_chunks_iter_mut(Axis(0), ROW_CHUNK)
        .zip(a.axis_chunks_iter(Axis(0), ROW_CHUNK));
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            let work: Vec<_> = chunks.collect();
            work.into_par_iter().for_each(run);
        }
        _ => chunks.for_each(run),
    }
    out
}

/// `a · b` computed in row chunks of `a`.
pub(crate) fn matmul(exec: Execution, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    matmul_transposed(exec, a, b.t())
}

/// `aᵀ · b` computed in row chunks of the result (columns of `a`).
pub(crate) fn matmul_lhs_transposed(exec: Execution, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let at = a.t();
    let mut out = Array2::zeros((a.ncols(), b.ncols()));
    let run = |(i, mut dst): (usize, ndarray::ArrayViewMut2<f64>)| {
        let lo = i * ROW_CHUNK;
        let rows = at.slice(s![lo..lo + dst.nrows(), ..]);
        dst.assign(&rows.dot(&b));
    };
    let chunks = out.axis_chunks_iter_mut(Axis(0), ROW_CHUNK).enumerate();
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            let work: Vec<_> = chunks.collect();
            work.into_par_iter().for_each(run);
        }
        _ => chunks.for_each(run),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn grid(rows: usize, cols: usize, salt: f64) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(i, j)| ((i * 31 + j * 7) as f64 * 0.37 + salt).sin())
    }

    #[test]
    fn chunked_products_match_plain_dot_and_each_other() {
        let a = grid(37, 23, 0.1);
        let b = grid(19, 23, 0.7);
        let c = grid(37, 11, 0.3);

        let abt = matmul_transposed(Execution::Sequential, a.view(), b.view());
        assert!((&abt - &a.dot(&b.t())).iter().all(|d| d.abs() < 1e-12));
        assert_eq!(abt, matmul_transposed(Execution::Parallel, a.view(), b.view()));

        let atc = matmul_lhs_transposed(Execution::Sequential, a.view(), c.view());
        assert!((&atc - &a.t().dot(&c)).iter().all(|d| d.abs() < 1e-12));
        assert_eq!(atc, matmul_lhs_transposed(Execution::Parallel, a.view(), c.view()));

        let ab = matmul(Execution::Parallel, a.view(), b.t());
        assert_eq!(ab, abt);
    }

    #[test]
    fn map_preserves_order() {
        let items: Vec<u32> = (0..1000).collect();
        let seq = map(Execution::Sequential, &items, |x| x * 2);
        assert_eq!(seq, map(Execution::Parallel, &items, |x| x * 2));
        let err = try_map(Execution::Parallel, &items, |&x| if x % 300 == 299 { Err(x) } else { Ok(x) });
        assert_eq!(err, Err(299));
    }
}
