//! Data-parallel helpers with a fixed reduction order.
//!
//! Every reduction splits its input into chunks of [`CHUNK`] elements, sums each
//! chunk left to right and combines the partial sums pairwise, so results do not
//! depend on the number of worker threads or on whether the `parallel` feature
//! is enabled.

use crate::stats::pairwise_sum;

pub const CHUNK: usize = 4096;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `f(0), ..., f(n-1)` in index order, evaluated in parallel when available.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential counterpart of [`map_indexed`]; always available.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Writes `out[i] = f(i)` for every index.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if out.len() > 4 * CHUNK {
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (k, o) in chunk.iter_mut().enumerate() {
                *o = f(base + k);
            }
        });
        return;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

fn chunk_sum(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Inner product with a schedule-independent summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    if a.len() > 4 * CHUNK {
        let partials: Vec<f64> = a.par_chunks(CHUNK).zip(b.par_chunks(CHUNK)).map(|(x, y)| chunk_sum(x, y)).collect();
        return pairwise_sum(&partials);
    }
    dot_seq(a, b)
}

pub fn dot_seq(a: &[f64], b: &[f64]) -> f64 {
    let partials: Vec<f64> = a.chunks(CHUNK).zip(b.chunks(CHUNK)).map(|(x, y)| chunk_sum(x, y)).collect();
    pairwise_sum(&partials)
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len());
    #[cfg(feature = "parallel")]
    if y.len() > 4 * CHUNK {
        y.par_chunks_mut(CHUNK).zip(x.par_chunks(CHUNK)).for_each(|(yc, xc)| {
            yc.iter_mut().zip(xc).for_each(|(y, x)| *y += alpha * x);
        });
        return;
    }
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// `y = x + beta * y`
pub fn xpby(x: &[f64], beta: f64, y: &mut [f64]) {
    assert_eq!(x.len(), y.len());
    #[cfg(feature = "parallel")]
    if y.len() > 4 * CHUNK {
        y.par_chunks_mut(CHUNK).zip(x.par_chunks(CHUNK)).for_each(|(yc, xc)| {
            yc.iter_mut().zip(xc).for_each(|(y, x)| *y = x + beta * *y);
        });
        return;
    }
    y.iter_mut().zip(x).for_each(|(y, x)| *y = x + beta * *y);
}
