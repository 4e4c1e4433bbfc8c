//! Deterministic parallel sums: fixed-size blocks, partials added in block order.

use rayon::prelude::*;

pub const BLOCK: usize = 512;

/// `sum_i f(i, acc)` into a vector of length `width`, independent of the thread count.
pub fn block_sum<F>(n: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let partials: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; width];
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; width];
    for p in partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

/// Scalar form of [`block_sum`].
#[cfg(test)]
pub fn block_sum1<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    block_sum(n, 1, |i, acc| acc[0] += f(i))[0]
}
