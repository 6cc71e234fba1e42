//! Replica loops whose results do not depend on the number of threads:
//! every replica owns a stream id, results are gathered in replica order,
//! and reductions run sequentially over that order.

use rayon::prelude::*;

/// Replicas per task in chunked reductions.
pub const CHUNK: usize = 64;

/// Evaluates `f(r)` for `r = 0..replicas`, returned in replica order.
pub fn map_replicas<T, F>(replicas: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..replicas as u64).into_par_iter().map(f).collect()
}

/// Sums per-replica vectors of length `len`. Each chunk of [`CHUNK`]
/// consecutive replicas accumulates into its own buffer; the buffers are
/// then added in chunk order.
pub fn sum_vectors<F>(replicas: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(u64, &mut [f64]) + Sync + Send,
{
    let chunks: Vec<Vec<f64>> = (0..replicas.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; len];
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(replicas);
            for r in lo..hi {
                f(r as u64, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; len];
    for c in chunks {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_independent_of_pool_size() {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                sum_vectors(1000, 3, |r, acc| {
                    let x = (r as f64 * 0.37).sin();
                    acc[0] += x;
                    acc[1] += x * x;
                    acc[2] += 1.0 / (1.0 + r as f64);
                })
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert_eq!(a[2].to_bits(), b[2].to_bits());
        let m = map_replicas(10, |r| r * 2);
        assert_eq!(m, (0..10).map(|r| r * 2).collect::<Vec<_>>());
    }
}
