//! Data-parallel primitives with a sequential fallback.
//!
//! With the `parallel` feature (default) the loops below run on rayon;
//! without it they degrade to plain iteration. Reductions are performed
//! over fixed-size chunks whose partial results are combined in index
//! order, so the floating-point result is bit-identical regardless of the
//! feature flag or the number of worker threads. The `*_seq` variants are
//! always available (the benchmarks compare them against the dispatching
//! versions).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions. Fixed (never derived from the
/// thread count) so that the chunk boundaries, and hence the exact sequence
/// of float additions, do not depend on the runtime environment.
pub const CHUNK: usize = 8192;

/// Sums `f(i)` for `i in 0..n` chunk by chunk, sequentially.
pub fn sum_indexed_seq<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let mut total = 0.0;
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let mut part = 0.0;
        for i in start..end {
            part += f(i);
        }
        total += part;
    }
    total
}

/// Sums `f(i)` for `i in 0..n`; parallel over chunks when enabled.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
        let parts: Vec<f64> = starts
            .par_iter()
            .map(|&start| {
                let end = (start + CHUNK).min(n);
                let mut part = 0.0;
                for i in start..end {
                    part += f(i);
                }
                part
            })
            .collect();
        parts.iter().sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        sum_indexed_seq(n, f)
    }
}

/// Per-index vector accumulation: returns `acc` with `acc[k] = Σ_i f(i)[k]`,
/// reduced chunk by chunk in index order.
pub fn sum_vectors<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let fold_chunk = |start: usize| {
        let end = (start + CHUNK).min(n);
        let mut part = vec![0.0; dim];
        let mut scratch = vec![0.0; dim];
        for i in start..end {
            scratch.iter_mut().for_each(|v| *v = 0.0);
            f(i, &mut scratch);
            for (p, s) in part.iter_mut().zip(&scratch) {
                *p += s;
            }
        }
        part
    };

    let parts: Vec<Vec<f64>> = {
        #[cfg(feature = "parallel")]
        {
            let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
            starts.par_iter().map(|&s| fold_chunk(s)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n).step_by(CHUNK).map(fold_chunk).collect()
        }
    };

    let mut acc = vec![0.0; dim];
    for part in parts {
        for (a, p) in acc.iter_mut().zip(&part) {
            *a += p;
        }
    }
    acc
}

/// Maps `f` over `0..n` into a vector, sequentially.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}

/// Maps `f` over `0..n` into a vector, in parallel when enabled. The output
/// order is the index order either way.
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_sum_matches_sequential_bitwise() {
        // Values chosen to be rounding-sensitive: mixing magnitudes makes the
        // summation order observable unless chunking is deterministic.
        let f = |i: usize| ((i as f64) * 1e-3).sin() * 10f64.powi((i % 7) as i32 - 3);
        let n = 100_000;
        assert_eq!(sum_indexed(n, f).to_bits(), sum_indexed_seq(n, f).to_bits());
    }

    #[test]
    fn map_preserves_order() {
        let v = map_indexed(1000, |i| i * i);
        assert_eq!(v[37], 37 * 37);
        assert_eq!(v.len(), 1000);
    }

    #[test]
    fn sum_vectors_matches_manual_loop() {
        let n = 10_000;
        let acc = sum_vectors(n, 3, |i, out| {
            out[0] += i as f64;
            out[1] += 1.0;
            out[2] += (i as f64).sqrt();
        });
        let mut want = vec![0.0; 3];
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let mut part = vec![0.0; 3];
            for i in start..end {
                part[0] += i as f64;
                part[1] += 1.0;
                part[2] += (i as f64).sqrt();
            }
            for (w, p) in want.iter_mut().zip(&part) {
                *w += p;
            }
        }
        assert_eq!(acc[0].to_bits(), want[0].to_bits());
        assert_eq!(acc[1], n as f64);
        assert_eq!(acc[2].to_bits(), want[2].to_bits());
    }
}
