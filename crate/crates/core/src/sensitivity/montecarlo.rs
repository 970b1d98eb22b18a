//! Monte Carlo checks of the sensitivity bounds. Every routine takes its
//! random stream explicitly.

use rand::Rng;

use crate::filters::FilterKernel;
use crate::scalar::Scalar;

/// Empirical `Pr{|J ∩ j_i| > I'}` for each threshold in `thresholds`, where
/// an individual's `i` time steps are each kept independently with
/// probability `p`.
pub fn participation_exceedance<R: Rng + ?Sized>(
    i: u32,
    p: f64,
    thresholds: &[u32],
    draws: u64,
    rng: &mut R,
) -> Vec<f64> {
    let mut exceed = vec![0u64; thresholds.len()];
    for _ in 0..draws {
        let kept = (0..i).filter(|_| rng.random::<f64>() < p).count() as u32;
        for (slot, &t) in exceed.iter_mut().zip(thresholds) {
            if kept > t {
                *slot += 1;
            }
        }
    }
    exceed.into_iter().map(|c| c as f64 / draws as f64).collect()
}

/// Autocorrelation `c_d = sum_u h_u h_{(u+d) mod T}`, i.e. the first row of
/// the circulant Gram matrix `A A^T`.
pub fn gram_row<S: Scalar>(kernel: &FilterKernel<S>) -> Vec<f64> {
    let h: Vec<f64> = kernel.weights().iter().map(|w| w.as_f64()).collect();
    let t = h.len();
    (0..t)
        .map(|d| (0..t).map(|u| h[u] * h[(u + d) % t]).sum())
        .collect()
}

/// `sigma_max(diag(delta) A)^2` for the kept row set `kept`.
///
/// Equals the top eigenvalue of `B^T B`, which shares its nonzero spectrum
/// with `B B^T = (A A^T)[J, J]`; power iteration runs on that `|J| x |J|`
/// principal submatrix of the Gram matrix, whose first row is `gram`.
pub fn subsampled_sigma_max_sq(gram: &[f64], kept: &[usize]) -> f64 {
    let n = kept.len();
    if n == 0 {
        return 0.0;
    }
    let t = gram.len();
    let g: Vec<f64> = kept
        .iter()
        .flat_map(|&a| kept.iter().map(move |&b| gram[(b + t - a) % t]))
        .collect();
    power_iteration(&g, n, 1e-13, 10_000)
}

/// Largest eigenvalue of a symmetric positive semidefinite `n x n` matrix
/// (row-major) by power iteration from the all-ones vector.
pub fn power_iteration(matrix: &[f64], n: usize, rel_tol: f64, max_iter: usize) -> f64 {
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        for (row, out) in matrix.chunks_exact(n).zip(w.iter_mut()) {
            *out = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        // Rayleigh quotient with unit v.
        let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / norm);
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Empirical `Pr{sigma_max(diag(delta) A)^2 > alpha^2}` over `draws`
/// independent Poisson row subsets at rate `p`.
pub fn chernoff_exceedance<S: Scalar, R: Rng + ?Sized>(
    kernel: &FilterKernel<S>,
    p: f64,
    alpha: f64,
    draws: u64,
    rng: &mut R,
) -> f64 {
    let gram = gram_row(kernel);
    let t = gram.len();
    let threshold = alpha * alpha;
    let mut kept = Vec::with_capacity(t);
    let mut exceed = 0u64;
    for _ in 0..draws {
        kept.clear();
        kept.extend((0..t).filter(|_| rng.random::<f64>() < p));
        if subsampled_sigma_max_sq(&gram, &kept) > threshold {
            exceed += 1;
        }
    }
    exceed as f64 / draws as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_b(kernel: &FilterKernel<f64>, kept: &[usize]) -> DMatrix<f64> {
        let t = kernel.len();
        let h = kernel.weights();
        DMatrix::from_fn(t, t, |i, j| {
            if kept.binary_search(&i).is_ok() {
                h[(i + t - j) % t]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn gram_power_iteration_matches_dense_svd() {
        let kernel = FilterKernel::<f64>::gaussian(60, 2.0).unwrap();
        let gram = gram_row(&kernel);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let kept: Vec<usize> = (0..60).filter(|_| rng.random::<f64>() < 0.3).collect();
            let svd = dense_b(&kernel, &kept).singular_values();
            let top = svd.iter().cloned().fold(0.0, f64::max);
            let ours = subsampled_sigma_max_sq(&gram, &kept);
            assert!((ours - top * top).abs() <= 1e-9, "{ours} vs {}", top * top);
        }
    }

    #[test]
    fn full_subset_recovers_unit_norm() {
        let kernel = FilterKernel::<f64>::gaussian(40, 3.0).unwrap();
        let all: Vec<usize> = (0..40).collect();
        let s = subsampled_sigma_max_sq(&gram_row(&kernel), &all);
        assert!((s - 1.0).abs() < 1e-9);
        assert_eq!(subsampled_sigma_max_sq(&gram_row(&kernel), &[]), 0.0);
    }

    #[test]
    fn identity_single_row() {
        let kernel = FilterKernel::<f64>::identity(10).unwrap();
        assert_eq!(subsampled_sigma_max_sq(&gram_row(&kernel), &[4]), 1.0);
    }

    #[test]
    fn participation_frequencies_are_sane() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = participation_exceedance(4, 0.5, &[0, 3, 4], 20_000, &mut rng);
        assert!((f[0] - 15.0 / 16.0).abs() < 0.01);
        assert!((f[1] - 1.0 / 16.0).abs() < 0.01);
        assert_eq!(f[2], 0.0);
    }
}
