//! Circular (circulant) filters and their spectral statistics.
//!
//! A kernel `h` of length `T` defines the `T x T` matrix `a_ij = h_{(i-j) mod T}`.
//! Kernels are nonnegative with unit l1 norm, so every row of the matrix has
//! unit l1 norm and its largest singular value is exactly 1.

use std::io::Write;

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on `||h||_1 == 1` for double precision kernels.
pub const L1_TOLERANCE: f64 = 1e-12;

/// Nonnegative, l1-normalized circular convolution kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct FilterKernel<S = f64> {
    h: Vec<S>,
}

/// Spectral statistics of the circulant matrix built from a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    /// Largest singular value.
    pub sigma_max: f64,
    /// Stable rank `||A||_F^2 / ||A||^2`.
    pub srank: f64,
    /// Largest squared l2 row norm.
    pub l: f64,
}

impl<S: Scalar> FilterKernel<S> {
    /// Wraps explicit kernel weights. Weights must be nonnegative and sum to 1.
    pub fn new(h: Vec<S>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidKernel("kernel is empty".into()));
        }
        let mut sum = 0.0f64;
        for (k, &w) in h.iter().enumerate() {
            if !w.is_finite() || w < S::zero() {
                return Err(Error::InvalidKernel(format!(
                    "entry {k} = {w} is not a finite nonnegative weight"
                )));
            }
            sum += w.as_f64();
        }
        let tol = l1_tolerance::<S>(h.len());
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidKernel(format!(
                "l1 norm {sum} differs from 1 by more than {tol:e}"
            )));
        }
        Ok(Self { h })
    }

    /// `h = [1, 0, ..., 0]`.
    pub fn identity(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidParams("kernel length must be positive".into()));
        }
        let mut h = vec![S::zero(); t];
        h[0] = S::one();
        Ok(Self { h })
    }

    /// Circularly symmetric Gaussian kernel of width `sigma_g` (in samples):
    /// `hat_h_t = exp(-((T/2 - |t - T/2|) / sigma_g)^2 / 2)`, then l1-normalized.
    ///
    /// `sigma_g = +inf` is accepted and yields the flat averaging kernel.
    pub fn gaussian(t: usize, sigma_g: f64) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidParams("kernel length must be positive".into()));
        }
        if sigma_g.is_nan() || sigma_g <= 0.0 {
            return Err(Error::InvalidSigma(sigma_g));
        }
        let half = t as f64 / 2.0;
        let raw: Vec<f64> = (0..t)
            .map(|i| {
                let dist = half - (i as f64 - half).abs();
                (-0.5 * (dist / sigma_g).powi(2)).exp()
            })
            .collect();
        let norm: f64 = raw.iter().sum();
        Ok(Self {
            h: raw.into_iter().map(|v| S::of(v / norm)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn weights(&self) -> &[S] {
        &self.h
    }

    pub fn is_identity(&self) -> bool {
        self.h[0] == S::one() && self.h[1..].iter().all(|w| w.is_zero())
    }

    /// `sigma_max` from the circulant eigenvalues `|DFT(h)_k|`; `L = ||h||_2^2`
    /// since all rows share the same norm; `srank = T * L / sigma_max^2`.
    pub fn stats(&self) -> FilterStats {
        let t = self.h.len();
        let mut spectrum: Vec<Complex<f64>> = self
            .h
            .iter()
            .map(|w| Complex::new(w.as_f64(), 0.0))
            .collect();
        FftPlanner::<f64>::new()
            .plan_fft_forward(t)
            .process(&mut spectrum);
        let sigma_max = spectrum.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let l: f64 = self.h.iter().map(|w| w.as_f64().powi(2)).sum();
        FilterStats {
            sigma_max,
            srank: t as f64 * l / (sigma_max * sigma_max),
            l,
        }
    }

    /// Writes the kernel as CSV with header `k,h_k`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "h_k"])?;
        for (k, v) in self.h.iter().enumerate() {
            w.write_record([k.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn l1_tolerance<S: Scalar>(len: usize) -> f64 {
    L1_TOLERANCE.max(S::epsilon().as_f64() * 16.0 * (len as f64).sqrt())
}

/// Circular convolution `y_t = sum_k x_k h_{(t-k) mod T}`, computed in the
/// frequency domain. The identity kernel is passed through without rounding.
pub fn apply_filter<S: Scalar>(kernel: &FilterKernel<S>, x: &[S]) -> Result<Vec<S>> {
    let t = kernel.len();
    if x.len() != t {
        return Err(Error::LengthMismatch {
            expected: t,
            actual: x.len(),
        });
    }
    if kernel.is_identity() {
        return Ok(x.to_vec());
    }
    let mut planner = FftPlanner::<S>::new();
    let forward = planner.plan_fft_forward(t);
    let inverse = planner.plan_fft_inverse(t);

    let mut xs: Vec<Complex<S>> = x.iter().map(|&v| Complex::new(v, S::zero())).collect();
    let mut hs: Vec<Complex<S>> = kernel
        .weights()
        .iter()
        .map(|&v| Complex::new(v, S::zero()))
        .collect();
    forward.process(&mut xs);
    forward.process(&mut hs);
    for (a, b) in xs.iter_mut().zip(&hs) {
        *a = *a * *b;
    }
    inverse.process(&mut xs);
    let scale = S::one() / S::of(t as f64);
    Ok(xs.into_iter().map(|c| c.re * scale).collect())
}

/// Direct `O(T^2)` circular convolution.
pub fn apply_filter_direct<S: Scalar>(kernel: &FilterKernel<S>, x: &[S]) -> Result<Vec<S>> {
    let t = kernel.len();
    if x.len() != t {
        return Err(Error::LengthMismatch {
            expected: t,
            actual: x.len(),
        });
    }
    let h = kernel.weights();
    Ok((0..t)
        .map(|i| {
            x.iter()
                .enumerate()
                .fold(S::zero(), |acc, (k, &xk)| acc + xk * h[(i + t - k) % t])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn gaussian_singleton() {
        let k = FilterKernel::<f64>::gaussian(1, 3.0).unwrap();
        assert_eq!(k.weights(), &[1.0]);
    }

    #[test]
    fn gaussian_flat_limit() {
        let k = FilterKernel::<f64>::gaussian(4, f64::INFINITY).unwrap();
        for &w in k.weights() {
            assert_abs_diff_eq!(w, 0.25, epsilon = 1e-15);
        }
        let k = FilterKernel::<f64>::gaussian(4, 1e9).unwrap();
        for &w in k.weights() {
            assert_abs_diff_eq!(w, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_rejects_bad_sigma() {
        assert_eq!(
            FilterKernel::<f64>::gaussian(8, 0.0),
            Err(Error::InvalidSigma(0.0))
        );
        assert!(FilterKernel::<f64>::gaussian(8, -1.0).is_err());
        assert!(FilterKernel::<f64>::gaussian(8, f64::NAN).is_err());
    }

    #[test]
    fn gaussian_is_circularly_symmetric() {
        for t in [5usize, 8, 33] {
            let k = FilterKernel::<f64>::gaussian(t, 1.7).unwrap();
            let h = k.weights();
            for i in 1..t {
                assert_abs_diff_eq!(h[i], h[t - i], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn gaussian_peak_at_zero_lag() {
        // The raw weight at t=0 is exp(0) = 1 before normalization.
        let k = FilterKernel::<f64>::gaussian(100, 2.0).unwrap();
        let h = k.weights();
        assert!(h.iter().all(|&w| w <= h[0]));
        let sum: f64 = (0..100)
            .map(|i| {
                let d = 50.0 - (i as f64 - 50.0).abs();
                (-0.5 * (d / 2.0f64).powi(2)).exp()
            })
            .sum();
        assert_abs_diff_eq!(h[0], 1.0 / sum, epsilon = 1e-15);
    }

    #[test]
    fn identity_kernel_shape_and_stats() {
        let k = FilterKernel::<f64>::identity(3).unwrap();
        assert_eq!(k.weights(), &[1.0, 0.0, 0.0]);
        assert_eq!(apply_filter(&k, &[4.0, 7.0, 1.0]).unwrap(), vec![4.0, 7.0, 1.0]);

        let s = FilterKernel::<f64>::identity(5).unwrap().stats();
        assert_abs_diff_eq!(s.srank, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.l, 1.0, epsilon = 1e-12);

        let s = FilterKernel::<f64>::identity(10).unwrap().stats();
        assert_abs_diff_eq!(s.sigma_max, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.srank, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.l, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_tap_average() {
        let k = FilterKernel::new(vec![0.5, 0.5, 0.0]).unwrap();
        let y = apply_filter(&k, &[2.0, 0.0, 0.0]).unwrap();
        for (a, b) in y.iter().zip([1.0, 1.0, 0.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        // y_2 = x_1 h_1 + x_2 h_0 with x = e_0 gives y = [h_0, h_1, h_2].
        let k = FilterKernel::new(vec![0.5, 0.0, 0.5]).unwrap();
        let y = apply_filter_direct(&k, &[2.0, 0.0, 0.0]).unwrap();
        assert_eq!(y, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn two_tap_stats() {
        // 2x2 circulant [[.5,.5],[.5,.5]] has eigenvalues {1, 0}.
        let s = FilterKernel::new(vec![0.5, 0.5]).unwrap().stats();
        assert_abs_diff_eq!(s.sigma_max, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.l, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.srank, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_preserves_constants() {
        let k = FilterKernel::<f64>::gaussian(8, 1.0).unwrap();
        let y = apply_filter(&k, &[3.5; 8]).unwrap();
        for v in y {
            assert_abs_diff_eq!(v, 3.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn length_mismatch() {
        let k = FilterKernel::<f64>::identity(3).unwrap();
        assert_eq!(
            apply_filter(&k, &[1.0, 2.0]),
            Err(Error::LengthMismatch { expected: 3, actual: 2 })
        );
    }

    #[test]
    fn rejects_invalid_weights() {
        assert!(FilterKernel::new(vec![0.6, 0.6]).is_err());
        assert!(FilterKernel::new(vec![1.5, -0.5]).is_err());
        assert!(FilterKernel::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn kernel_csv_export() {
        let k = FilterKernel::new(vec![0.5, 0.25, 0.25]).unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,h_k\n0,0.5\n1,0.25\n2,0.25\n");
    }

    #[test]
    fn single_precision_kernel() {
        let k = FilterKernel::<f32>::gaussian(256, 4.0).unwrap();
        let sum: f32 = k.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-5);
        let s = k.stats();
        assert!((s.sigma_max - 1.0).abs() < 1e-5);
        let x: Vec<f32> = (0..256).map(|i| (i as f32 * 0.1).sin()).collect();
        let fast = apply_filter(&k, &x).unwrap();
        let slow = apply_filter_direct(&k, &x).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }

    proptest! {
        #[test]
        fn generated_kernels_are_normalized(t in 1usize..600, sigma in 0.05f64..500.0) {
            let k = FilterKernel::<f64>::gaussian(t, sigma).unwrap();
            prop_assert!(k.weights().iter().all(|&w| w >= 0.0));
            let sum: f64 = k.weights().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn stats_identities(t in 1usize..600, sigma in 0.05f64..500.0) {
            let k = FilterKernel::<f64>::gaussian(t, sigma).unwrap();
            let s = k.stats();
            let l2: f64 = k.weights().iter().map(|w| w * w).sum();
            prop_assert!((s.sigma_max - 1.0).abs() <= 1e-9);
            prop_assert!((s.l - l2).abs() <= 1e-12);
            prop_assert!((s.srank - t as f64 * l2 / (s.sigma_max * s.sigma_max)).abs() <= 1e-9);
            prop_assert!(s.srank >= 1.0 - 1e-9);
            prop_assert!(s.l > 0.0 && s.l <= 1.0 + 1e-12);
            prop_assert!(s.l * t as f64 >= 1.0 - 1e-9);
        }

        #[test]
        fn sigma_max_is_one_for_any_nonnegative_kernel(raw in proptest::collection::vec(0.0f64..1.0, 1..200)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let k = FilterKernel::new(raw.iter().map(|v| v / total).collect()).unwrap();
            prop_assert!((k.stats().sigma_max - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn frequency_matches_direct(
            x in proptest::collection::vec(-1e3f64..1e3, 1..512),
            sigma in 0.1f64..50.0,
        ) {
            let k = FilterKernel::<f64>::gaussian(x.len(), sigma).unwrap();
            let fast = apply_filter(&k, &x).unwrap();
            let slow = apply_filter_direct(&k, &x).unwrap();
            prop_assert!(rel_err(&fast, &slow) <= 1e-9);
        }

        #[test]
        fn convolution_is_linear(
            xy in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..256),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
            let k = FilterKernel::<f64>::gaussian(x.len(), 2.5).unwrap();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let lhs = apply_filter(&k, &combo).unwrap();
            let fx = apply_filter(&k, &x).unwrap();
            let fy = apply_filter(&k, &y).unwrap();
            for i in 0..x.len() {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }
    }
}
