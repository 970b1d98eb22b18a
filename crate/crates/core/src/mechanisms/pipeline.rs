//! Building blocks shared by the release mechanisms.

use num_complex::Complex;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::rng::NoiseSource;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Kept indices of a Poisson subsample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleDraw {
    /// Strictly increasing kept indices in `[0, len)`.
    pub indices: Vec<usize>,
    pub p: f64,
    /// Length of the signal the draw was taken from.
    pub len: usize,
}

impl SubsampleDraw {
    /// Every index kept.
    pub fn full(len: usize) -> Self {
        Self {
            indices: (0..len).collect(),
            p: 1.0,
            len,
        }
    }

    /// Draws each index independently with probability `p`. The draw does not
    /// look at the data, so an empty draw may be reported and redrawn.
    pub fn draw<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParams(format!("p={p} is not in (0, 1]")));
        }
        let indices: Vec<usize> = (0..len).filter(|_| rng.random::<f64>() < p).collect();
        if indices.is_empty() {
            return Err(Error::EmptySubsample);
        }
        Ok(Self { indices, p, len })
    }

    pub fn gather<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: x.len(),
            });
        }
        Ok(self.indices.iter().map(|&i| x[i]).collect())
    }
}

/// Poisson subsample of `x` at rate `p`: the draw and the kept values in
/// index order.
pub fn poisson_subsample<S: Scalar, R: Rng + ?Sized>(
    x: &[S],
    p: f64,
    rng: &mut R,
) -> Result<(SubsampleDraw, Vec<S>)> {
    let draw = SubsampleDraw::draw(x.len(), p, rng)?;
    let values = draw.gather(x)?;
    Ok((draw, values))
}

/// Linear interpolation of `z` (values at `draw.indices`) back onto
/// `0..len`. Outside the kept range the nearest kept value is copied; at
/// kept indices `z` is copied unchanged.
pub fn interpolate<S: Scalar>(draw: &SubsampleDraw, z: &[S]) -> Result<Vec<S>> {
    let j = &draw.indices;
    if j.is_empty() {
        return Err(Error::EmptyDraw);
    }
    if z.len() != j.len() {
        return Err(Error::LengthMismatch {
            expected: j.len(),
            actual: z.len(),
        });
    }
    let mut out = vec![S::zero(); draw.len];
    out[..j[0]].iter_mut().for_each(|v| *v = z[0]);
    for (seg, w) in j.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let (za, zb) = (z[seg], z[seg + 1]);
        let span = (b - a) as f64;
        out[a] = za;
        for (t, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let frac = S::of((t - a) as f64 / span);
            *slot = za + (zb - za) * frac;
        }
    }
    let last = *j.last().unwrap();
    out[last..].iter_mut().for_each(|v| *v = z[z.len() - 1]);
    Ok(out)
}

/// Adds `sigma * N(0, 1)` to each value.
pub fn perturb<S: Scalar, N: NoiseSource + ?Sized>(values: &mut [S], sigma: f64, noise: &mut N) {
    for v in values.iter_mut() {
        *v = *v + S::of(sigma * noise.standard_normal());
    }
}

/// Whether frequency bin `j` of a length-`t` transform is among the `k`
/// lowest (DC plus the `k - 1` next, with conjugate partners).
pub fn dft_retains(j: usize, t: usize, k: usize) -> bool {
    j.min(t - j) < k
}

/// Unitary forward DFT.
pub fn orthonormal_dft<S: Scalar>(x: &[S]) -> Vec<Complex<S>> {
    let t = x.len();
    let mut buf: Vec<Complex<S>> = x.iter().map(|&v| Complex::new(v, S::zero())).collect();
    FftPlanner::<S>::new().plan_fft_forward(t).process(&mut buf);
    let scale = S::one() / S::of((t as f64).sqrt());
    buf.iter_mut().for_each(|c| *c = *c * scale);
    buf
}

/// Unitary inverse DFT, keeping real parts.
pub fn orthonormal_idft_real<S: Scalar>(mut spectrum: Vec<Complex<S>>) -> Vec<S> {
    let t = spectrum.len();
    FftPlanner::<S>::new().plan_fft_inverse(t).process(&mut spectrum);
    let scale = S::one() / S::of((t as f64).sqrt());
    spectrum.into_iter().map(|c| c.re * scale).collect()
}

/// Low-pass DFT release: keep the `k` lowest frequencies, perturb each real
/// degree of freedom of the kept coefficients by `sigma * N(0, 1)`, zero the
/// rest, and invert.
///
/// The real parameters are the DC term, the Nyquist term for even `T`, and
/// `sqrt(2) Re`, `sqrt(2) Im` of each conjugate pair, which together carry the
/// same l2 norm as the kept complex coefficients.
pub fn dft_lowpass<S: Scalar, N: NoiseSource + ?Sized>(
    x: &[S],
    k: usize,
    sigma: f64,
    noise: &mut N,
) -> Result<Vec<S>> {
    let t = x.len();
    if k == 0 || k > t {
        return Err(Error::InvalidK { k, t });
    }
    let mut spec = orthonormal_dft(x);
    let pair_scale = sigma / std::f64::consts::SQRT_2;
    for j in 0..=t / 2 {
        let mirror = (t - j) % t;
        if !dft_retains(j, t, k) {
            spec[j] = Complex::new(S::zero(), S::zero());
            spec[mirror] = Complex::new(S::zero(), S::zero());
            continue;
        }
        if j == mirror {
            spec[j] = Complex::new(spec[j].re + S::of(sigma * noise.standard_normal()), S::zero());
        } else {
            let re = S::of(pair_scale * noise.standard_normal());
            let im = S::of(pair_scale * noise.standard_normal());
            let c = spec[j] + Complex::new(re, im);
            spec[j] = c;
            spec[mirror] = c.conj();
        }
    }
    Ok(orthonormal_idft_real(spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::rng::ZeroNoise;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn draw(indices: Vec<usize>, len: usize) -> SubsampleDraw {
        SubsampleDraw { indices, p: 0.5, len }
    }

    #[test]
    fn interpolate_midpoint() {
        let out = interpolate(&draw(vec![0, 2], 3), &[0.0, 4.0]).unwrap();
        assert_eq!(out, vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn interpolate_single_point_copies_nearest() {
        let out = interpolate(&draw(vec![1], 3), &[7.0]).unwrap();
        assert_eq!(out, vec![7.0, 7.0, 7.0]);
    }

    #[test]
    fn interpolate_extrapolates_flat() {
        let out = interpolate(&draw(vec![2, 4], 7), &[1.0, 3.0]).unwrap();
        assert_eq!(out, vec![1.0, 1.0, 1.0, 2.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn interpolate_full_index_is_identity() {
        let z = vec![3.5, -1.25, 8.0, 0.1];
        assert_eq!(interpolate(&SubsampleDraw::full(4), &z).unwrap(), z);
    }

    #[test]
    fn interpolate_errors() {
        assert_eq!(interpolate::<f64>(&draw(vec![], 3), &[]), Err(Error::EmptyDraw));
        assert!(matches!(
            interpolate(&draw(vec![0, 1], 3), &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn subsample_full_rate_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = [1.0, 2.0, 3.0];
        let (d, v) = poisson_subsample(&x, 1.0, &mut rng).unwrap();
        assert_eq!(d.indices, vec![0, 1, 2]);
        assert_eq!(v, x.to_vec());
    }

    #[test]
    fn subsample_rate_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = vec![0.0f64; 100_000];
        let (d, _) = poisson_subsample(&x, 0.5, &mut rng).unwrap();
        let frac = d.indices.len() as f64 / x.len() as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn subsample_is_seeded() {
        let x = vec![0.0f64; 500];
        let a = poisson_subsample(&x, 0.2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap().0;
        let b = poisson_subsample(&x, 0.2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_can_be_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            poisson_subsample(&[1.0f64], 1e-12, &mut rng).unwrap_err(),
            Error::EmptySubsample
        );
        assert!(poisson_subsample(&[1.0f64], 0.0, &mut rng).is_err());
    }

    #[test]
    fn dft_full_band_round_trip() {
        let x: Vec<f64> = (0..37).map(|i| (i * i % 11) as f64).collect();
        let out = dft_lowpass(&x, 37, 5.0, &mut ZeroNoise).unwrap();
        for (a, b) in out.iter().zip(&x) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn dft_dc_only_gives_mean() {
        let x = [1.0, 5.0, 2.0, 8.0];
        let out = dft_lowpass(&x, 1, 5.0, &mut ZeroNoise).unwrap();
        for v in out {
            assert_abs_diff_eq!(v, 4.0, epsilon = 1e-12);
        }
        let c = dft_lowpass(&[6.5; 9], 1, 1.0, &mut ZeroNoise).unwrap();
        for v in c {
            assert_abs_diff_eq!(v, 6.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn dft_invalid_k() {
        assert_eq!(
            dft_lowpass(&[1.0, 2.0], 0, 1.0, &mut ZeroNoise),
            Err(Error::InvalidK { k: 0, t: 2 })
        );
        assert!(dft_lowpass(&[1.0, 2.0], 3, 1.0, &mut ZeroNoise).is_err());
    }

    #[test]
    fn dft_retained_counts() {
        // T = 10, k = 3 keeps bins {0, 1, 9, 2, 8}.
        let kept: Vec<usize> = (0..10).filter(|&j| dft_retains(j, 10, 3)).collect();
        assert_eq!(kept, vec![0, 1, 2, 8, 9]);
    }

    proptest! {
        #[test]
        fn interpolation_passes_through_kept_values(
            mask in proptest::collection::vec(any::<bool>(), 1..200),
            seed in any::<u64>(),
        ) {
            let indices: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
            prop_assume!(!indices.is_empty());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = indices.iter().map(|_| rng.random::<f64>() * 1e3 - 500.0).collect();
            let d = draw(indices.clone(), mask.len());
            let out = interpolate(&d, &z).unwrap();
            for (pos, &i) in indices.iter().enumerate() {
                prop_assert_eq!(out[i].to_bits(), z[pos].to_bits());
            }
        }

        #[test]
        fn dft_residual_shrinks_with_k(x in proptest::collection::vec(-100.0f64..100.0, 2..80)) {
            let t = x.len();
            let mut prev = f64::INFINITY;
            for k in 1..=t {
                let out = dft_lowpass(&x, k, 1.0, &mut ZeroNoise).unwrap();
                let r: f64 = out.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(r <= prev + 1e-9);
                prev = r;
            }
            prop_assert!(prev <= 1e-9 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt()));
        }
    }
}
