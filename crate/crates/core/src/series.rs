//! Count time series, derived real-valued signals, and decimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A length-`T` aggregate count signal with its sampling metadata.
///
/// Values are stored as reals so that filtered or noised outputs can reuse
/// the same buffer type. The integer invariant is checked at ingestion
/// boundaries through [`validate_series`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct CountSeries<S = f64> {
    values: Vec<S>,
    period_seconds: f64,
    origin: i64,
}

impl<S: Scalar> CountSeries<S> {
    /// Builds a series sampled once per abstract time unit, starting at index 0.
    ///
    /// Nothing is validated here; call [`validate_series`] where the
    /// invariants must hold.
    pub fn new(values: Vec<S>) -> Self {
        Self {
            values,
            period_seconds: 1.0,
            origin: 0,
        }
    }

    pub fn with_sampling(values: Vec<S>, period_seconds: f64, origin: i64) -> Result<Self> {
        if !period_seconds.is_finite() || period_seconds <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "sampling period must be positive, got {period_seconds}"
            )));
        }
        Ok(Self {
            values,
            period_seconds,
            origin,
        })
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn period_seconds(&self) -> f64 {
        self.period_seconds
    }

    /// Epoch seconds of the first sample, or 0 for abstractly indexed series.
    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn to_signal(&self) -> Signal<S> {
        Signal::new(self.values.clone())
    }
}

/// Real-valued signal, optionally carrying the original time indices of
/// each sample (present after subsampling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct Signal<S = f64> {
    values: Vec<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index_map: Option<Vec<usize>>,
}

impl<S: Scalar> Signal<S> {
    pub fn new(values: Vec<S>) -> Self {
        Self {
            values,
            index_map: None,
        }
    }

    /// Builds a subsampled signal. `index_map` must be strictly increasing,
    /// bounded by `original_len`, and as long as `values`.
    pub fn with_index_map(
        values: Vec<S>,
        index_map: Vec<usize>,
        original_len: usize,
    ) -> Result<Self> {
        if index_map.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: values.len(),
                actual: index_map.len(),
            });
        }
        if index_map.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams(
                "index map must be strictly increasing".into(),
            ));
        }
        if index_map.last().is_some_and(|&last| last >= original_len) {
            return Err(Error::InvalidParams(format!(
                "index map exceeds original length {original_len}"
            )));
        }
        Ok(Self {
            values,
            index_map: Some(index_map),
        })
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn index_map(&self) -> Option<&[usize]> {
        self.index_map.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Participation limit of a single individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipationLimit {
    /// Maximum number of distinct time steps one individual contributes to.
    pub steps: u32,
    /// Maximum contributions per time step.
    #[serde(default = "one")]
    pub per_step: u32,
}

fn one() -> u32 {
    1
}

impl ParticipationLimit {
    pub fn new(steps: u32) -> Result<Self> {
        Self::with_per_step(steps, 1)
    }

    pub fn with_per_step(steps: u32, per_step: u32) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParams("participation limit I must be positive".into()));
        }
        if per_step == 0 {
            return Err(Error::InvalidParams("per-step participation M must be positive".into()));
        }
        Ok(Self { steps, per_step })
    }

    /// Checks `I <= T` for a series of length `len`.
    pub fn check_against(&self, len: usize) -> Result<()> {
        if self.steps as usize > len {
            return Err(Error::InvalidParams(format!(
                "participation limit I={} exceeds series length T={len}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Whether [`validate_series`] should insist on integral counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrality {
    /// Raw ingested counts: every value must be a nonnegative integer.
    Required,
    /// Derived or synthetic series: nonnegative reals are accepted.
    #[default]
    Relaxed,
}

/// Confirms the series invariants, naming the first violation.
pub fn validate_series<S: Scalar>(series: &CountSeries<S>, integrality: Integrality) -> Result<()> {
    validate_values(series.values(), integrality)
}

pub(crate) fn validate_values<S: Scalar>(values: &[S], integrality: Integrality) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { index });
        }
        if v < S::zero() {
            return Err(Error::NegativeValue {
                index,
                value: v.as_f64(),
            });
        }
        if integrality == Integrality::Required && v.fract() != S::zero() {
            return Err(Error::NonIntegerCount {
                index,
                value: v.as_f64(),
            });
        }
    }
    Ok(())
}

/// Converts a relative frequency `f` into its integer stride `1/f`.
pub fn stride_for_frequency(f: f64) -> Result<usize> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::NonIntegerStride(f));
    }
    let inv = 1.0 / f;
    let stride = inv.round();
    if (inv - stride).abs() > 1e-9 * stride {
        return Err(Error::NonIntegerStride(f));
    }
    Ok(stride as usize)
}

/// Keeps every `(1/f)`-th sample starting at index 0.
pub fn decimate<S: Scalar>(series: &CountSeries<S>, f: f64) -> Result<CountSeries<S>> {
    let stride = stride_for_frequency(f)?;
    Ok(decimate_by(series, stride))
}

/// Keeps every `stride`-th sample starting at index 0; the result has
/// `ceil(T / stride)` samples and a period `stride` times longer.
pub fn decimate_by<S: Scalar>(series: &CountSeries<S>, stride: usize) -> CountSeries<S> {
    assert!(stride >= 1, "stride must be positive");
    CountSeries {
        values: series.values.iter().step_by(stride).copied().collect(),
        period_seconds: series.period_seconds * stride as f64,
        origin: series.origin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validate_accepts_minimal_series() {
        let s = CountSeries::new(vec![3.0, 0.0, 5.0]);
        assert_eq!(validate_series(&s, Integrality::Required), Ok(()));
    }

    #[test]
    fn validate_rejects_empty() {
        let s: CountSeries = CountSeries::new(vec![]);
        assert_eq!(validate_series(&s, Integrality::Relaxed), Err(Error::EmptySeries));
    }

    #[test]
    fn validate_rejects_negative() {
        let s = CountSeries::new(vec![1.0, -2.0]);
        assert_eq!(
            validate_series(&s, Integrality::Relaxed),
            Err(Error::NegativeValue { index: 1, value: -2.0 })
        );
    }

    #[test]
    fn validate_integrality_only_when_required() {
        let s = CountSeries::new(vec![1.5f32, 2.0]);
        assert!(validate_series(&s, Integrality::Relaxed).is_ok());
        assert!(matches!(
            validate_series(&s, Integrality::Required),
            Err(Error::NonIntegerCount { index: 0, .. })
        ));
    }

    #[test]
    fn decimate_stride_two() {
        let s = CountSeries::new((0..8).map(f64::from).collect());
        let d = decimate(&s, 0.5).unwrap();
        assert_eq!(d.values(), &[0.0, 2.0, 4.0, 6.0]);
        assert_eq!(d.period_seconds(), 2.0);
    }

    #[test]
    fn decimate_identity() {
        let s = CountSeries::new(vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(decimate(&s, 1.0).unwrap(), s);
    }

    #[test]
    fn decimate_length_is_ceiling() {
        let s = CountSeries::new(vec![0.0f64; 10_000]);
        assert_eq!(decimate(&s, 1.0 / 64.0).unwrap().len(), 157);
    }

    #[test]
    fn decimate_rejects_non_integer_stride() {
        let s = CountSeries::new(vec![0.0; 4]);
        assert_eq!(decimate(&s, 0.3), Err(Error::NonIntegerStride(0.3)));
        assert!(decimate(&s, 0.0).is_err());
        assert!(decimate(&s, 1.5).is_err());
    }

    #[test]
    fn index_map_must_be_increasing_and_bounded() {
        assert!(Signal::with_index_map(vec![1.0, 2.0], vec![0, 3], 4).is_ok());
        assert!(Signal::with_index_map(vec![1.0, 2.0], vec![3, 3], 4).is_err());
        assert!(Signal::with_index_map(vec![1.0, 2.0], vec![0, 4], 4).is_err());
        assert!(Signal::with_index_map(vec![1.0], vec![0, 1], 4).is_err());
    }

    #[test]
    fn participation_limit_checks() {
        assert!(ParticipationLimit::new(0).is_err());
        assert!(ParticipationLimit::with_per_step(3, 0).is_err());
        let lim = ParticipationLimit::new(5).unwrap();
        assert!(lim.check_against(5).is_ok());
        assert!(lim.check_against(4).is_err());
    }

    proptest! {
        #[test]
        fn decimate_composes(values in proptest::collection::vec(0u32..1000, 1..300), a in 1usize..6, b in 1usize..6) {
            let s = CountSeries::new(values.into_iter().map(f64::from).collect());
            let twice = decimate_by(&decimate_by(&s, a), b);
            let once = decimate_by(&s, a * b);
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn decimate_by_one_is_identity(values in proptest::collection::vec(0u32..1000, 1..100)) {
            let s = CountSeries::new(values.into_iter().map(f64::from).collect());
            prop_assert_eq!(decimate(&s, 1.0).unwrap(), s);
        }
    }
}
