//! High-probability L2 sensitivity bounds for subsampled and filtered count
//! signals.
//!
//! Two routes are provided:
//!
//! * Subsampling alone. An individual active on `I` time steps keeps
//!   `Binomial(I, p)` of them, so the sensitivity is `sqrt(I')` except with
//!   probability equal to the upper binomial tail beyond `I'`. The tail is
//!   evaluated exactly; Hoeffding's inequality gives a closed-form cap.
//! * Filtering then subsampling. The sensitivity is `sigma_max(B) sqrt(I)`
//!   where `B = diag(delta) A`, and a matrix Chernoff inequality bounds the
//!   probability that `sigma_max(B)` exceeds `alpha`.

pub mod montecarlo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterStats;

/// Resolution of the `alpha` search grid.
pub const ALPHA_GRID: f64 = 1e-6;
const ALPHA_GRID_STEPS: u64 = 1_000_000;

/// How a [`SensitivityBound`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    ExactBinomial,
    Hoeffding,
    MatrixChernoff,
    WorstCase,
}

impl BoundMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundMethod::ExactBinomial => "exact-binomial",
            BoundMethod::Hoeffding => "hoeffding",
            BoundMethod::MatrixChernoff => "matrix-chernoff",
            BoundMethod::WorstCase => "worst-case",
        }
    }
}

/// A claimed L2 sensitivity together with the probability, over the
/// subsampling draw, that the claim fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBound {
    pub delta2: f64,
    pub delta_prime: f64,
    pub method: BoundMethod,
}

impl SensitivityBound {
    /// `sqrt(I)` with certainty.
    pub fn worst_case(i: u32) -> Self {
        Self {
            delta2: (i as f64).sqrt(),
            delta_prime: 0.0,
            method: BoundMethod::WorstCase,
        }
    }

    /// `sqrt(I')` for the smallest `I'` whose exact tail meets `target`.
    pub fn exact_binomial(i: u32, p: f64, target: f64) -> Result<Self> {
        let i_prime = solve_i_prime(i, p, target)?;
        Ok(Self {
            delta2: (i_prime as f64).sqrt(),
            delta_prime: binomial_tail_delta(i, p, i_prime)?,
            method: BoundMethod::ExactBinomial,
        })
    }

    /// Closed-form Hoeffding cap, never exceeding the worst case `sqrt(I)`.
    pub fn hoeffding(i: u32, p: f64, delta_prime: f64) -> Result<Self> {
        let cap = hoeffding_i_prime(i, p, delta_prime)?;
        if cap >= i as f64 {
            return Ok(Self {
                method: BoundMethod::Hoeffding,
                ..Self::worst_case(i)
            });
        }
        Ok(Self {
            delta2: cap.sqrt(),
            delta_prime,
            method: BoundMethod::Hoeffding,
        })
    }

    /// `alpha sqrt(I)` with `alpha` from [`solve_alpha`].
    pub fn matrix_chernoff(stats: &FilterStats, i: u32, p: f64, target: f64) -> Result<Self> {
        let alpha = solve_alpha(stats, p, target)?;
        Ok(Self {
            delta2: alpha * (i as f64).sqrt(),
            delta_prime: chernoff_delta(stats, p, alpha)?,
            method: BoundMethod::MatrixChernoff,
        })
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParams(format!("{name}={p} is not in [0, 1]")));
    }
    Ok(())
}

fn check_target(target: f64) -> Result<()> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParams(format!(
            "failure probability target {target} is not in (0, 1)"
        )));
    }
    Ok(())
}

/// Upper tails `P(X > k)` of `X ~ Binomial(n, p)` for `k = 0..=n`.
///
/// The pmf is built by the ratio recurrence outward from the mode with the
/// mode weight pinned to 1, then normalized. No weight exceeds 1, so nothing
/// overflows for any `n`; weights far in the tails underflow to zero.
pub fn binomial_upper_tails(n: u32, p: f64) -> Result<Vec<f64>> {
    check_probability("p", p)?;
    let n_us = n as usize;
    let mut tails = vec![0.0; n_us + 1];
    if p == 0.0 {
        return Ok(tails);
    }
    if p == 1.0 {
        tails[..n_us].iter_mut().for_each(|t| *t = 1.0);
        return Ok(tails);
    }

    let mode = (((n as f64 + 1.0) * p).floor() as usize).min(n_us);
    let odds = p / (1.0 - p);
    let mut w = vec![0.0f64; n_us + 1];
    w[mode] = 1.0;
    for t in mode..n_us {
        w[t + 1] = w[t] * ((n_us - t) as f64 / (t + 1) as f64) * odds;
        if w[t + 1] == 0.0 {
            break;
        }
    }
    for t in (1..=mode).rev() {
        w[t - 1] = w[t] * (t as f64 / (n_us - t + 1) as f64) / odds;
        if w[t - 1] == 0.0 {
            break;
        }
    }
    let total = neumaier_sum(w.iter().copied());
    let pmf: Vec<f64> = w.iter().map(|v| v / total).collect();

    // Accumulate from whichever end keeps the partial sums small.
    let mut upper = 0.0;
    for k in (mode..n_us).rev() {
        upper += pmf[k + 1];
        tails[k] = upper.min(1.0);
    }
    let mut lower = 0.0;
    for k in 0..mode {
        lower += pmf[k];
        tails[k] = (1.0 - lower).clamp(0.0, 1.0);
    }
    Ok(tails)
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Probability that more than `i_prime` of an individual's `i` time steps
/// survive Poisson subsampling at rate `p`.
pub fn binomial_tail_delta(i: u32, p: f64, i_prime: u32) -> Result<f64> {
    if i == 0 {
        return Err(Error::InvalidParams("I must be positive".into()));
    }
    if i_prime > i {
        return Err(Error::InvalidParams(format!("I'={i_prime} exceeds I={i}")));
    }
    Ok(binomial_upper_tails(i, p)?[i_prime as usize])
}

/// Smallest `I'` whose exact tail is at most `target`.
pub fn solve_i_prime(i: u32, p: f64, target: f64) -> Result<u32> {
    if i == 0 {
        return Err(Error::InvalidParams("I must be positive".into()));
    }
    check_target(target)?;
    let tails = binomial_upper_tails(i, p)?;
    let k = tails
        .iter()
        .position(|&t| t <= target)
        .expect("tail beyond I is zero");
    Ok(k as u32)
}

/// Hoeffding cap on `I'`: `I p + sqrt((I / 2) ln(1 / delta'))`.
pub fn hoeffding_i_prime(i: u32, p: f64, delta_prime: f64) -> Result<f64> {
    if i == 0 {
        return Err(Error::InvalidParams("I must be positive".into()));
    }
    check_probability("p", p)?;
    if !(delta_prime > 0.0 && delta_prime <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "delta'={delta_prime} is not in (0, 1]"
        )));
    }
    let i = i as f64;
    Ok(i * p + (i / 2.0 * (1.0 / delta_prime).ln()).sqrt())
}

fn check_stats(stats: &FilterStats) -> Result<()> {
    let FilterStats { sigma_max, srank, l } = *stats;
    if !(sigma_max.is_finite() && sigma_max > 0.0) {
        return Err(Error::InvalidStats(format!("sigma_max={sigma_max}")));
    }
    if !(srank.is_finite() && srank >= 1.0 - 1e-9) {
        return Err(Error::InvalidStats(format!("srank={srank}")));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::InvalidStats(format!("L={l}")));
    }
    Ok(())
}

/// Log of the matrix Chernoff failure probability, unclamped.
///
/// With `r = alpha^2 / (p sigma_max^2) >= 1`:
/// `ln delta' = ln(2 srank) + (p sigma_max^2 / L) (r - 1 - r ln r)`.
pub fn chernoff_log_delta(stats: &FilterStats, p: f64, alpha: f64) -> Result<f64> {
    check_stats(stats)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParams(format!("p={p} is not in (0, 1]")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParams(format!("alpha={alpha} is not in (0, 1]")));
    }
    let scale = p * stats.sigma_max * stats.sigma_max;
    let alpha_sq = alpha * alpha;
    let r = alpha_sq / scale;
    // Admit alpha = sqrt(p) up to rounding of the square root.
    if r < 1.0 - 1e-12 {
        return Err(Error::AlphaBelowSamplingRate { alpha_sq, p: scale });
    }
    let r = r.max(1.0);
    Ok((2.0 * stats.srank).ln() + (scale / stats.l) * ((r - 1.0) - r * r.ln()))
}

/// Probability that `sigma_max(diag(delta) A)` exceeds `alpha`, clamped to
/// `[0, 1]`.
pub fn chernoff_delta(stats: &FilterStats, p: f64, alpha: f64) -> Result<f64> {
    Ok(chernoff_log_delta(stats, p, alpha)?.min(0.0).exp())
}

/// Smallest grid point `k` in `[lo, hi]` satisfying a monotone predicate
/// (false below some threshold, true at and above it). `pred(hi)` must hold.
pub(crate) fn smallest_grid_point<F>(mut lo: u64, mut hi: u64, mut pred: F) -> Result<u64>
where
    F: FnMut(u64) -> Result<bool>,
{
    if pred(lo)? {
        return Ok(lo);
    }
    // Invariant: pred(lo) false, pred(hi) true.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub(crate) fn alpha_at(k: u64) -> f64 {
    k as f64 / ALPHA_GRID_STEPS as f64
}

/// Lowest grid index whose alpha is admissible for the Chernoff bound.
pub(crate) fn alpha_floor_index(stats: &FilterStats, p: f64) -> Result<u64> {
    let floor = (p * stats.sigma_max * stats.sigma_max).sqrt();
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(Error::Unsatisfiable(format!(
            "alpha floor sqrt(p) sigma_max = {floor} lies outside (0, 1]"
        )));
    }
    let mut k = (floor * ALPHA_GRID_STEPS as f64).ceil() as u64;
    while chernoff_log_delta(stats, p, alpha_at(k)).is_err() && k < ALPHA_GRID_STEPS {
        k += 1;
    }
    Ok(k.clamp(1, ALPHA_GRID_STEPS))
}

/// Smallest `alpha` on the `1e-6` grid in `[sqrt(p), 1]` with
/// `chernoff_delta(alpha) <= target`. The grid search rounds up, so the
/// returned alpha never understates the sensitivity.
pub fn solve_alpha(stats: &FilterStats, p: f64, target: f64) -> Result<f64> {
    check_target(target)?;
    let hi = ALPHA_GRID_STEPS;
    if chernoff_delta(stats, p, 1.0)? > target {
        return Err(Error::Unsatisfiable(format!(
            "even alpha = 1 leaves delta' above {target}; shrink p or use the worst-case sensitivity"
        )));
    }
    let lo = alpha_floor_index(stats, p)?;
    let k = smallest_grid_point(lo, hi, |k| Ok(chernoff_delta(stats, p, alpha_at(k))? <= target))?;
    Ok(alpha_at(k))
}
