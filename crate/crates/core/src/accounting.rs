//! Composition of the released guarantee from the base Gaussian mechanism
//! guarantee and the probability that the reduced sensitivity claim fails.
//!
//! If the noise is calibrated for sensitivity `m sqrt(I)` with `m <= 1`
//! (`m = alpha`, or `m = sqrt(I'/I)` for subsampling alone) and that claim
//! fails with probability `delta'`, the release is
//! `(eps, delta + delta' (exp(eps / m) - exp(eps)))`-DP. When an individual
//! participates in `c I` steps for some `c > 1`, `eps` is replaced by
//! `sqrt(c) eps` throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterStats;
use crate::sensitivity::{
    alpha_at, alpha_floor_index, binomial_upper_tails, chernoff_delta, smallest_grid_point,
};

/// Default share of the delta budget given to the base Gaussian mechanism.
pub const DEFAULT_DELTA_SPLIT: f64 = 0.5;

/// Source of the noise multiplier `m` in `sigma ∝ m sqrt(I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Multiplier {
    /// Filtered route: `m = alpha`.
    Alpha { alpha: f64 },
    /// Subsampling alone: `m = sqrt(I' / I)`.
    ParticipationRatio { i: u32, i_prime: u32 },
    /// Full sensitivity `sqrt(I)`, no failure probability.
    WorstCase,
}

impl Multiplier {
    /// The factor `m` multiplying `sqrt(I)`.
    pub fn factor(&self) -> f64 {
        match *self {
            Multiplier::Alpha { alpha } => alpha,
            Multiplier::ParticipationRatio { i, i_prime } => (i_prime as f64 / i as f64).sqrt(),
            Multiplier::WorstCase => 1.0,
        }
    }

    /// `1 / m - 1`, computed from the integer ratio when available so that
    /// `I/I' = 4` and `alpha = 0.5` give identical bits.
    fn excess(&self) -> f64 {
        match *self {
            Multiplier::Alpha { alpha } => 1.0 / alpha - 1.0,
            Multiplier::ParticipationRatio { i, i_prime } => (i as f64 / i_prime as f64).sqrt() - 1.0,
            Multiplier::WorstCase => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Multiplier::Alpha { alpha } if !(alpha > 0.0 && alpha <= 1.0) => Err(
                Error::InvalidParams(format!("alpha={alpha} is not in (0, 1]")),
            ),
            Multiplier::ParticipationRatio { i, i_prime } if i_prime == 0 || i_prime > i => Err(
                Error::InvalidParams(format!("need 1 <= I'={i_prime} <= I={i}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Everything needed to recompute a guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base_epsilon: f64,
    pub base_delta: f64,
    pub delta_prime: f64,
    pub multiplier: Multiplier,
    /// Participation inflation factor; 1 when the participation limit holds.
    pub c: f64,
}

/// The `(epsilon, delta)` actually certified for a release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyGuarantee {
    pub epsilon_total: f64,
    pub delta_total: f64,
    /// Set when the composed delta reached 1 and was clamped.
    pub vacuous: bool,
    pub provenance: Provenance,
}

impl Provenance {
    /// Recomputes the guarantee through the same arithmetic as the original
    /// composition.
    pub fn recompute(&self) -> Result<PrivacyGuarantee> {
        compose(*self)
    }
}

impl PrivacyGuarantee {
    /// Penalty added to the base delta.
    pub fn penalty(&self) -> f64 {
        self.delta_total - self.provenance.base_delta
    }

    pub fn satisfies(&self, epsilon: f64, delta: f64) -> bool {
        !self.vacuous && self.epsilon_total <= epsilon && self.delta_total <= delta
    }
}

fn penalty_term(epsilon: f64, multiplier: &Multiplier, delta_prime: f64) -> f64 {
    if delta_prime == 0.0 {
        return 0.0;
    }
    // exp(eps/m) - exp(eps) = exp(eps) * expm1(eps (1/m - 1))
    delta_prime * epsilon.exp() * (epsilon * multiplier.excess()).exp_m1()
}

fn compose(prov: Provenance) -> Result<PrivacyGuarantee> {
    let Provenance {
        base_epsilon,
        base_delta,
        delta_prime,
        multiplier,
        c,
    } = prov;
    if !(base_epsilon > 0.0 && base_epsilon.is_finite()) {
        return Err(Error::InvalidParams(format!("epsilon={base_epsilon} must be positive")));
    }
    if !(0.0..1.0).contains(&base_delta) {
        return Err(Error::InvalidParams(format!("delta={base_delta} is not in [0, 1)")));
    }
    if !(0.0..=1.0).contains(&delta_prime) {
        return Err(Error::InvalidParams(format!("delta'={delta_prime} is not in [0, 1]")));
    }
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::InvalidC(c));
    }
    multiplier.validate()?;

    let epsilon = if c == 1.0 { base_epsilon } else { c.sqrt() * base_epsilon };
    let raw = base_delta + penalty_term(epsilon, &multiplier, delta_prime);
    let vacuous = raw.is_nan() || raw >= 1.0;
    Ok(PrivacyGuarantee {
        epsilon_total: epsilon,
        delta_total: if vacuous { 1.0 } else { raw },
        vacuous,
        provenance: prov,
    })
}

/// Guarantee of a mechanism calibrated to the full sensitivity.
pub fn compose_worst_case(epsilon: f64, delta: f64) -> Result<PrivacyGuarantee> {
    compose(Provenance {
        base_epsilon: epsilon,
        base_delta: delta,
        delta_prime: 0.0,
        multiplier: Multiplier::WorstCase,
        c: 1.0,
    })
}

/// Filtered and subsampled release with noise multiplier `alpha`:
/// `delta_total = delta + delta' (exp(eps / alpha) - exp(eps))`.
pub fn compose_filtered(
    epsilon: f64,
    delta: f64,
    alpha: f64,
    delta_prime: f64,
) -> Result<PrivacyGuarantee> {
    compose(Provenance {
        base_epsilon: epsilon,
        base_delta: delta,
        delta_prime,
        multiplier: Multiplier::Alpha { alpha },
        c: 1.0,
    })
}

/// Subsampled release calibrated to `sqrt(I')`:
/// `delta_total = delta + delta' (exp(sqrt(I / I') eps) - exp(eps))`.
pub fn compose_unfiltered(
    epsilon: f64,
    delta: f64,
    i: u32,
    i_prime: u32,
    delta_prime: f64,
) -> Result<PrivacyGuarantee> {
    compose(Provenance {
        base_epsilon: epsilon,
        base_delta: delta,
        delta_prime,
        multiplier: Multiplier::ParticipationRatio { i, i_prime },
        c: 1.0,
    })
}

/// Guarantee of the filtered release when individuals participate in up to
/// `c I` steps, `c > 1`.
pub fn degrade(
    epsilon: f64,
    delta: f64,
    alpha: f64,
    delta_prime: f64,
    c: f64,
) -> Result<PrivacyGuarantee> {
    if c.is_nan() || c <= 1.0 {
        return Err(Error::InvalidC(c));
    }
    compose(Provenance {
        base_epsilon: epsilon,
        base_delta: delta,
        delta_prime,
        multiplier: Multiplier::Alpha { alpha },
        c,
    })
}

/// Which sensitivity route a budget is solved for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetRoute {
    /// Subsampling alone; solves for `I'`.
    Subsample { i: u32, p: f64 },
    /// Filter then subsample; solves for `alpha`.
    Filtered { stats: FilterStats, p: f64 },
}

/// Parameters meeting an `(epsilon, delta)` target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSolution {
    pub multiplier: Multiplier,
    pub base_delta: f64,
    pub delta_prime: f64,
    pub guarantee: PrivacyGuarantee,
}

/// Splits `delta_target` into a base delta (`split * delta_target`) and a
/// penalty allowance, then finds the smallest multiplier whose penalty fits
/// the allowance. The result is recomposed and checked against the target.
pub fn budget_solve(
    epsilon: f64,
    delta_target: f64,
    route: BudgetRoute,
    split: f64,
) -> Result<BudgetSolution> {
    if !(delta_target > 0.0 && delta_target < 1.0) {
        return Err(Error::InvalidParams(format!(
            "delta target {delta_target} is not in (0, 1)"
        )));
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidParams(format!("delta split {split} is not in (0, 1)")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParams(format!("epsilon={epsilon} must be positive")));
    }
    let base_delta = delta_target * split;
    let allowance = delta_target - base_delta;

    let (multiplier, delta_prime) = match route {
        BudgetRoute::Subsample { i, p } => {
            if i == 0 {
                return Err(Error::InvalidParams("I must be positive".into()));
            }
            let tails = binomial_upper_tails(i, p)?;
            let i_prime = (1..=i)
                .find(|&k| {
                    let m = Multiplier::ParticipationRatio { i, i_prime: k };
                    penalty_term(epsilon, &m, tails[k as usize]) <= allowance
                })
                .expect("I' = I carries no penalty");
            (
                Multiplier::ParticipationRatio { i, i_prime },
                tails[i_prime as usize],
            )
        }
        BudgetRoute::Filtered { stats, p } => {
            let lo = alpha_floor_index(&stats, p)?;
            let k = smallest_grid_point(lo, 1_000_000, |k| {
                let alpha = alpha_at(k);
                let d = chernoff_delta(&stats, p, alpha)?;
                Ok(penalty_term(epsilon, &Multiplier::Alpha { alpha }, d) <= allowance)
            })?;
            let alpha = alpha_at(k);
            (Multiplier::Alpha { alpha }, chernoff_delta(&stats, p, alpha)?)
        }
    };

    let guarantee = compose(Provenance {
        base_epsilon: epsilon,
        base_delta,
        delta_prime,
        multiplier,
        c: 1.0,
    })?;
    if !guarantee.satisfies(epsilon, delta_target) {
        return Err(Error::Unsatisfiable(format!(
            "recomposed delta {} exceeds target {delta_target}",
            guarantee.delta_total
        )));
    }
    Ok(BudgetSolution {
        multiplier,
        base_delta,
        delta_prime,
        guarantee,
    })
}
