//! Differentially private release mechanisms for count time series.
//!
//! * `gaussian`: adds noise for sensitivity `sqrt(I)` to every time step.
//! * `dft`: perturbs the `k` lowest-frequency coefficients of the unitary DFT
//!   and drops the rest.
//! * `subsample`: Poisson-subsamples time steps, adds noise for the reduced
//!   sensitivity `sqrt(I')`, and linearly interpolates back to length `T`.
//! * `filter-subsample`: filters with a circulant kernel first, then proceeds
//!   as `subsample` with sensitivity `alpha sqrt(I)`.

pub mod pipeline;
pub mod rng;

use serde::{Deserialize, Serialize};

use crate::accounting::{
    budget_solve, compose_filtered, compose_unfiltered, compose_worst_case, BudgetRoute,
    Multiplier, PrivacyGuarantee, DEFAULT_DELTA_SPLIT,
};
use crate::error::{Error, Result};
use crate::filters::{apply_filter, FilterKernel, FilterStats};
use crate::scalar::Scalar;
use crate::sensitivity::{
    binomial_tail_delta, chernoff_delta, solve_alpha, solve_i_prime, BoundMethod,
};
use crate::series::{validate_values, CountSeries, Integrality, Signal};

pub use pipeline::{interpolate, poisson_subsample, SubsampleDraw};
pub use rng::{GaussianNoise, NoiseSource, SeedStreams, Stream, ZeroNoise};

/// Default number of retained DFT coefficients.
pub const DEFAULT_DFT_K: usize = 20;

/// Redraws allowed by [`release_with_redraw`] when a subsample comes out empty.
pub const MAX_SUBSAMPLE_REDRAWS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Gaussian,
    Dft,
    Subsample,
    FilterSubsample,
}

impl MechanismKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MechanismKind::Gaussian => "gaussian",
            MechanismKind::Dft => "dft",
            MechanismKind::Subsample => "subsample",
            MechanismKind::FilterSubsample => "filter-subsample",
        }
    }

    pub fn is_subsampling(self) -> bool {
        matches!(self, MechanismKind::Subsample | MechanismKind::FilterSubsample)
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(MechanismKind::Gaussian),
            "dft" => Ok(MechanismKind::Dft),
            "subsample" => Ok(MechanismKind::Subsample),
            "filter-subsample" => Ok(MechanismKind::FilterSubsample),
            other => Err(Error::InvalidConfig(format!("unknown mechanism '{other}'"))),
        }
    }
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Filter applied before subsampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    Identity,
    Gaussian { sigma_g: f64 },
}

impl KernelSpec {
    pub fn build<S: Scalar>(&self, t: usize) -> Result<FilterKernel<S>> {
        match *self {
            KernelSpec::Identity => FilterKernel::identity(t),
            KernelSpec::Gaussian { sigma_g } => FilterKernel::gaussian(t, sigma_g),
        }
    }

    pub fn sigma_g(&self) -> Option<f64> {
        match *self {
            KernelSpec::Identity => None,
            KernelSpec::Gaussian { sigma_g } => Some(sigma_g),
        }
    }
}

/// How the noise multiplier of a subsampling mechanism is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Calibration {
    /// `delta` is the total target; a share `split` goes to the Gaussian
    /// mechanism and the rest bounds the sensitivity failure penalty.
    Budget { split: f64 },
    /// Fixed `alpha`. For `subsample`, `I' = ceil(alpha^2 I)`.
    Alpha { alpha: f64 },
    /// Fixed `I'` (`subsample` only).
    IPrime { i_prime: u32 },
    /// Smallest multiplier whose failure probability is at most `delta_prime`.
    DeltaPrime { delta_prime: f64 },
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration::Budget {
            split: DEFAULT_DELTA_SPLIT,
        }
    }
}

/// Everything a release needs besides the input series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    pub epsilon: f64,
    pub delta: f64,
    /// Participation limit `I`.
    #[serde(rename = "I")]
    pub i: u32,
    /// Poisson subsampling rate (subsampling kinds only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Pre-subsampling filter (`filter-subsample` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    /// Retained coefficients (`dft` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub calibration: Calibration,
    #[serde(default)]
    pub seed: u64,
}

impl MechanismConfig {
    pub fn gaussian(epsilon: f64, delta: f64, i: u32, seed: u64) -> Self {
        Self {
            kind: MechanismKind::Gaussian,
            epsilon,
            delta,
            i,
            p: None,
            kernel: None,
            k: None,
            calibration: Calibration::default(),
            seed,
        }
    }

    pub fn dft(epsilon: f64, delta: f64, i: u32, k: usize, seed: u64) -> Self {
        Self {
            kind: MechanismKind::Dft,
            k: Some(k),
            ..Self::gaussian(epsilon, delta, i, seed)
        }
    }

    pub fn subsample(epsilon: f64, delta: f64, i: u32, p: f64, seed: u64) -> Self {
        Self {
            kind: MechanismKind::Subsample,
            p: Some(p),
            ..Self::gaussian(epsilon, delta, i, seed)
        }
    }

    pub fn filter_subsample(
        epsilon: f64,
        delta: f64,
        i: u32,
        p: f64,
        kernel: KernelSpec,
        seed: u64,
    ) -> Self {
        Self {
            kind: MechanismKind::FilterSubsample,
            p: Some(p),
            kernel: Some(kernel),
            ..Self::gaussian(epsilon, delta, i, seed)
        }
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.calibration = calibration;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks parameter ranges and that exactly the fields relevant to
    /// `kind` are set.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidEpsilon(self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta={} is not in (0, 1)", self.delta)));
        }
        if self.i == 0 {
            return Err(Error::InvalidConfig("I must be positive".into()));
        }
        let kind = self.kind;
        let field_error =
            |field: &str| Error::InvalidConfig(format!("field '{field}' does not apply to {kind}"));
        let missing = |field: &str| Error::InvalidConfig(format!("{kind} requires '{field}'"));

        match kind {
            MechanismKind::Gaussian | MechanismKind::Dft => {
                if self.p.is_some() {
                    return Err(field_error("p"));
                }
                if self.kernel.is_some() {
                    return Err(field_error("kernel"));
                }
                if self.calibration != Calibration::default() {
                    return Err(field_error("calibration"));
                }
                if kind == MechanismKind::Gaussian && self.k.is_some() {
                    return Err(field_error("k"));
                }
                if self.k == Some(0) {
                    return Err(Error::InvalidK { k: 0, t: 0 });
                }
            }
            MechanismKind::Subsample | MechanismKind::FilterSubsample => {
                let p = self.p.ok_or_else(|| missing("p"))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidConfig(format!("p={p} is not in (0, 1]")));
                }
                if self.k.is_some() {
                    return Err(field_error("k"));
                }
                match (kind, self.kernel) {
                    (MechanismKind::Subsample, Some(_)) => return Err(field_error("kernel")),
                    (MechanismKind::FilterSubsample, None) => return Err(missing("kernel")),
                    _ => {}
                }
                match self.calibration {
                    Calibration::Budget { split } if !(split > 0.0 && split < 1.0) => {
                        return Err(Error::InvalidConfig(format!("delta split {split} is not in (0, 1)")))
                    }
                    Calibration::Alpha { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                        return Err(Error::InvalidConfig(format!("alpha={alpha} is not in (0, 1]")))
                    }
                    Calibration::IPrime { .. } if kind == MechanismKind::FilterSubsample => {
                        return Err(field_error("calibration.i_prime"))
                    }
                    Calibration::IPrime { i_prime } if i_prime == 0 || i_prime > self.i => {
                        return Err(Error::InvalidConfig(format!(
                            "I'={i_prime} must lie in [1, I={}]",
                            self.i
                        )))
                    }
                    Calibration::DeltaPrime { delta_prime }
                        if !(delta_prime > 0.0 && delta_prime < 1.0) =>
                    {
                        return Err(Error::InvalidConfig(format!(
                            "delta'={delta_prime} is not in (0, 1)"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Gaussian mechanism scale `sigma = sqrt(2 ln(1.25 / delta)) * delta2 / epsilon`.
pub fn gaussian_noise_sigma(delta2: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams(format!("delta={delta} is not in (0, 1)")));
    }
    if !(delta2 >= 0.0 && delta2.is_finite()) {
        return Err(Error::InvalidParams(format!("sensitivity {delta2} must be nonnegative")));
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() * delta2 / epsilon)
}

/// Resolved parameters of a release, as recorded in the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub kind: MechanismKind,
    pub epsilon: f64,
    /// Delta of the Gaussian perturbation step.
    pub base_delta: f64,
    #[serde(rename = "I")]
    pub i: u32,
    #[serde(rename = "T")]
    pub t: usize,
    pub p: Option<f64>,
    pub sigma_g: Option<f64>,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    #[serde(rename = "I_prime")]
    pub i_prime: Option<u32>,
    pub delta_prime: f64,
    /// Sensitivity the noise is calibrated for.
    pub delta2: f64,
    pub sigma: f64,
    pub method: BoundMethod,
    pub kernel_stats: Option<FilterStats>,
    pub guarantee: PrivacyGuarantee,
}

/// `ceil(alpha^2 I)`, ignoring rounding noise in `alpha^2`.
fn i_prime_from_alpha(alpha: f64, i: u32) -> u32 {
    let x = alpha * alpha * i as f64;
    let nearest = x.round();
    let v = if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (v as u32).clamp(1, i)
}

/// A configuration resolved against a series length: calibrated noise scale
/// and the filter kernel, ready to run any number of times.
#[derive(Debug, Clone)]
pub struct Plan<S = f64> {
    pub calibration: Calibrated,
    kernel: Option<FilterKernel<S>>,
}

impl<S: Scalar> Plan<S> {
    pub fn new(cfg: &MechanismConfig, t: usize) -> Result<Self> {
        cfg.validate()?;
        if t == 0 {
            return Err(Error::EmptySeries);
        }
        if cfg.i as usize > t {
            return Err(Error::InvalidConfig(format!(
                "participation limit I={} exceeds series length T={t}",
                cfg.i
            )));
        }
        let (epsilon, i) = (cfg.epsilon, cfg.i);
        let sqrt_i = (i as f64).sqrt();

        let kernel = match (cfg.kind, cfg.kernel) {
            (MechanismKind::FilterSubsample, Some(spec)) => Some(spec.build::<S>(t)?),
            _ => None,
        };
        let stats = kernel.as_ref().map(FilterKernel::stats);

        let mut cal = Calibrated {
            kind: cfg.kind,
            epsilon,
            base_delta: cfg.delta,
            i,
            t,
            p: cfg.p,
            sigma_g: cfg.kernel.and_then(|k| k.sigma_g()),
            k: None,
            alpha: None,
            i_prime: None,
            delta_prime: 0.0,
            delta2: sqrt_i,
            sigma: 0.0,
            method: BoundMethod::WorstCase,
            kernel_stats: stats,
            guarantee: compose_worst_case(epsilon, cfg.delta)?,
        };

        match cfg.kind {
            MechanismKind::Gaussian => {}
            MechanismKind::Dft => {
                let k = cfg.k.unwrap_or(DEFAULT_DFT_K);
                if k == 0 || k > t {
                    return Err(Error::InvalidK { k, t });
                }
                cal.k = Some(k);
            }
            MechanismKind::Subsample => {
                let p = cfg.p.expect("validated");
                let (i_prime, base_delta) = match cfg.calibration {
                    Calibration::Budget { split } => {
                        let sol = budget_solve(epsilon, cfg.delta, BudgetRoute::Subsample { i, p }, split)?;
                        let Multiplier::ParticipationRatio { i_prime, .. } = sol.multiplier else {
                            unreachable!("subsample budget yields a participation ratio")
                        };
                        (i_prime, sol.base_delta)
                    }
                    Calibration::Alpha { alpha } => (i_prime_from_alpha(alpha, i), cfg.delta),
                    Calibration::IPrime { i_prime } => (i_prime, cfg.delta),
                    Calibration::DeltaPrime { delta_prime } => {
                        (solve_i_prime(i, p, delta_prime)?.max(1), cfg.delta)
                    }
                };
                let delta_prime = binomial_tail_delta(i, p, i_prime)?;
                cal.base_delta = base_delta;
                cal.i_prime = Some(i_prime);
                cal.delta_prime = delta_prime;
                cal.delta2 = (i_prime as f64).sqrt();
                cal.method = BoundMethod::ExactBinomial;
                cal.guarantee = compose_unfiltered(epsilon, base_delta, i, i_prime, delta_prime)?;
            }
            MechanismKind::FilterSubsample => {
                let p = cfg.p.expect("validated");
                let stats = stats.expect("kernel built");
                let (alpha, base_delta) = match cfg.calibration {
                    Calibration::Budget { split } => {
                        let sol = budget_solve(epsilon, cfg.delta, BudgetRoute::Filtered { stats, p }, split)?;
                        (sol.multiplier.factor(), sol.base_delta)
                    }
                    Calibration::Alpha { alpha } => (alpha, cfg.delta),
                    Calibration::DeltaPrime { delta_prime } => {
                        (solve_alpha(&stats, p, delta_prime)?, cfg.delta)
                    }
                    Calibration::IPrime { .. } => unreachable!("rejected by validate"),
                };
                let delta_prime = chernoff_delta(&stats, p, alpha)?;
                cal.base_delta = base_delta;
                cal.alpha = Some(alpha);
                cal.delta_prime = delta_prime;
                cal.delta2 = alpha * sqrt_i;
                cal.method = BoundMethod::MatrixChernoff;
                cal.guarantee = compose_filtered(epsilon, base_delta, alpha, delta_prime)?;
            }
        }
        cal.sigma = gaussian_noise_sigma(cal.delta2, epsilon, cal.base_delta)?;
        Ok(Self {
            calibration: cal,
            kernel,
        })
    }

    pub fn kernel(&self) -> Option<&FilterKernel<S>> {
        self.kernel.as_ref()
    }

    /// The pre-subsampling signal (`Ax` for the filtered mechanism, `x`
    /// otherwise).
    pub fn prepare(&self, x: &[S]) -> Result<Vec<S>> {
        match &self.kernel {
            Some(k) => apply_filter(k, x),
            None => Ok(x.to_vec()),
        }
    }

    /// Runs the noise and reconstruction stages for a fixed subsample draw.
    /// `prepared` must come from [`Plan::prepare`].
    pub fn run_with_draw<N: NoiseSource + ?Sized>(
        &self,
        prepared: &[S],
        draw: Option<&SubsampleDraw>,
        noise: &mut N,
    ) -> Result<Vec<S>> {
        let sigma = self.calibration.sigma;
        match self.calibration.kind {
            MechanismKind::Gaussian => {
                let mut out = prepared.to_vec();
                pipeline::perturb(&mut out, sigma, noise);
                Ok(out)
            }
            MechanismKind::Dft => {
                pipeline::dft_lowpass(prepared, self.calibration.k.expect("resolved"), sigma, noise)
            }
            MechanismKind::Subsample | MechanismKind::FilterSubsample => {
                let draw = draw.ok_or(Error::EmptyDraw)?;
                let mut z = draw.gather(prepared)?;
                pipeline::perturb(&mut z, sigma, noise);
                interpolate(draw, &z)
            }
        }
    }

    /// Full pipeline with the given subsampling stream and noise source.
    pub fn execute<R, N>(&self, x: &[S], subsample_rng: &mut R, noise: &mut N) -> Result<Execution<S>>
    where
        R: rand::Rng + ?Sized,
        N: NoiseSource + ?Sized,
    {
        if x.len() != self.calibration.t {
            return Err(Error::LengthMismatch {
                expected: self.calibration.t,
                actual: x.len(),
            });
        }
        let prepared = self.prepare(x)?;
        let draw = match self.calibration.p {
            Some(p) if self.calibration.kind.is_subsampling() => {
                Some(SubsampleDraw::draw(x.len(), p, subsample_rng)?)
            }
            _ => None,
        };
        let values = self.run_with_draw(&prepared, draw.as_ref(), noise)?;
        Ok(Execution { values, draw })
    }

    /// Runs one seeded attempt, drawing from the attempt's own streams.
    pub fn execute_seeded(&self, x: &[S], seed: u64, attempt: u32) -> Result<Execution<S>> {
        let streams = SeedStreams::new(seed);
        let mut sub = streams.rng(Stream::Subsample { attempt });
        let mut noise = GaussianNoise(streams.rng(Stream::Noise { attempt }));
        self.execute(x, &mut sub, &mut noise)
    }

    /// Like [`Plan::execute_seeded`], redrawing empty subsamples with fresh
    /// attempt streams up to [`MAX_SUBSAMPLE_REDRAWS`] times.
    pub fn execute_with_redraw(&self, x: &[S], seed: u64) -> Result<(Execution<S>, u32)> {
        for attempt in 0..=MAX_SUBSAMPLE_REDRAWS {
            match self.execute_seeded(x, seed, attempt) {
                Err(Error::EmptySubsample) => continue,
                other => return other.map(|e| (e, attempt)),
            }
        }
        Err(Error::EmptySubsample)
    }
}

/// Output of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution<S = f64> {
    pub values: Vec<S>,
    pub draw: Option<SubsampleDraw>,
}

/// A released signal with its resolved parameters and guarantee.
#[derive(Debug, Clone, PartialEq)]
pub struct Release<S = f64> {
    pub output: Signal<S>,
    pub calibration: Calibrated,
    /// Number of empty subsamples redrawn before this output.
    pub redraws: u32,
}

impl<S: Scalar> Release<S> {
    pub fn guarantee(&self) -> &PrivacyGuarantee {
        &self.calibration.guarantee
    }
}

fn check_input<S: Scalar>(x: &CountSeries<S>) -> Result<()> {
    validate_values(x.values(), Integrality::Relaxed)
}

/// Runs the configured mechanism once with the config's seed. An empty
/// subsample is reported as [`Error::EmptySubsample`].
pub fn release<S: Scalar>(x: &CountSeries<S>, cfg: &MechanismConfig) -> Result<Release<S>> {
    check_input(x)?;
    let plan = Plan::<S>::new(cfg, x.len())?;
    let exec = plan.execute_seeded(x.values(), cfg.seed, 0)?;
    Ok(Release {
        output: Signal::new(exec.values),
        calibration: plan.calibration,
        redraws: 0,
    })
}

/// [`release`] that redraws empty subsamples (up to
/// [`MAX_SUBSAMPLE_REDRAWS`] times). The subsample is independent of the
/// data, so redrawing leaks nothing.
pub fn release_with_redraw<S: Scalar>(x: &CountSeries<S>, cfg: &MechanismConfig) -> Result<Release<S>> {
    check_input(x)?;
    let plan = Plan::<S>::new(cfg, x.len())?;
    let (exec, redraws) = plan.execute_with_redraw(x.values(), cfg.seed)?;
    Ok(Release {
        output: Signal::new(exec.values),
        calibration: plan.calibration,
        redraws,
    })
}

/// [`release`] with an injected noise source; subsampling still follows the
/// config's seed.
pub fn release_with_noise<S: Scalar, N: NoiseSource + ?Sized>(
    x: &CountSeries<S>,
    cfg: &MechanismConfig,
    noise: &mut N,
) -> Result<Release<S>> {
    check_input(x)?;
    let plan = Plan::<S>::new(cfg, x.len())?;
    let mut sub = SeedStreams::new(cfg.seed).rng(Stream::Subsample { attempt: 0 });
    let exec = plan.execute(x.values(), &mut sub, noise)?;
    Ok(Release {
        output: Signal::new(exec.values),
        calibration: plan.calibration,
        redraws: 0,
    })
}

fn require_kind(cfg: &MechanismConfig, kind: MechanismKind) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::InvalidConfig(format!(
            "expected a {kind} config, got {}",
            cfg.kind
        )));
    }
    Ok(())
}

/// Gaussian baseline: `x + N(0, sigma^2)` per step, `sigma` for sensitivity `sqrt(I)`.
pub fn gaussian_mechanism<S: Scalar>(x: &CountSeries<S>, cfg: &MechanismConfig) -> Result<Signal<S>> {
    require_kind(cfg, MechanismKind::Gaussian)?;
    Ok(release(x, cfg)?.output)
}

/// DFT baseline with Gaussian noise on the `k` lowest frequencies.
pub fn dft_mechanism<S: Scalar>(x: &CountSeries<S>, cfg: &MechanismConfig) -> Result<Signal<S>> {
    require_kind(cfg, MechanismKind::Dft)?;
    Ok(release(x, cfg)?.output)
}
