//! Differentially private release of aggregate count time series.
//!
//! The central mechanism filters a series with a circulant low-pass kernel,
//! Poisson-subsamples time steps, perturbs the kept values with Gaussian noise
//! and interpolates back to full length. Filtering concentrates the spectrum
//! of the subsampled operator, which yields a sensitivity bound below the
//! worst case and hence less noise at a fixed privacy budget.
//!
//! Signal and kernel types are generic over [`Scalar`] (`f32` or `f64`);
//! privacy arithmetic is always carried out in `f64`.

pub mod accounting;
pub mod dataio;
pub mod error;
pub mod filters;
pub mod harness;
pub mod mechanisms;
pub mod scalar;
pub mod sensitivity;
pub mod series;

pub use accounting::{
    budget_solve, compose_filtered, compose_unfiltered, compose_worst_case, degrade, BudgetRoute,
    BudgetSolution, Multiplier, PrivacyGuarantee, Provenance,
};
pub use error::{Error, Result};
pub use filters::{apply_filter, FilterKernel, FilterStats};
pub use mechanisms::{
    dft_mechanism, gaussian_mechanism, gaussian_noise_sigma, release, release_with_noise,
    release_with_redraw, Calibrated, Calibration, KernelSpec, MechanismConfig, MechanismKind, Plan,
    Release,
};
pub use scalar::Scalar;
pub use sensitivity::{
    binomial_tail_delta, chernoff_delta, chernoff_log_delta, hoeffding_i_prime, solve_alpha, solve_i_prime,
    BoundMethod, SensitivityBound,
};
pub use series::{
    decimate, validate_series, CountSeries, Integrality, ParticipationLimit, Signal,
};

pub type CountSeries32 = CountSeries<f32>;
pub type CountSeries64 = CountSeries<f64>;
pub type Signal32 = Signal<f32>;
pub type Signal64 = Signal<f64>;
pub type FilterKernel32 = FilterKernel<f32>;
pub type FilterKernel64 = FilterKernel<f64>;
