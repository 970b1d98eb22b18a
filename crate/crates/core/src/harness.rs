//! Repeated-release experiments, MAE reporting and parameter sweeps.
//!
//! Every repeat draws from a seed derived from `(master seed, repeat index)`,
//! so results do not depend on execution order or thread count.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{generate_synth, SynthConfig};
use crate::error::{Error, Result};
use crate::filters::{FilterKernel, FilterStats};
use crate::mechanisms::rng::SeedStreams;
use crate::mechanisms::{
    Calibrated, Calibration, KernelSpec, MechanismConfig, MechanismKind, Plan, DEFAULT_DFT_K,
};
use crate::scalar::Scalar;
use crate::sensitivity::chernoff_delta;
use crate::series::{stride_for_frequency, CountSeries};

/// `(1/T) sum |ref_t - out_t|`.
pub fn mae<S: Scalar>(reference: &[S], output: &[S]) -> Result<f64> {
    if reference.len() != output.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: output.len(),
        });
    }
    if reference.is_empty() {
        return Err(Error::EmptySeries);
    }
    let sum: f64 = reference
        .iter()
        .zip(output)
        .map(|(r, o)| (r.as_f64() - o.as_f64()).abs())
        .sum();
    Ok(sum / reference.len() as f64)
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub maes: Vec<f64>,
    pub mean_mae: f64,
    /// Population standard deviation.
    pub std_mae: f64,
    /// Configuration as run; `seed` holds the master seed.
    pub config: MechanismConfig,
    pub calibration: Calibrated,
    /// Empty subsamples redrawn, summed over repeats.
    pub redraws: u32,
}

/// Releases `input` `repeats` times and scores each output against
/// `reference`. `cfg.seed` is ignored in favour of `master_seed`.
pub fn run_experiment<S: Scalar>(
    input: &CountSeries<S>,
    reference: &[S],
    cfg: &MechanismConfig,
    repeats: usize,
    master_seed: u64,
    schedule: Schedule,
) -> Result<ExperimentResult> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    if reference.len() != input.len() {
        return Err(Error::LengthMismatch {
            expected: input.len(),
            actual: reference.len(),
        });
    }
    crate::series::validate_values(input.values(), crate::series::Integrality::Relaxed)?;
    let plan = Plan::<S>::new(cfg, input.len())?;
    let streams = SeedStreams::new(master_seed);
    let one = |r: usize| -> Result<(f64, u32)> {
        let (exec, redraws) = plan.execute_with_redraw(input.values(), streams.child_seed(r as u64))?;
        Ok((mae(reference, &exec.values)?, redraws))
    };
    let runs: Vec<(f64, u32)> = match schedule {
        Schedule::Serial => (0..repeats).map(one).collect::<Result<_>>()?,
        Schedule::Parallel => (0..repeats).into_par_iter().map(one).collect::<Result<_>>()?,
    };
    let maes: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (mean_mae, std_mae) = mean_std(&maes);
    Ok(ExperimentResult {
        maes,
        mean_mae,
        std_mae,
        config: cfg.clone().with_seed(master_seed),
        calibration: plan.calibration,
        redraws: runs.iter().map(|r| r.1).sum(),
    })
}

/// Logarithm used by the frequency schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Two,
    E,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::E => x.ln(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Two => "2",
            LogBase::E => "e",
        }
    }
}

/// `p(f) = 0.1 (1 - log f / 4)`.
pub fn p_schedule(f: f64, base: LogBase) -> f64 {
    0.1 * (1.0 - base.log(f) / 4.0)
}

/// `sigma_g(f) = 10 / (1 - log f / 4)`.
pub fn sigma_g_schedule(f: f64, base: LogBase) -> f64 {
    10.0 / (1.0 - base.log(f) / 4.0)
}

/// Frequency sweep on the synthetic signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrequencySweepConfig {
    /// Signal parameters; `f` is overridden per cell, `seed` fixes the
    /// observation noise.
    pub synth: SynthConfig,
    pub mechanisms: Vec<MechanismKind>,
    pub f_list: Vec<f64>,
    /// Which inputs to run: `false` = noiseless, `true` = with observation noise.
    pub noisy: Vec<bool>,
    pub epsilon: f64,
    pub delta: f64,
    pub repeats: usize,
    pub master_seed: u64,
    pub log_base: LogBase,
    /// Retained coefficients of the DFT baseline.
    pub k: usize,
    pub calibration: Calibration,
    pub schedule: Schedule,
}

impl Default for FrequencySweepConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            mechanisms: vec![
                MechanismKind::Gaussian,
                MechanismKind::Dft,
                MechanismKind::Subsample,
                MechanismKind::FilterSubsample,
            ],
            f_list: (0..7).map(|e| 0.5f64.powi(e)).collect(),
            noisy: vec![false, true],
            epsilon: 0.5,
            delta: 1e-4,
            repeats: 100,
            master_seed: 20_220_101,
            log_base: LogBase::Two,
            k: DEFAULT_DFT_K,
            calibration: Calibration::default(),
            schedule: Schedule::Parallel,
        }
    }
}

impl FrequencySweepConfig {
    /// Mechanism configuration for one cell, seeded with `seed`.
    pub fn mechanism_config(&self, kind: MechanismKind, f: f64, seed: u64) -> MechanismConfig {
        let (eps, delta, i) = (self.epsilon, self.delta, self.synth.i);
        let p = p_schedule(f, self.log_base);
        match kind {
            MechanismKind::Gaussian => MechanismConfig::gaussian(eps, delta, i, seed),
            MechanismKind::Dft => MechanismConfig::dft(eps, delta, i, self.k, seed),
            MechanismKind::Subsample => {
                MechanismConfig::subsample(eps, delta, i, p, seed).with_calibration(self.calibration)
            }
            MechanismKind::FilterSubsample => MechanismConfig::filter_subsample(
                eps,
                delta,
                i,
                p,
                KernelSpec::Gaussian {
                    sigma_g: sigma_g_schedule(f, self.log_base),
                },
                seed,
            )
            .with_calibration(self.calibration),
        }
    }

    /// Seed of a sweep cell; independent of the order of `f_list` and
    /// `mechanisms`.
    pub fn cell_seed(&self, kind: MechanismKind, f: f64, noisy: bool) -> Result<u64> {
        let stride = stride_for_frequency(f)? as u64;
        let kind_id = match kind {
            MechanismKind::Gaussian => 0u64,
            MechanismKind::Dft => 1,
            MechanismKind::Subsample => 2,
            MechanismKind::FilterSubsample => 3,
        };
        Ok(SeedStreams::new(self.master_seed).child_seed((kind_id << 40) | (stride << 1) | noisy as u64))
    }
}

/// One row of the frequency sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mechanism: MechanismKind,
    pub f: f64,
    pub noisy: bool,
    pub p: Option<f64>,
    pub sigma_g: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(rename = "I")]
    pub i: u32,
    #[serde(rename = "I_prime")]
    pub i_prime: Option<u32>,
    pub delta_prime: f64,
    pub epsilon_total: f64,
    pub delta_total: f64,
    pub mean_mae: f64,
    pub std_mae: f64,
    pub repeats: usize,
    pub seed: u64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub log_base: String,
}

impl SweepRow {
    fn new(result: &ExperimentResult, f: f64, noisy: bool, log_base: LogBase) -> Self {
        let c = &result.calibration;
        Self {
            mechanism: c.kind,
            f,
            noisy,
            p: c.p,
            sigma_g: c.sigma_g,
            alpha: c.alpha,
            i: c.i,
            i_prime: c.i_prime,
            delta_prime: c.delta_prime,
            epsilon_total: c.guarantee.epsilon_total,
            delta_total: c.guarantee.delta_total,
            mean_mae: result.mean_mae,
            std_mae: result.std_mae,
            repeats: result.maes.len(),
            seed: result.config.seed,
            sigma: c.sigma,
            t: c.t,
            log_base: log_base.as_str().to_string(),
        }
    }
}

/// Runs every (mechanism, f, noisy) cell. The reference is always the
/// noiseless signal.
pub fn sweep_frequency(cfg: &FrequencySweepConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &noisy in &cfg.noisy {
        for &f in &cfg.f_list {
            let synth = SynthConfig { f, ..cfg.synth.clone() };
            let (clean, noisy_series) = generate_synth::<f64>(&synth)?;
            let input = if noisy { &noisy_series } else { &clean };
            for &kind in &cfg.mechanisms {
                let seed = cfg.cell_seed(kind, f, noisy)?;
                let mcfg = cfg.mechanism_config(kind, f, seed);
                let result = run_experiment(input, clean.values(), &mcfg, cfg.repeats, seed, cfg.schedule)?;
                rows.push(SweepRow::new(&result, f, noisy, cfg.log_base));
            }
        }
    }
    Ok(rows)
}

/// One point of the `delta'(alpha)` curve; `delta_prime` is `None` where
/// `alpha^2 < p sigma_max^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub p: f64,
    pub alpha: f64,
    pub delta_prime: Option<f64>,
}

pub fn sweep_alpha(stats: &FilterStats, p_list: &[f64], alpha_grid: &[f64]) -> Result<Vec<AlphaRow>> {
    let mut rows = Vec::with_capacity(p_list.len() * alpha_grid.len());
    for &p in p_list {
        for &alpha in alpha_grid {
            let delta_prime = match chernoff_delta(stats, p, alpha) {
                Ok(d) => Some(d),
                Err(Error::AlphaBelowSamplingRate { .. }) => None,
                Err(e) => return Err(e),
            };
            rows.push(AlphaRow { p, alpha, delta_prime });
        }
    }
    Ok(rows)
}

/// Alpha sweep over a Gaussian kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlphaSweepConfig {
    #[serde(rename = "T")]
    pub t: usize,
    pub sigma_g: f64,
    pub p_list: Vec<f64>,
    /// Explicit grid; when empty, `alpha_steps` evenly spaced points in (0, 1].
    pub alphas: Vec<f64>,
    pub alpha_steps: usize,
}

impl Default for AlphaSweepConfig {
    fn default() -> Self {
        Self {
            t: 10_000,
            sigma_g: 10.0,
            p_list: vec![0.05, 0.1, 0.2],
            alphas: Vec::new(),
            alpha_steps: 100,
        }
    }
}

impl AlphaSweepConfig {
    pub fn grid(&self) -> Vec<f64> {
        if !self.alphas.is_empty() {
            return self.alphas.clone();
        }
        let n = self.alpha_steps.max(1);
        (1..=n).map(|k| k as f64 / n as f64).collect()
    }

    pub fn run(&self) -> Result<(FilterStats, Vec<AlphaRow>)> {
        let stats = FilterKernel::<f64>::gaussian(self.t, self.sigma_g)?.stats();
        let rows = sweep_alpha(&stats, &self.p_list, &self.grid())?;
        Ok((stats, rows))
    }
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Example outputs of each mechanism on one synthetic signal, with columns
/// `t, clean, input, <mechanism>...`.
pub fn example_traces(
    synth: &SynthConfig,
    sweep: &FrequencySweepConfig,
    noisy: bool,
) -> Result<Vec<(String, Vec<f64>)>> {
    let (clean, noisy_series) = generate_synth::<f64>(synth)?;
    let input = if noisy { &noisy_series } else { &clean };
    let mut cols = vec![
        ("clean".to_string(), clean.values().to_vec()),
        ("input".to_string(), input.values().to_vec()),
    ];
    for &kind in &sweep.mechanisms {
        let cfg = sweep.mechanism_config(kind, synth.f, sweep.master_seed);
        let plan = Plan::<f64>::new(&cfg, input.len())?;
        let (exec, _) = plan.execute_with_redraw(input.values(), cfg.seed)?;
        cols.push((kind.as_str().replace('-', "_"), exec.values));
    }
    Ok(cols)
}

fn write_columns<W: Write>(cols: &[(String, Vec<f64>)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend(cols.iter().map(|c| c.0.clone()));
    w.write_record(&header)?;
    let n = cols.first().map_or(0, |c| c.1.len());
    for t in 0..n {
        let mut rec = vec![t.to_string()];
        rec.extend(cols.iter().map(|c| c.1[t].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct MaeRow {
    mechanism: MechanismKind,
    f: f64,
    mean_mae: f64,
    std_mae: f64,
}

/// Writes the per-plot CSVs into `dir`:
/// * `fig2_traces_noisy.csv` and `fig2_traces_noiseless.csv`: example
///   outputs at `f = 1`,
/// * `fig3a_mae_noiseless.csv` and `fig3b_mae_noisy.csv`: MAE against `f`,
/// * `alpha_delta_prime.csv`: the `delta'(alpha)` curves.
///
/// Returns the paths written.
pub fn emit_plot_data(
    dir: &Path,
    sweep: &FrequencySweepConfig,
    rows: &[SweepRow],
    alpha: &AlphaSweepConfig,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut create = |name: &str| -> Result<std::fs::File> {
        let path = dir.join(name);
        let file = std::fs::File::create(&path)?;
        written.push(path);
        Ok(file)
    };

    let synth = SynthConfig { f: 1.0, ..sweep.synth.clone() };
    for (noisy, name) in [(true, "fig2_traces_noisy.csv"), (false, "fig2_traces_noiseless.csv")] {
        write_columns(&example_traces(&synth, sweep, noisy)?, create(name)?)?;
    }
    for (noisy, name) in [(false, "fig3a_mae_noiseless.csv"), (true, "fig3b_mae_noisy.csv")] {
        let sel: Vec<MaeRow> = rows
            .iter()
            .filter(|r| r.noisy == noisy)
            .map(|r| MaeRow {
                mechanism: r.mechanism,
                f: r.f,
                mean_mae: r.mean_mae,
                std_mae: r.std_mae,
            })
            .collect();
        write_csv(&sel, create(name)?)?;
    }
    let (_, alpha_rows) = alpha.run()?;
    write_csv(&alpha_rows, create("alpha_delta_prime.csv")?)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(
            mae(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { expected: 1, actual: 2 })
        );
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn schedules() {
        assert_eq!(p_schedule(1.0, LogBase::Two), 0.1);
        assert_eq!(sigma_g_schedule(1.0, LogBase::E), 10.0);
        assert_abs_diff_eq!(p_schedule(1.0 / 64.0, LogBase::Two), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(sigma_g_schedule(1.0 / 64.0, LogBase::Two), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            p_schedule(0.5, LogBase::E),
            0.1 * (1.0 + std::f64::consts::LN_2 / 4.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_noise_identity_experiment() {
        let x = CountSeries::new(vec![3.0, 1.0, 4.0, 1.0, 5.0]);
        let cfg = MechanismConfig::filter_subsample(0.5, 1e-4, 1, 1.0, KernelSpec::Identity, 0)
            .with_calibration(Calibration::Alpha { alpha: 1.0 });
        let plan = Plan::<f64>::new(&cfg, 5).unwrap();
        let mut sub = SeedStreams::new(0).rng(crate::mechanisms::Stream::Subsample { attempt: 0 });
        let out = plan
            .execute(x.values(), &mut sub, &mut crate::mechanisms::ZeroNoise)
            .unwrap();
        assert_eq!(mae(x.values(), &out.values).unwrap(), 0.0);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let x = CountSeries::new((0..200).map(|i| 50.0 + (i as f64 / 9.0).sin() * 10.0).collect());
        let cfg = MechanismConfig::filter_subsample(0.5, 1e-4, 20, 0.2, KernelSpec::Gaussian { sigma_g: 3.0 }, 0);
        let a = run_experiment(&x, x.values(), &cfg, 16, 42, Schedule::Serial).unwrap();
        let b = run_experiment(&x, x.values(), &cfg, 16, 42, Schedule::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.maes.len(), 16);
        let (m, s) = mean_std(&a.maes);
        assert_eq!((m, s), (a.mean_mae, a.std_mae));
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn repeats_must_be_positive() {
        let x = CountSeries::new(vec![1.0; 10]);
        let cfg = MechanismConfig::gaussian(0.5, 1e-4, 1, 0);
        assert!(run_experiment(&x, x.values(), &cfg, 0, 0, Schedule::Serial).is_err());
    }

    #[test]
    fn alpha_sweep_shape() {
        let stats = FilterKernel::<f64>::gaussian(1000, 10.0).unwrap().stats();
        let grid: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
        let rows = sweep_alpha(&stats, &[0.05, 0.1, 0.2], &grid).unwrap();
        assert_eq!(rows.len(), 60);
        // alpha = 0.05 is below sqrt(p) for every p in the list.
        assert!(rows.iter().filter(|r| r.alpha == 0.05).all(|r| r.delta_prime.is_none()));
        for (a, b) in rows.iter().zip(&rows[1..]) {
            if a.p == b.p {
                if let (Some(x), Some(y)) = (a.delta_prime, b.delta_prime) {
                    assert!(y <= x);
                }
            }
        }
    }

    #[test]
    fn cell_seeds_are_distinct() {
        let cfg = FrequencySweepConfig::default();
        let mut seeds = std::collections::HashSet::new();
        for &kind in &cfg.mechanisms {
            for &f in &cfg.f_list {
                for noisy in [false, true] {
                    assert!(seeds.insert(cfg.cell_seed(kind, f, noisy).unwrap()));
                }
            }
        }
    }

    #[test]
    fn small_sweep_runs() {
        let cfg = FrequencySweepConfig {
            synth: SynthConfig {
                t_base: 400,
                i: 20,
                ..Default::default()
            },
            f_list: vec![1.0, 0.5],
            repeats: 3,
            ..Default::default()
        };
        let rows = sweep_frequency(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 4);
        for r in &rows {
            assert!(r.mean_mae.is_finite() && r.mean_mae > 0.0);
            assert!(r.delta_total <= cfg.delta * (1.0 + 1e-12), "{r:?}");
        }
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "mechanism,f,noisy,p,sigma_g,alpha,I,I_prime,delta_prime,epsilon_total,delta_total,mean_mae,std_mae,repeats,seed"
        ));
    }
}
