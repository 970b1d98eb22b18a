use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tsdp::dataio::{
    generate_synth, ingest_checkins, ingest_series, parse_timestamp, write_series_csv, CheckInLayout,
    CheckInOptions, SynthConfig,
};
use tsdp::harness::{
    emit_plot_data, sweep_frequency, write_csv, AlphaSweepConfig, FrequencySweepConfig,
};
use tsdp::mechanisms::{Calibrated, DEFAULT_DFT_K};
use tsdp::{
    release_with_redraw, Calibration, FilterKernel, Integrality, KernelSpec, MechanismConfig, MechanismKind,
    SensitivityBound,
};

#[derive(Parser)]
#[command(name = "tsdp", version, about = "Differentially private release of count time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic sinusoid-plus-trend signal.
    Synth(SynthArgs),
    /// Turn check-in logs or a `t,value` file into a validated count series.
    Ingest(IngestArgs),
    /// Release a series with one of the mechanisms.
    Run(RunArgs),
    /// Tabulate sensitivity bounds for a participation limit and sampling rate.
    Sensitivity(SensitivityArgs),
    /// Run a frequency or alpha sweep.
    Sweep(SweepArgs),
    /// Export a Gaussian filter kernel and print its statistics.
    Kernel(KernelArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Relative sampling frequency (1, 1/2, 1/4, ...).
    #[arg(long, default_value_t = 1.0, value_parser = parse_fraction)]
    f: f64,
    /// Observation noise scale.
    #[arg(long, default_value_t = 100.0)]
    d: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Length at f = 1.
    #[arg(long = "t-base", default_value_t = 10_000)]
    t_base: usize,
    /// Angular frequency in radians per sample at f = 1 [default: 2 pi / 1000].
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long, default_value_t = 200.0)]
    a: f64,
    #[arg(long, default_value_t = 500.0)]
    b: f64,
    #[arg(long, default_value_t = 0.1)]
    c: f64,
    /// Noiseless series.
    #[arg(long)]
    out: PathBuf,
    /// Series with observation noise.
    #[arg(long = "out-noisy")]
    out_noisy: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IngestFormat {
    Checkins,
    Series,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, value_enum)]
    format: IngestFormat,
    #[arg(long)]
    input: PathBuf,
    /// Venue to aggregate (check-ins only).
    #[arg(long)]
    venue: Option<String>,
    /// Bin width in hours (check-ins only).
    #[arg(long = "bin-hours", default_value_t = 24.0)]
    bin_hours: f64,
    /// Window start: epoch seconds or an ISO-8601 timestamp.
    #[arg(long)]
    from: Option<String>,
    /// Window end (exclusive).
    #[arg(long)]
    to: Option<String>,
    /// Column layout: `default`, `gowalla`, `foursquare`, or `user,time,venue` indices.
    #[arg(long, default_value = "default")]
    layout: String,
    /// The input has a header line.
    #[arg(long)]
    header: bool,
    /// Count repeat check-ins of one user within a bin separately.
    #[arg(long = "no-dedup")]
    no_dedup: bool,
    /// Accept non-integer values (series only).
    #[arg(long)]
    relaxed: bool,
    #[arg(long)]
    out: PathBuf,
    /// JSON summary with the empirical participation limit.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_kind)]
    mechanism: MechanismKind,
    #[arg(long)]
    epsilon: f64,
    /// Total delta budget (split between noise and sensitivity failure
    /// unless --alpha, --i-prime or --delta-prime is given).
    #[arg(long)]
    delta: f64,
    /// Participation limit.
    #[arg(long = "I")]
    i: u32,
    /// Subsampling rate.
    #[arg(long)]
    p: Option<f64>,
    /// Gaussian filter width; omit for the identity filter.
    #[arg(long = "sigma-g")]
    sigma_g: Option<f64>,
    /// Retained DFT coefficients.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, conflicts_with_all = ["i_prime", "delta_prime"])]
    alpha: Option<f64>,
    #[arg(long = "i-prime", conflicts_with = "delta_prime")]
    i_prime: Option<u32>,
    #[arg(long = "delta-prime")]
    delta_prime: Option<f64>,
    /// Share of the delta budget given to the Gaussian step.
    #[arg(long = "delta-split", default_value_t = 0.5)]
    delta_split: f64,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// JSON sidecar path [default: output with a .json extension].
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Text,
}

#[derive(Args)]
struct SensitivityArgs {
    #[arg(long = "I")]
    i: u32,
    #[arg(long)]
    p: f64,
    /// Series length; with --sigma-g adds the filtered bound.
    #[arg(long = "T", requires = "sigma_g")]
    t: Option<usize>,
    #[arg(long = "sigma-g", requires = "t")]
    sigma_g: Option<f64>,
    /// Target failure probability.
    #[arg(long = "delta-prime", default_value_t = 1e-4)]
    delta_prime: f64,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Frequency,
    Alpha,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    kind: SweepKind,
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Evenly spaced alpha points in (0, 1] (alpha sweep only).
    #[arg(long = "alpha-grid")]
    alpha_grid: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-plot CSVs.
    #[arg(long = "emit-plot-data")]
    emit_plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long = "T")]
    t: usize,
    #[arg(long = "sigma-g")]
    sigma_g: f64,
    /// Kernel weights as `k,h_k` CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| format!("bad number '{s}'"))?;
            let d: f64 = d.trim().parse().map_err(|_| format!("bad number '{s}'"))?;
            n / d
        }
        None => s.parse().map_err(|_| format!("bad number '{s}'"))?,
    };
    Ok(v)
}

fn parse_kind(s: &str) -> std::result::Result<MechanismKind, String> {
    s.parse().map_err(|e: tsdp::Error| e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        a: args.a,
        b: args.b,
        c: args.c,
        omega: args.omega.unwrap_or(defaults.omega),
        d: args.d,
        f: args.f,
        t_base: args.t_base,
        seed: args.seed,
        ..defaults
    };
    let (clean, noisy) = generate_synth::<f64>(&cfg)?;
    write_series_csv(clean.values(), create(&args.out)?)?;
    if let Some(path) = &args.out_noisy {
        write_series_csv(noisy.values(), create(path)?)?;
    }
    Ok(())
}

fn parse_time_arg(s: &Option<String>) -> Result<Option<i64>> {
    s.as_deref()
        .map(|v| parse_timestamp(v).with_context(|| format!("unparseable timestamp '{v}'")))
        .transpose()
}

#[derive(Serialize)]
struct SeriesReport {
    #[serde(rename = "T")]
    t: usize,
    total: f64,
    max: f64,
}

fn ingest(args: IngestArgs) -> Result<()> {
    match args.format {
        IngestFormat::Checkins => {
            let venue = args.venue.context("--venue is required for check-in input")?;
            let bin_seconds = args.bin_hours * 3600.0;
            if bin_seconds.is_nan() || bin_seconds < 1.0 || bin_seconds.fract() != 0.0 {
                bail!("--bin-hours must be a positive whole number of seconds");
            }
            let opts = CheckInOptions {
                t_start: parse_time_arg(&args.from)?,
                t_end: parse_time_arg(&args.to)?,
                dedup: !args.no_dedup,
                layout: args.layout.parse::<CheckInLayout>()?,
                has_header: args.header,
                ..CheckInOptions::new(venue, bin_seconds as i64)
            };
            let result = ingest_checkins(open(&args.input)?, &opts)?;
            if result.unknown_venue {
                eprintln!("warning: no check-ins for venue '{}' in the window", opts.venue);
            }
            write_series_csv(result.series.values(), create(&args.out)?)?;
            if let Some(path) = &args.report {
                write_json(path, &result.report(&opts))?;
            }
        }
        IngestFormat::Series => {
            let integrality = if args.relaxed {
                Integrality::Relaxed
            } else {
                Integrality::Required
            };
            let series = ingest_series(open(&args.input)?, integrality)?;
            write_series_csv(series.values(), create(&args.out)?)?;
            if let Some(path) = &args.report {
                let v = series.values();
                write_json(
                    path,
                    &SeriesReport {
                        t: v.len(),
                        total: v.iter().sum(),
                        max: v.iter().copied().fold(0.0, f64::max),
                    },
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config: &'a MechanismConfig,
    #[serde(flatten)]
    calibration: &'a Calibrated,
    redraws: u32,
}

fn run(args: RunArgs) -> Result<()> {
    let calibration = match (args.alpha, args.i_prime, args.delta_prime) {
        (Some(alpha), _, _) => Calibration::Alpha { alpha },
        (_, Some(i_prime), _) => Calibration::IPrime { i_prime },
        (_, _, Some(delta_prime)) => Calibration::DeltaPrime { delta_prime },
        _ => Calibration::Budget {
            split: args.delta_split,
        },
    };
    let (eps, delta, i, seed) = (args.epsilon, args.delta, args.i, args.seed);
    let need_p = || args.p.with_context(|| format!("--p is required for {}", args.mechanism));
    let cfg = match args.mechanism {
        MechanismKind::Gaussian => MechanismConfig::gaussian(eps, delta, i, seed),
        MechanismKind::Dft => MechanismConfig::dft(eps, delta, i, args.k.unwrap_or(DEFAULT_DFT_K), seed),
        MechanismKind::Subsample => MechanismConfig::subsample(eps, delta, i, need_p()?, seed).with_calibration(calibration),
        MechanismKind::FilterSubsample => {
            let kernel = match args.sigma_g {
                Some(sigma_g) => KernelSpec::Gaussian { sigma_g },
                None => KernelSpec::Identity,
            };
            MechanismConfig::filter_subsample(eps, delta, i, need_p()?, kernel, seed).with_calibration(calibration)
        }
    };
    let input = ingest_series(open(&args.input)?, Integrality::Relaxed)?;
    let release = release_with_redraw(&input, &cfg)?;
    write_series_csv(release.output.values(), create(&args.output)?)?;
    let sidecar = args.sidecar.unwrap_or_else(|| args.output.with_extension("json"));
    write_json(
        &sidecar,
        &Sidecar {
            config: &cfg,
            calibration: &release.calibration,
            redraws: release.redraws,
        },
    )?;
    let g = release.guarantee();
    eprintln!(
        "released T={} with sigma={:.6}: ({}, {:e})-DP{}",
        release.output.len(),
        release.calibration.sigma,
        g.epsilon_total,
        g.delta_total,
        if g.vacuous { " [vacuous]" } else { "" }
    );
    Ok(())
}

#[derive(Serialize)]
struct SensitivityRow {
    method: &'static str,
    delta2: f64,
    delta_prime: f64,
}

fn sensitivity(args: SensitivityArgs) -> Result<()> {
    let mut rows = vec![
        SensitivityBound::worst_case(args.i),
        SensitivityBound::exact_binomial(args.i, args.p, args.delta_prime)?,
        SensitivityBound::hoeffding(args.i, args.p, args.delta_prime)?,
    ];
    if let (Some(t), Some(sigma_g)) = (args.t, args.sigma_g) {
        let stats = FilterKernel::<f64>::gaussian(t, sigma_g)?.stats();
        match SensitivityBound::matrix_chernoff(&stats, args.i, args.p, args.delta_prime) {
            Ok(b) => rows.push(b),
            Err(e) => eprintln!("matrix-chernoff: {e}"),
        }
    }
    let rows: Vec<SensitivityRow> = rows
        .iter()
        .map(|b| SensitivityRow {
            method: b.method.as_str(),
            delta2: b.delta2,
            delta_prime: b.delta_prime,
        })
        .collect();
    let stdout = io::stdout();
    match args.format {
        TableFormat::Csv => write_csv(&rows, stdout.lock())?,
        TableFormat::Text => {
            let mut out = stdout.lock();
            writeln!(out, "{:<16} {:>14} {:>14}", "method", "delta2", "delta_prime")?;
            for r in &rows {
                writeln!(out, "{:<16} {:>14.6} {:>14.6e}", r.method, r.delta2, r.delta_prime)?;
            }
        }
    }
    Ok(())
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => serde_json::from_reader(open(p)?).with_context(|| format!("reading config {}", p.display())),
        None => Ok(T::default()),
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    match args.kind {
        SweepKind::Frequency => {
            let cfg: FrequencySweepConfig = read_config(&args.config)?;
            let rows = sweep_frequency(&cfg)?;
            write_csv(&rows, create(&args.out)?)?;
            if let Some(dir) = &args.emit_plot_data {
                let alpha = AlphaSweepConfig {
                    alpha_steps: args.alpha_grid.unwrap_or(AlphaSweepConfig::default().alpha_steps),
                    ..Default::default()
                };
                emit_plot_data(dir, &cfg, &rows, &alpha)?;
            }
        }
        SweepKind::Alpha => {
            let mut cfg: AlphaSweepConfig = read_config(&args.config)?;
            if let Some(n) = args.alpha_grid {
                cfg.alpha_steps = n;
                cfg.alphas.clear();
            }
            let (stats, rows) = cfg.run()?;
            eprintln!(
                "T={} sigma_g={}: sigma_max={:.6} srank={:.3} L={:.6}",
                cfg.t, cfg.sigma_g, stats.sigma_max, stats.srank, stats.l
            );
            write_csv(&rows, create(&args.out)?)?;
            if let Some(dir) = &args.emit_plot_data {
                std::fs::create_dir_all(dir)?;
                write_csv(&rows, create(&dir.join("alpha_delta_prime.csv"))?)?;
            }
        }
    }
    Ok(())
}

fn kernel(args: KernelArgs) -> Result<()> {
    let kernel = FilterKernel::<f64>::gaussian(args.t, args.sigma_g)?;
    if let Some(path) = &args.out {
        kernel.write_csv(create(path)?)?;
    }
    println!("{}", serde_json::to_string_pretty(&kernel.stats())?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Run(a) => run(a),
        Command::Sensitivity(a) => sensitivity(a),
        Command::Sweep(a) => sweep(a),
        Command::Kernel(a) => kernel(a),
    }
}
