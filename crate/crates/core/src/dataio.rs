//! Synthetic signal generation and ingestion of check-in and pre-aggregated
//! count data.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::rng::{SeedStreams, Stream};
use crate::scalar::Scalar;
use crate::series::{decimate_by, stride_for_frequency, validate_values, CountSeries, Integrality};

/// Parameters of `x_t = a sin(omega t) + b + c t`, observed with additive
/// noise of scale `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Angular frequency in radians per sample at `f = 1`.
    pub omega: f64,
    pub d: f64,
    /// Relative sampling frequency; `1/f` must be an integer.
    pub f: f64,
    /// Length at `f = 1`.
    #[serde(rename = "T_base")]
    pub t_base: usize,
    /// Participation limit used for releases of this signal.
    #[serde(rename = "I")]
    pub i: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            a: 200.0,
            b: 500.0,
            c: 0.1,
            omega: 2.0 * std::f64::consts::PI / 1000.0,
            d: 100.0,
            f: 1.0,
            t_base: 10_000,
            i: 100,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.b, self.c, self.omega, self.d]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("synth parameters must be finite".into()));
        }
        if self.a < 0.0 || self.b < 0.0 {
            return Err(Error::InvalidConfig("synth amplitude and offset must be nonnegative".into()));
        }
        if self.d < 0.0 {
            return Err(Error::InvalidConfig("observation noise scale must be nonnegative".into()));
        }
        if self.t_base == 0 {
            return Err(Error::EmptySeries);
        }
        if self.i == 0 {
            return Err(Error::InvalidConfig("I must be positive".into()));
        }
        stride_for_frequency(self.f)?;
        Ok(())
    }

    /// Series length after decimation, `ceil(T_base f)`.
    pub fn output_len(&self) -> Result<usize> {
        Ok(self.t_base.div_ceil(stride_for_frequency(self.f)?))
    }
}

/// Clean and noisy synthetic series at relative frequency `cfg.f`.
///
/// Both are produced at `f = 1` and then decimated, so the noisy samples at
/// any `f` are a subset of those at `f = 1` for the same seed. The clean
/// series does not depend on the seed. Noisy values are clamped at zero so
/// that they remain valid count series.
pub fn generate_synth<S: Scalar>(cfg: &SynthConfig) -> Result<(CountSeries<S>, CountSeries<S>)> {
    cfg.validate()?;
    let stride = stride_for_frequency(cfg.f)?;
    let clean: Vec<f64> = (0..cfg.t_base)
        .map(|n| {
            let n = n as f64;
            cfg.a * (cfg.omega * n).sin() + cfg.b + cfg.c * n
        })
        .collect();
    let noisy: Vec<f64> = if cfg.d == 0.0 {
        clean.clone()
    } else {
        let mut rng = SeedStreams::new(cfg.seed).rng(Stream::Observation);
        clean
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (x + cfg.d * z).max(0.0)
            })
            .collect()
    };
    let to_series = |v: Vec<f64>| CountSeries::new(v.into_iter().map(S::of).collect());
    Ok((
        decimate_by(&to_series(clean), stride),
        decimate_by(&to_series(noisy), stride),
    ))
}

/// Column positions in a check-in file (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckInLayout {
    pub user: usize,
    pub time: usize,
    pub venue: usize,
}

impl Default for CheckInLayout {
    fn default() -> Self {
        Self {
            user: 0,
            time: 1,
            venue: 2,
        }
    }
}

impl CheckInLayout {
    /// `user, time, lat, lon, venue`.
    pub const GOWALLA: CheckInLayout = CheckInLayout {
        user: 0,
        time: 1,
        venue: 4,
    };
    /// `user, venue, category id, category, lat, lon, tz offset, time`.
    pub const FOURSQUARE: CheckInLayout = CheckInLayout {
        user: 0,
        time: 7,
        venue: 1,
    };

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "gowalla" => Some(Self::GOWALLA),
            "foursquare" => Some(Self::FOURSQUARE),
            _ => None,
        }
    }
}

impl std::str::FromStr for CheckInLayout {
    type Err = Error;

    /// A preset name or three comma-separated column indices `user,time,venue`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(layout) = Self::preset(s) {
            return Ok(layout);
        }
        let cols: Vec<usize> = s
            .split(',')
            .map(|c| c.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidConfig(format!("bad column layout '{s}'")))?;
        match cols[..] {
            [user, time, venue] => Ok(Self { user, time, venue }),
            _ => Err(Error::InvalidConfig(format!(
                "column layout needs three indices user,time,venue, got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckInOptions {
    pub venue: String,
    pub bin_seconds: i64,
    /// Inclusive start of the window, epoch seconds. Defaults to the earliest
    /// matching record.
    pub t_start: Option<i64>,
    /// Exclusive end of the window. Defaults to one second past the latest
    /// matching record.
    pub t_end: Option<i64>,
    /// Count each user at most once per bin.
    pub dedup: bool,
    pub layout: CheckInLayout,
    /// Skip the first line.
    pub has_header: bool,
}

impl CheckInOptions {
    pub fn new(venue: impl Into<String>, bin_seconds: i64) -> Self {
        Self {
            venue: venue.into(),
            bin_seconds,
            t_start: None,
            t_end: None,
            dedup: true,
            layout: CheckInLayout::default(),
            has_header: false,
        }
    }
}

/// Check-in record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckInRecord {
    pub user_id: String,
    pub venue_id: String,
    pub timestamp: i64,
}

/// Binned check-in counts for one venue plus participation statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckInSeries {
    pub series: CountSeries,
    /// Max over users of the number of distinct bins they appear in.
    pub empirical_i: u32,
    /// Max over users of their total check-ins in the window.
    pub empirical_i_raw: u32,
    /// Max over (user, bin) of check-ins.
    pub max_per_bin: u32,
    /// Records for the venue inside the window, before deduplication.
    pub matched_records: u64,
    /// No record matched the venue in the window.
    pub unknown_venue: bool,
}

/// Summary written by the `ingest` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub venue: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub bin_seconds: i64,
    pub t_start: i64,
    pub t_end: i64,
    #[serde(rename = "I")]
    pub empirical_i: u32,
    #[serde(rename = "I_raw")]
    pub empirical_i_raw: u32,
    pub max_per_bin: u32,
    pub matched_records: u64,
    pub total: f64,
    pub dedup: bool,
    pub unknown_venue: bool,
}

impl CheckInSeries {
    pub fn report(&self, opts: &CheckInOptions) -> IngestReport {
        let t_start = self.series.origin();
        IngestReport {
            venue: opts.venue.clone(),
            t: self.series.len(),
            bin_seconds: opts.bin_seconds,
            t_start,
            t_end: t_start + opts.bin_seconds * self.series.len() as i64,
            empirical_i: self.empirical_i,
            empirical_i_raw: self.empirical_i_raw,
            max_per_bin: self.max_per_bin,
            matched_records: self.matched_records,
            total: self.series.values().iter().sum(),
            dedup: opts.dedup,
            unknown_venue: self.unknown_venue,
        }
    }
}

/// Parses epoch seconds, RFC 3339, `YYYY-MM-DD HH:MM:SS` (UTC), or
/// `Tue Apr 03 18:00:09 +0000 2012`.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then(|| v.floor() as i64);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    if let Ok(dt) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
        return Some(dt.timestamp());
    }
    None
}

fn detect_delimiter(text: &str) -> u8 {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Reads all records of a check-in file, skipping blank lines.
pub fn read_checkins<R: Read>(
    mut reader: R,
    layout: CheckInLayout,
    has_header: bool,
) -> Result<Vec<CheckInRecord>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(&text))
        .has_headers(has_header)
        .flexible(true)
        .quoting(false)
        .from_reader(text.as_bytes());
    let needed = layout.user.max(layout.time).max(layout.venue) + 1;
    let mut out = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() < needed {
            return Err(Error::ParseError {
                line,
                message: format!("expected at least {needed} columns, found {}", rec.len()),
            });
        }
        let user = rec[layout.user].trim();
        let venue = rec[layout.venue].trim();
        if user.is_empty() || venue.is_empty() {
            return Err(Error::ParseError {
                line,
                message: "empty user or venue id".into(),
            });
        }
        let timestamp = parse_timestamp(&rec[layout.time]).ok_or_else(|| Error::ParseError {
            line,
            message: format!("unparseable timestamp '{}'", &rec[layout.time]),
        })?;
        out.push(CheckInRecord {
            user_id: user.to_string(),
            venue_id: venue.to_string(),
            timestamp,
        });
    }
    Ok(out)
}

/// Venues ordered by number of records, most visited first; ties break on
/// the venue id.
pub fn venue_ranking(records: &[CheckInRecord]) -> Vec<(String, u64)> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for r in records {
        *counts.entry(&r.venue_id).or_default() += 1;
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().map(|(v, c)| (v.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Bins one venue's check-ins into `ceil((t_end - t_start) / bin_seconds)`
/// steps.
pub fn ingest_checkins<R: Read>(reader: R, opts: &CheckInOptions) -> Result<CheckInSeries> {
    let records = read_checkins(reader, opts.layout, opts.has_header)?;
    bin_checkins(&records, opts)
}

pub fn bin_checkins(records: &[CheckInRecord], opts: &CheckInOptions) -> Result<CheckInSeries> {
    if opts.bin_seconds <= 0 {
        return Err(Error::InvalidParams(format!(
            "bin width must be positive, got {}",
            opts.bin_seconds
        )));
    }
    let venue: Vec<&CheckInRecord> = records.iter().filter(|r| r.venue_id == opts.venue).collect();
    let t_start = opts
        .t_start
        .or_else(|| venue.iter().map(|r| r.timestamp).min())
        .unwrap_or(0);
    let t_end = opts
        .t_end
        .or_else(|| venue.iter().map(|r| r.timestamp + 1).max())
        .unwrap_or(t_start + opts.bin_seconds);
    if t_end <= t_start {
        return Err(Error::InvalidParams(format!(
            "empty window [{t_start}, {t_end})"
        )));
    }
    let t = ((t_end - t_start) as u64).div_ceil(opts.bin_seconds as u64) as usize;

    let mut counts = vec![0u64; t];
    let mut per_user_bin: HashMap<(&str, usize), u32> = HashMap::new();
    let mut raw_per_user: HashMap<&str, u32> = HashMap::new();
    let mut matched = 0u64;
    for r in venue.iter().filter(|r| (t_start..t_end).contains(&r.timestamp)) {
        let bin = ((r.timestamp - t_start) / opts.bin_seconds) as usize;
        matched += 1;
        *raw_per_user.entry(&r.user_id).or_default() += 1;
        let seen = per_user_bin.entry((&r.user_id, bin)).or_default();
        if *seen == 0 || !opts.dedup {
            counts[bin] += 1;
        }
        *seen += 1;
    }

    let mut bins_per_user: HashMap<&str, u32> = HashMap::new();
    for &(user, _) in per_user_bin.keys() {
        *bins_per_user.entry(user).or_default() += 1;
    }
    let series = CountSeries::with_sampling(
        counts.into_iter().map(|c| c as f64).collect(),
        opts.bin_seconds as f64,
        t_start,
    )?;
    validate_values(series.values(), Integrality::Required)?;
    Ok(CheckInSeries {
        series,
        empirical_i: bins_per_user.values().copied().max().unwrap_or(0),
        empirical_i_raw: raw_per_user.values().copied().max().unwrap_or(0),
        max_per_bin: per_user_bin.values().copied().max().unwrap_or(0),
        matched_records: matched,
        unknown_venue: matched == 0,
    })
}

#[derive(Debug, Deserialize)]
struct SeriesRow {
    t: String,
    value: String,
}

/// Reads a `t,value` CSV whose `t` column runs 0, 1, 2, ...
pub fn ingest_series<R: Read>(reader: R, integrality: Integrality) -> Result<CountSeries> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(Error::ParseError {
            line: 1,
            message: "expected header 't,value'".into(),
        });
    }
    let mut values = Vec::new();
    for row in csv.deserialize::<SeriesRow>() {
        let row = row?;
        let line = values.len() + 2;
        let t: usize = row.t.parse().map_err(|_| Error::ParseError {
            line,
            message: format!("bad index '{}'", row.t),
        })?;
        if t != values.len() {
            return Err(Error::GapInIndex {
                expected: values.len(),
                found: t,
            });
        }
        let v: f64 = row.value.parse().map_err(|_| Error::ParseError {
            line,
            message: format!("bad value '{}'", row.value),
        })?;
        values.push(v);
    }
    validate_values(&values, integrality)?;
    Ok(CountSeries::new(values))
}

/// Writes `t,value` rows with shortest round-trip formatting.
pub fn write_series_csv<S: Scalar, W: Write>(values: &[S], writer: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "t,value")?;
    for (t, v) in values.iter().enumerate() {
        writeln!(w, "{t},{v}")?;
    }
    w.flush()?;
    Ok(())
}
