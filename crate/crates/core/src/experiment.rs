//! Experiment specs, parameter sweeps and result emission.
//!
//! A spec is a TOML file with an optional `[config]` table (any
//! [`SystemConfig`] field; missing fields take the reference defaults) and
//! an optional `[sweep]` table naming one axis and its values:
//!
//! ```toml
//! protocols = ["PS", "DS", "TS"]
//! baselines = ["end_fed"]
//! seed = 7
//!
//! [config]
//! num_pas_per_direction = 20
//!
//! [sweep]
//! axis = "transmit_power_dbm"
//! values = [20, 25, 30, 35, 40]
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{solve_end_fed, solve_random_precoding, solve_uniform_pinching, DEFAULT_REALIZATIONS};
use crate::error::{Error, Result};
use crate::solver::{solve, ConvergenceTrace, SolverOptions};
use crate::{Protocol, Scenario, SystemConfig};

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TransmitPowerDbm,
    NumPorts,
    NumPasPerDirection,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TransmitPowerDbm => "transmit_power_dbm",
            SweepAxis::NumPorts => "num_ports",
            SweepAxis::NumPasPerDirection => "num_pas_per_direction",
        }
    }

    fn current(self, config: &SystemConfig) -> f64 {
        match self {
            SweepAxis::TransmitPowerDbm => config.transmit_power_dbm,
            SweepAxis::NumPorts => config.num_ports as f64,
            SweepAxis::NumPasPerDirection => config.num_pas_per_direction as f64,
        }
    }

    /// `config` with this axis set to `value`.
    pub fn apply(self, config: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut c = config.clone();
        let count = || -> Result<usize> {
            if value.fract() != 0.0 || value < 1.0 || value > u32::MAX as f64 {
                return Err(Error::config(self.name(), format!("sweep value {value} is not a positive integer")));
            }
            Ok(value as usize)
        };
        match self {
            SweepAxis::TransmitPowerDbm => c.transmit_power_dbm = value,
            SweepAxis::NumPorts => c.num_ports = count()?,
            SweepAxis::NumPasPerDirection => c.num_pas_per_direction = count()?,
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    EndFed,
    RandomPrecoding,
    UniformPinching,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::EndFed, Baseline::RandomPrecoding, Baseline::UniformPinching];
}

/// One solver configuration reported as a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Full(Protocol),
    EndFed,
    RandomPrecoding(Protocol),
    UniformPinching(Protocol),
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Full(p) => write!(f, "{p}"),
            Scheme::EndFed => f.write_str("end_fed"),
            Scheme::RandomPrecoding(p) => write!(f, "{p}_random_precoding"),
            Scheme::UniformPinching(p) => write!(f, "{p}_uniform_pinching"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub config: SystemConfig,
    pub sweep: Option<Sweep>,
    pub protocols: Vec<Protocol>,
    pub baselines: Vec<Baseline>,
    /// Random-precoding draws per point.
    pub realizations: usize,
    pub output: Option<PathBuf>,
    /// Base seed; sweep point `i` uses `seed + i`.
    pub seed: u64,
    /// Measure wall-clock time per row. Off by default so output is
    /// byte-reproducible.
    pub record_wall_time: bool,
    /// Directory for per-row convergence traces (JSON).
    pub trace_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            config: SystemConfig::default(),
            sweep: None,
            protocols: Protocol::ALL.to_vec(),
            baselines: Vec::new(),
            realizations: DEFAULT_REALIZATIONS,
            output: None,
            seed: 0,
            record_wall_time: false,
            trace_dir: None,
        }
    }
}

impl ExperimentSpec {
    /// Check every invariant; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.protocols.is_empty() && self.baselines.is_empty() {
            return Err(Error::config("protocols", "at least one protocol is required"));
        }
        if self.baselines.iter().any(|b| *b != Baseline::EndFed) && self.protocols.is_empty() {
            return Err(Error::config("protocols", "protocol baselines need at least one protocol"));
        }
        if self.baselines.contains(&Baseline::RandomPrecoding) && self.realizations == 0 {
            return Err(Error::config("realizations", "must be at least 1"));
        }
        self.config.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("values", "sweep needs at least one value"));
            }
            for &v in &sweep.values {
                if !v.is_finite() {
                    return Err(Error::config("values", format!("{v} is not finite")));
                }
                sweep.axis.apply(&self.config, v)?.validate()?;
            }
        }
        Ok(())
    }

    /// Sweep values, or the base config's value of the power axis.
    pub fn points(&self) -> (SweepAxis, Vec<f64>) {
        match &self.sweep {
            Some(s) => (s.axis, s.values.clone()),
            None => (SweepAxis::TransmitPowerDbm, vec![SweepAxis::TransmitPowerDbm.current(&self.config)]),
        }
    }

    /// Schemes in canonical order.
    pub fn schemes(&self) -> Vec<Scheme> {
        let mut out: Vec<Scheme> = self.protocols.iter().map(|&p| Scheme::Full(p)).collect();
        for b in &self.baselines {
            match b {
                Baseline::EndFed => out.push(Scheme::EndFed),
                Baseline::RandomPrecoding => out.extend(
                    self.protocols
                        .iter()
                        .filter(|&&p| p != Protocol::TimeSwitching)
                        .map(|&p| Scheme::RandomPrecoding(p)),
                ),
                Baseline::UniformPinching => out.extend(self.protocols.iter().map(|&p| Scheme::UniformPinching(p))),
            }
        }
        out.dedup();
        out
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("serializing spec: {e}")))
    }
}

/// 1-based line of the first `key =` assignment in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

/// Parse and validate a spec from TOML text; `path` is used in messages.
pub fn parse_config_str(text: &str, path: &Path) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    spec.validate().map_err(|e| match e {
        Error::Config { field, reason } => {
            let location = line_of(text, &field).map(|l| format!("line {l}: ")).unwrap_or_default();
            Error::Parse {
                path: path.to_path_buf(),
                message: format!("{location}{field}: {reason}"),
            }
        }
        other => other,
    })?;
    Ok(spec)
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path)
}

/// One (sweep value, scheme) result. Failed points carry NaN rates and the
/// failure message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub scheme: String,
    pub rate_fu: f64,
    pub rate_bu: f64,
    pub rate_sum: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub seed: u64,
    #[serde(skip)]
    pub error: Option<String>,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

struct Outcome {
    fu: f64,
    bu: f64,
    iterations: usize,
    trace: Option<ConvergenceTrace>,
}

fn run_scheme(scenario: &Scenario, scheme: Scheme, realizations: usize, seed: u64, opts: &SolverOptions) -> Result<Outcome> {
    let from = |s: crate::solver::Solution| Outcome {
        fu: s.rates.fu,
        bu: s.rates.bu,
        iterations: s.trace.iterations(),
        trace: Some(s.trace),
    };
    match scheme {
        Scheme::Full(p) => solve(scenario, p, opts).map(from),
        Scheme::EndFed => solve_end_fed(scenario, opts).map(from),
        Scheme::UniformPinching(p) => solve_uniform_pinching(scenario, p, opts).map(from),
        Scheme::RandomPrecoding(p) => solve_random_precoding(scenario, p, realizations, seed, opts).map(|s| Outcome {
            fu: s.mean_fu,
            bu: s.mean_bu,
            iterations: s.mean_iterations.round() as usize,
            trace: None,
        }),
    }
}

/// Run every (sweep value, scheme) pair on a pool of `jobs` threads
/// (0 = rayon default). Rows come back sorted by (scheme, sweep value) and
/// do not depend on `jobs`.
pub fn run_sweep(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let (axis, values) = spec.points();
    let schemes = spec.schemes();
    let tasks: Vec<(usize, f64, Scheme)> = values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| schemes.iter().map(move |&s| (i, v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let opts = SolverOptions::default();
    let mut rows: Vec<(ResultRow, Option<ConvergenceTrace>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, value, scheme)| {
                let seed = spec.seed.wrapping_add(i as u64);
                let start = Instant::now();
                let outcome = axis.apply(&spec.config, value).and_then(|mut c| {
                    c.rng_seed = seed;
                    let scenario = Scenario::new(c)?;
                    run_scheme(&scenario, scheme, spec.realizations, seed, &opts)
                });
                let wall = if spec.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 };
                let mut row = ResultRow {
                    sweep_value: value,
                    scheme: scheme.to_string(),
                    rate_fu: f64::NAN,
                    rate_bu: f64::NAN,
                    rate_sum: f64::NAN,
                    iterations: 0,
                    wall_time_s: wall,
                    seed,
                    error: None,
                };
                match outcome {
                    Ok(o) => {
                        row.rate_fu = o.fu;
                        row.rate_bu = o.bu;
                        row.rate_sum = o.fu + o.bu;
                        row.iterations = o.iterations;
                        (row, o.trace)
                    }
                    Err(e) => {
                        log::error!("{} at {} = {value}: {e}", row.scheme, axis.name());
                        row.error = Some(e.to_string());
                        (row, None)
                    }
                }
            })
            .collect()
    });
    rows.sort_by(|a, b| row_order(&a.0, &b.0));
    if let Some(dir) = &spec.trace_dir {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
        for (row, trace) in &rows {
            if let Some(trace) = trace {
                let path = dir.join(format!("{}_{}_{}.json", row.scheme, axis.name(), format_sig(row.sweep_value)));
                let body = serde_json::to_string_pretty(trace).map_err(|e| Error::Internal(e.to_string()))?;
                std::fs::write(&path, body).map_err(|source| Error::Io { path, source })?;
            }
        }
    }
    Ok(rows.into_iter().map(|(r, _)| r).collect())
}

/// Least-squares slope of sum rate against `log2(P_linear)` over the rows
/// with `P >= 20` dBm, i.e. bits/s/Hz per doubling of power.
pub fn fit_dof_slope(rows: &[ResultRow]) -> Result<f64> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sweep_value >= 20.0 && r.rate_sum.is_finite())
        .map(|r| (r.sweep_value / 10.0 * 10f64.log2(), r.rate_sum))
        .collect();
    if points.len() < 3 {
        return Err(Error::Domain(format!(
            "slope fit needs at least 3 finite points at >= 20 dBm, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::config("format", format!("unknown format {s:?} (csv or json)"))),
        }
    }
}

pub const CSV_HEADER: [&str; 8] = ["sweep_value", "scheme", "rate_fu", "rate_bu", "rate_sum", "iterations", "wall_time_s", "seed"];

/// Nine significant digits, plain notation where reasonable, trailing
/// zeros trimmed. Deterministic across platforms.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round first so the exponent reflects the printed value.
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..15).contains(&exp) {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{exp}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let fixed = format!("{x:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

fn rounded(x: f64) -> f64 {
    format_sig(x).parse().unwrap_or(f64::NAN)
}

pub fn render_results(rows: &[ResultRow], format: Format) -> Result<String> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Error::Internal(format!("csv: {e}"));
            w.write_record(CSV_HEADER).map_err(io)?;
            for r in rows {
                w.write_record([
                    format_sig(r.sweep_value),
                    r.scheme.clone(),
                    format_sig(r.rate_fu),
                    format_sig(r.rate_bu),
                    format_sig(r.rate_sum),
                    r.iterations.to_string(),
                    format_sig(r.wall_time_s),
                    r.seed.to_string(),
                ])
                .map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        Format::Json => {
            let rows: Vec<ResultRow> = rows
                .iter()
                .map(|r| ResultRow {
                    sweep_value: rounded(r.sweep_value),
                    rate_fu: rounded(r.rate_fu),
                    rate_bu: rounded(r.rate_bu),
                    rate_sum: rounded(r.rate_sum),
                    wall_time_s: rounded(r.wall_time_s),
                    ..r.clone()
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&rows).map_err(|e| Error::Internal(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Write rows to `path`, or stdout when `path` is `None`.
pub fn emit_results(rows: &[ResultRow], format: Format, path: Option<&Path>) -> Result<()> {
    let body = render_results(rows, format)?;
    match path {
        Some(p) => std::fs::write(p, body).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(body.as_bytes())
                .map_err(|source| Error::Io { path: "<stdout>".into(), source })
        }
    }
}

/// Parse rows back from CSV text. Failure messages are not stored in CSV.
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse { path: "<csv>".into(), message: e.to_string() }))
        .collect()
}

/// Total order used for output rows.
pub fn row_order(a: &ResultRow, b: &ResultRow) -> Ordering {
    a.scheme.cmp(&b.scheme).then(a.sweep_value.total_cmp(&b.sweep_value))
}
