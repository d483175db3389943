//! Scenario database, batch campaigns and pass/fail evaluation.
//!
//! A scenario database is a directory holding `index.toml` plus one TOML file
//! per scenario:
//!
//! ```toml
//! # index.toml
//! scenarios = ["hover.toml", "motor_failure.toml"]
//! ```
//!
//! ```toml
//! # hover.toml
//! name = "hover"
//! vehicle = "builtin:f450"   # or a path relative to this file
//! seed = 7
//! stop_time = 30.0
//!
//! [[script]]
//! t = 1.0
//! mode = "position"
//! position = [0.0, 0.0, -10.0]
//!
//! [[faults]]
//! target = "actuator_0"
//! kind = { type = "loss_of_effectiveness", factor = 0.0 }
//! trigger = { at = 12.0 }
//!
//! [[expect]]
//! metric = "max_altitude_error"
//! after = 15.0
//! max = 0.2
//! ```
//!
//! Optional tables: `[sim]` (physics_hz, controller_divider, log_decimation,
//! crash_speed), `[environment]` and `[initial]`.
//!
//! A case passes iff the run completes and every bound holds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::EnvironmentConfig;
use crate::faults::FaultSpec;
use crate::simloop::{self, InitialState, Log, LogError, ScriptEntry, SimConfig, SimSetup, Termination, VehicleConfig};

pub const BUILTIN_PREFIX: &str = "builtin:";
pub const INDEX_FILE: &str = "index.toml";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("scenario `{name}`: {message}")]
    Invalid { name: String, message: String },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error(transparent)]
    Log(#[from] LogError),
}

fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    toml::from_str(&read_text(path)?).map_err(|e| HarnessError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Run settings a scenario may override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub physics_hz: f64,
    pub controller_divider: u32,
    pub log_decimation: u32,
    pub crash_speed: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            physics_hz: d.physics_hz,
            controller_divider: d.controller_divider,
            log_decimation: d.log_decimation,
            crash_speed: d.crash_speed,
        }
    }
}

/// Expected performance: `min <= value <= max` for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricBound {
    pub metric: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    /// Only rows with `t >= after` are considered, s.
    #[serde(default)]
    pub after: Option<f64>,
    /// Error band for `settling_time`, m.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl MetricBound {
    pub fn max(metric: &str, max: f64) -> Self {
        Self {
            metric: metric.into(),
            min: None,
            max: Some(max),
            after: None,
            tolerance: None,
        }
    }

    pub fn after(mut self, t: f64) -> Self {
        self.after = Some(t);
        self
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let metric = Metric::parse(&self.metric)?;
        let bad = |m: &str| {
            Err(HarnessError::Invalid {
                name: self.metric.clone(),
                message: m.into(),
            })
        };
        if self.min.is_none() && self.max.is_none() {
            return bad("bound needs `min` or `max`");
        }
        if self.min.iter().chain(&self.max).chain(&self.after).any(|v| v.is_nan()) {
            return bad("bound values must be numbers");
        }
        if let (Some(lo), Some(hi)) = (self.min, self.max) {
            if lo > hi {
                return bad("min exceeds max");
            }
        }
        if self.after.is_some() && !metric.windowed() {
            return bad("`after` does not apply to this metric");
        }
        match self.tolerance {
            Some(_) if metric != Metric::SettlingTime => return bad("`tolerance` only applies to settling_time"),
            Some(tol) if !(tol > 0.0) => return bad("tolerance must be positive"),
            _ => {}
        }
        Ok(())
    }

    fn holds(&self, value: Option<f64>) -> bool {
        match value {
            Some(v) if !v.is_nan() => self.min.is_none_or(|lo| v >= lo) && self.max.is_none_or(|hi| v <= hi),
            _ => false,
        }
    }
}

/// One packaged test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// `builtin:<name>` or a vehicle file path relative to the scenario file.
    pub vehicle: String,
    #[serde(default)]
    pub seed: u64,
    /// s
    pub stop_time: f64,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub expect: Vec<MetricBound>,
}

pub fn builtin_vehicle(name: &str) -> Option<VehicleConfig> {
    match name {
        "f450" => Some(VehicleConfig::f450()),
        _ => None,
    }
}

impl Scenario {
    /// Resolves the vehicle reference against `base_dir`.
    pub fn resolve_vehicle(&self, base_dir: &Path) -> Result<VehicleConfig, HarnessError> {
        match self.vehicle.strip_prefix(BUILTIN_PREFIX) {
            Some(b) => builtin_vehicle(b).ok_or_else(|| HarnessError::Invalid {
                name: self.name.clone(),
                message: format!("unknown builtin vehicle `{b}`"),
            }),
            None => parse_toml(&base_dir.join(&self.vehicle)),
        }
    }

    /// Builds a validated run setup.
    pub fn setup(&self, vehicle: VehicleConfig) -> Result<SimSetup, HarnessError> {
        let invalid = |message: String| HarnessError::Invalid {
            name: self.name.clone(),
            message,
        };
        for b in &self.expect {
            b.validate().map_err(|e| invalid(e.to_string()))?;
        }
        let setup = SimSetup {
            sim: SimConfig {
                physics_hz: self.sim.physics_hz,
                controller_divider: self.sim.controller_divider,
                stop_time: self.stop_time,
                seed: self.seed,
                log_decimation: self.sim.log_decimation,
                crash_speed: self.sim.crash_speed,
            },
            vehicle,
            environment: self.environment.clone(),
            script: self.script.clone(),
            faults: self.faults.clone(),
            initial: self.initial,
        };
        setup.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(setup)
    }
}

/// Scenario file loaded and checked, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub path: Option<PathBuf>,
    pub setup: SimSetup,
}

impl LoadedScenario {
    pub fn from_scenario(scenario: Scenario, base_dir: &Path) -> Result<Self, HarnessError> {
        let vehicle = scenario.resolve_vehicle(base_dir)?;
        let setup = scenario.setup(vehicle)?;
        Ok(Self {
            scenario,
            path: None,
            setup,
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let scenario: Scenario = parse_toml(path)?;
        let mut s = Self::from_scenario(scenario, path.parent().unwrap_or(Path::new(".")))?;
        s.path = Some(path.to_owned());
        Ok(s)
    }
}

/// One database entry; load failures are kept so they can be reported.
#[derive(Debug)]
pub struct CaseInput {
    pub name: String,
    pub file: Option<PathBuf>,
    pub scenario: Result<LoadedScenario, String>,
}

impl CaseInput {
    pub fn new(s: LoadedScenario) -> Self {
        Self {
            name: s.scenario.name.clone(),
            file: s.path.clone(),
            scenario: Ok(s),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Index {
    scenarios: Vec<String>,
}

/// Loads every scenario listed in `dir/index.toml`. Only a missing or
/// malformed index is an error; bad scenarios come back as failed entries.
pub fn load_database(dir: &Path) -> Result<Vec<CaseInput>, HarnessError> {
    let index: Index = parse_toml(&dir.join(INDEX_FILE))?;
    Ok(index
        .scenarios
        .iter()
        .map(|file| {
            let path = dir.join(file);
            let fallback = Path::new(file)
                .file_stem()
                .map_or(file.clone(), |s| s.to_string_lossy().into());
            match LoadedScenario::load(&path) {
                Ok(s) => CaseInput::new(s),
                Err(e) => CaseInput {
                    name: fallback,
                    file: Some(path),
                    scenario: Err(e.to_string()),
                },
            }
        })
        .collect())
}

/// Registered metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    /// max |p - p_sp| over rows with a position setpoint, m
    MaxPositionError,
    /// max |z - z_sp|, m
    MaxAltitudeError,
    /// mean |p - p_sp| over the last 2 s of the log, m
    SteadyStatePositionError,
    /// time from the last setpoint change until |p - p_sp| stays within the
    /// tolerance (default 0.1 m), s; infinite if it never does
    SettlingTime,
    /// max angle between body down and earth down, deg
    MaxTiltDeg,
    /// fastest touchdown, m/s; 0 without touchdowns
    GroundImpactSpeed,
    /// RMS of truth minus estimated position, m
    EstimatorPositionRms,
    /// RMS of truth minus estimated Euler angles, deg
    EstimatorAttitudeRms,
}

pub const STEADY_STATE_WINDOW: f64 = 2.0;
pub const SETTLING_TOLERANCE: f64 = 0.1;

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::MaxPositionError,
        Metric::MaxAltitudeError,
        Metric::SteadyStatePositionError,
        Metric::SettlingTime,
        Metric::MaxTiltDeg,
        Metric::GroundImpactSpeed,
        Metric::EstimatorPositionRms,
        Metric::EstimatorAttitudeRms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::MaxPositionError => "max_position_error",
            Self::MaxAltitudeError => "max_altitude_error",
            Self::SteadyStatePositionError => "steady_state_position_error",
            Self::SettlingTime => "settling_time",
            Self::MaxTiltDeg => "max_tilt_deg",
            Self::GroundImpactSpeed => "ground_impact_speed",
            Self::EstimatorPositionRms => "estimator_position_rms",
            Self::EstimatorAttitudeRms => "estimator_attitude_rms",
        }
    }

    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| HarnessError::UnknownMetric(name.into()))
    }

    fn windowed(self) -> bool {
        !matches!(
            self,
            Self::SteadyStatePositionError | Self::SettlingTime | Self::GroundImpactSpeed
        )
    }

    /// `None` when the log has no rows the metric applies to.
    pub fn compute(self, log: &Log, after: Option<f64>, tolerance: Option<f64>) -> Result<Option<f64>, HarnessError> {
        let v = LogView::new(log)?;
        let from = after.unwrap_or(f64::NEG_INFINITY);
        let t = &v.t;
        let rows = || (0..log.rows.len()).filter(move |&i| t[i] >= from);
        let max =
            |it: &mut dyn Iterator<Item = f64>| it.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        let rms = |it: &mut dyn Iterator<Item = f64>| {
            let (n, s) = it.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x * x));
            (n > 0).then(|| (s / n as f64).sqrt())
        };
        Ok(match self {
            Self::MaxPositionError => max(&mut rows().filter_map(|i| v.position_error(i))),
            Self::MaxAltitudeError => max(&mut rows().filter_map(|i| v.altitude_error(i))),
            Self::SteadyStatePositionError => {
                let end = v.t.last().copied().unwrap_or(0.0);
                let errs: Vec<f64> = (0..log.rows.len())
                    .filter(|&i| v.t[i] >= end - STEADY_STATE_WINDOW)
                    .filter_map(|i| v.position_error(i))
                    .collect();
                (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
            }
            Self::SettlingTime => v.settling_time(tolerance.unwrap_or(SETTLING_TOLERANCE)),
            Self::MaxTiltDeg => max(&mut rows().map(|i| v.tilt(i).to_degrees())),
            Self::GroundImpactSpeed => Some(touchdown_speeds(log).fold(0.0, f64::max)),
            Self::EstimatorPositionRms => rms(&mut rows().filter_map(|i| v.estimator_position_error(i))),
            Self::EstimatorAttitudeRms => rms(&mut rows().filter_map(|i| v.estimator_attitude_error(i))),
        })
    }
}

fn touchdown_speeds(log: &Log) -> impl Iterator<Item = f64> + '_ {
    log.events
        .iter()
        .filter_map(|e| e.text.strip_prefix("touchdown ")?.parse::<f64>().ok())
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Column-major copies of the series the metrics use.
struct LogView {
    t: Vec<f64>,
    p: [Vec<f64>; 3],
    sp: [Vec<f64>; 3],
    est: [Vec<f64>; 3],
    q: [Vec<f64>; 4],
    euler: [Vec<f64>; 3],
    est_euler: [Vec<f64>; 3],
}

impl LogView {
    fn new(log: &Log) -> Result<Self, HarnessError> {
        let s = |n: &str| log.series(n).map_err(HarnessError::from);
        let s3 = |a: &str, b: &str, c: &str| -> Result<[Vec<f64>; 3], HarnessError> { Ok([s(a)?, s(b)?, s(c)?]) };
        Ok(Self {
            t: s("t")?,
            p: s3("x", "y", "z")?,
            sp: s3("sp_x", "sp_y", "sp_z")?,
            est: s3("est_x", "est_y", "est_z")?,
            q: [s("qw")?, s("qx")?, s("qy")?, s("qz")?],
            euler: s3("roll", "pitch", "yaw")?,
            est_euler: s3("est_roll", "est_pitch", "est_yaw")?,
        })
    }

    fn diff_norm(a: &[Vec<f64>; 3], b: &[Vec<f64>; 3], i: usize) -> Option<f64> {
        let d: Vec<f64> = (0..3).map(|k| a[k][i] - b[k][i]).collect();
        d.iter()
            .all(|x| x.is_finite())
            .then(|| d.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    fn position_error(&self, i: usize) -> Option<f64> {
        Self::diff_norm(&self.p, &self.sp, i)
    }

    fn altitude_error(&self, i: usize) -> Option<f64> {
        let e = (self.p[2][i] - self.sp[2][i]).abs();
        e.is_finite().then_some(e)
    }

    fn estimator_position_error(&self, i: usize) -> Option<f64> {
        Self::diff_norm(&self.p, &self.est, i)
    }

    fn estimator_attitude_error(&self, i: usize) -> Option<f64> {
        let d: Vec<f64> = (0..3)
            .map(|k| wrap_pi(self.euler[k][i] - self.est_euler[k][i]))
            .collect();
        d.iter()
            .all(|x| x.is_finite())
            .then(|| d.iter().map(|x| x * x).sum::<f64>().sqrt().to_degrees())
    }

    fn tilt(&self, i: usize) -> f64 {
        let (x, y) = (self.q[1][i], self.q[2][i]);
        let n2: f64 = self.q.iter().map(|c| c[i] * c[i]).sum();
        (1.0 - 2.0 * (x * x + y * y) / n2).clamp(-1.0, 1.0).acos()
    }

    fn settling_time(&self, tolerance: f64) -> Option<f64> {
        let n = self.t.len();
        let same = |i: usize, j: usize| (0..3).all(|k| self.sp[k][i].to_bits() == self.sp[k][j].to_bits());
        let start = (1..n).rev().find(|&i| !same(i, i - 1)).unwrap_or(0);
        self.position_error(start)?;
        let mut settled_at = None;
        for i in start..n {
            match self.position_error(i) {
                Some(e) if e <= tolerance => {
                    settled_at.get_or_insert(self.t[i]);
                }
                _ => settled_at = None,
            }
        }
        Some(settled_at.map_or(f64::INFINITY, |t| t - self.t[start]))
    }
}

/// Termination recovered from log events.
pub fn termination_from_log(log: &Log) -> Termination {
    for e in &log.events {
        if let Some(rest) = e.text.strip_prefix("crash") {
            let speed = rest.trim().parse().unwrap_or(f64::NAN);
            return Termination::Crashed {
                t: e.t,
                impact_speed: speed,
            };
        }
        if let Some(reason) = e.text.strip_prefix("diverged ") {
            return Termination::Diverged {
                t: e.t,
                reason: reason.into(),
            };
        }
    }
    Termination::Completed
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricResult {
    pub metric: String,
    pub value: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub after: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub metrics: Vec<MetricResult>,
    pub verdict: Verdict,
}

/// Computes every bound's metric and the conjunctive verdict.
pub fn evaluate(log: &Log, expected: &[MetricBound], termination: &Termination) -> Result<Evaluation, HarnessError> {
    let mut metrics = Vec::with_capacity(expected.len());
    for b in expected {
        b.validate()?;
        let value = Metric::parse(&b.metric)?.compute(log, b.after, b.tolerance)?;
        metrics.push(MetricResult {
            metric: b.metric.clone(),
            value,
            min: b.min,
            max: b.max,
            after: b.after,
            tolerance: b.tolerance,
            pass: b.holds(value),
        });
    }
    let ok = metrics.iter().all(|m| m.pass) && *termination == Termination::Completed;
    Ok(Evaluation {
        metrics,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
    })
}

/// Every registered metric over the whole log.
pub fn all_metrics(log: &Log) -> Result<BTreeMap<&'static str, Option<f64>>, HarnessError> {
    Metric::ALL
        .into_iter()
        .map(|m| Ok((m.name(), m.compute(log, None, None)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFormat {
    #[default]
    Csv,
    Binary,
}

impl LogFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Binary => "bin",
        }
    }

    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => Self::Binary,
            _ => Self::Csv,
        }
    }
}

pub fn write_log(log: &Log, path: &Path) -> Result<(), HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    match LogFormat::for_path(path) {
        LogFormat::Csv => log.write_csv(&mut w),
        LogFormat::Binary => log.write_binary(&mut w),
    }
    .and_then(|_| io::Write::flush(&mut w))
    .map_err(io_err)
}

pub fn read_log(path: &Path) -> Result<Log, HarnessError> {
    let file = fs::File::open(path).map_err(|source| HarnessError::Io {
        path: path.to_owned(),
        source,
    })?;
    let r = BufReader::new(file);
    Ok(match LogFormat::for_path(path) {
        LogFormat::Csv => Log::read_csv(r)?,
        LogFormat::Binary => Log::read_binary(r)?,
    })
}

/// Campaign-wide overrides.
#[derive(Debug, Clone, Default)]
pub struct CampaignOptions {
    pub seed: Option<u64>,
    pub log_decimation: Option<u32>,
    /// Logs are written here as `<name>.<ext>` when set.
    pub log_dir: Option<PathBuf>,
    pub log_format: LogFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineEntry {
    pub t: f64,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub file: Option<PathBuf>,
    pub verdict: Verdict,
    pub termination: Option<Termination>,
    pub metrics: Vec<MetricResult>,
    pub fault_timeline: Vec<TimelineEntry>,
    pub log_path: Option<PathBuf>,
    pub sim_time: f64,
    /// Wall clock, s.
    pub runtime: f64,
    pub error: Option<String>,
}

impl CaseReport {
    fn error(name: String, file: Option<PathBuf>, message: String) -> Self {
        Self {
            name,
            file,
            verdict: Verdict::Error,
            termination: None,
            metrics: Vec::new(),
            fault_timeline: Vec::new(),
            log_path: None,
            sim_time: 0.0,
            runtime: 0.0,
            error: Some(message),
        }
    }

    /// Everything except wall-clock fields.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |c: &Self| Self {
            runtime: 0.0,
            ..c.clone()
        };
        let a = serde_json::to_string(&strip(self)).expect("serializable");
        let b = serde_json::to_string(&strip(other)).expect("serializable");
        a == b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub cases: Vec<CaseReport>,
    pub summary: Summary,
}

impl TestReport {
    pub fn from_cases(cases: Vec<CaseReport>) -> Self {
        let count = |v| cases.iter().filter(|c| c.verdict == v).count();
        let summary = Summary {
            total: cases.len(),
            passed: count(Verdict::Pass),
            failed: count(Verdict::Fail),
            errors: count(Verdict::Error),
        };
        Self { cases, summary }
    }

    pub fn all_passed(&self) -> bool {
        self.summary.passed == self.summary.total
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.cases {
            let verdict = match c.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::Error => "ERROR",
            };
            let cause = c.termination.as_ref().map_or("-", |t| t.name());
            let _ = writeln!(
                s,
                "{verdict:5} {} ({cause}, {:.2} s sim, {:.3} s wall)",
                c.name, c.sim_time, c.runtime
            );
            if let Some(Termination::Crashed { t, impact_speed }) = &c.termination {
                let _ = writeln!(s, "      ground impact at t={t:.3} s, {impact_speed:.2} m/s");
            }
            if let Some(Termination::Diverged { t, reason }) = &c.termination {
                let _ = writeln!(s, "      diverged at t={t:.3} s: {reason}");
            }
            for m in &c.metrics {
                let value = m.value.map_or("n/a".to_string(), |v| format!("{v:.6}"));
                let lo = m.min.map_or(String::new(), |v| format!("{v} <= "));
                let hi = m.max.map_or(String::new(), |v| format!(" <= {v}"));
                let after = m.after.map_or(String::new(), |t| format!(" (t >= {t})"));
                let mark = if m.pass { "ok" } else { "VIOLATED" };
                let _ = writeln!(s, "      {}: {lo}{value}{hi}{after} {mark}", m.metric);
            }
            for e in &c.fault_timeline {
                let _ = writeln!(s, "      t={:.3} {}", e.t, e.event);
            }
            if let Some(e) = &c.error {
                let _ = writeln!(s, "      error: {e}");
            }
        }
        let m = &self.summary;
        let _ = writeln!(
            s,
            "total {} passed {} failed {} errors {}",
            m.total, m.passed, m.failed, m.errors
        );
        s
    }
}

/// Runs one scenario in a fresh world, evaluates it and writes its log
/// to `log_path` when given.
pub fn run_scenario(input: &CaseInput, opts: &CampaignOptions, log_path: Option<&Path>) -> CaseReport {
    let loaded = match &input.scenario {
        Ok(s) => s,
        Err(e) => return CaseReport::error(input.name.clone(), input.file.clone(), e.clone()),
    };
    let mut setup = loaded.setup.clone();
    if let Some(seed) = opts.seed {
        setup.sim.seed = seed;
    }
    if let Some(d) = opts.log_decimation {
        setup.sim.log_decimation = d;
    }
    let start = Instant::now();
    let result = match simloop::run(setup) {
        Ok(r) => r,
        Err(e) => return CaseReport::error(input.name.clone(), input.file.clone(), e.to_string()),
    };
    let eval = match evaluate(&result.log, &loaded.scenario.expect, &result.termination) {
        Ok(e) => e,
        Err(e) => return CaseReport::error(input.name.clone(), input.file.clone(), e.to_string()),
    };
    let fault_timeline = result
        .log
        .events
        .iter()
        .filter(|e| e.text.starts_with("fault_") || e.text.starts_with("crash") || e.text.starts_with("diverged"))
        .map(|e| TimelineEntry {
            t: e.t,
            event: e.text.clone(),
        })
        .collect();
    let mut report = CaseReport {
        name: input.name.clone(),
        file: input.file.clone(),
        verdict: eval.verdict,
        termination: Some(result.termination),
        metrics: eval.metrics,
        fault_timeline,
        log_path: None,
        sim_time: result.sim_time,
        runtime: 0.0,
        error: None,
    };
    if let Some(path) = log_path {
        let dir = path
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let written = fs::create_dir_all(dir)
            .map_err(|source| HarnessError::Io {
                path: dir.to_owned(),
                source,
            })
            .and_then(|_| write_log(&result.log, path));
        match written {
            Ok(()) => report.log_path = Some(path.to_owned()),
            Err(e) => {
                report.verdict = Verdict::Error;
                report.error = Some(e.to_string());
            }
        }
    }
    report.runtime = start.elapsed().as_secs_f64();
    report
}

/// Campaign case: the log goes to `<log_dir>/<name>.<ext>` when a log
/// directory is set.
pub fn run_case(input: &CaseInput, opts: &CampaignOptions) -> CaseReport {
    let path = opts
        .log_dir
        .as_ref()
        .map(|d| d.join(format!("{}.{}", input.name, opts.log_format.extension())));
    run_scenario(input, opts, path.as_deref())
}

/// Runs every case on a pool of `parallelism` workers. Results keep the
/// input order and do not depend on the pool size.
pub fn run_campaign(db: &[CaseInput], parallelism: usize, opts: &CampaignOptions) -> TestReport {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    let cases = pool.install(|| db.par_iter().map(|c| run_case(c, opts)).collect());
    TestReport::from_cases(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::Vec3;
    use crate::refctrl::Setpoint;

    fn synthetic(offset: f64) -> Log {
        let columns: Vec<String> = simloop::log_columns(4);
        let idx = |n: &str| columns.iter().position(|c| c == n).unwrap();
        let mut rows = Vec::new();
        for k in 0..=100 {
            let mut r = vec![0.0; columns.len()];
            r[idx("t")] = k as f64 * 0.1;
            r[idx("qw")] = 1.0;
            r[idx("z")] = -10.0 + offset;
            r[idx("sp_z")] = -10.0;
            r[idx("est_z")] = -10.0 + offset;
            rows.push(r);
        }
        Log {
            columns,
            rows,
            events: Vec::new(),
        }
    }

    #[test]
    fn perfect_tracking_passes_with_zero_errors() {
        let log = synthetic(0.0);
        let bounds: Vec<_> = [
            "max_position_error",
            "max_altitude_error",
            "max_tilt_deg",
            "estimator_position_rms",
        ]
        .iter()
        .map(|m| MetricBound::max(m, 0.2))
        .collect();
        let e = evaluate(&log, &bounds, &Termination::Completed).unwrap();
        assert_eq!(e.verdict, Verdict::Pass);
        assert!(e.metrics.iter().all(|m| m.value == Some(0.0)), "{e:?}");
    }

    #[test]
    fn constant_offset_fails_with_its_value() {
        let log = synthetic(0.3);
        let e = evaluate(
            &log,
            &[MetricBound::max("max_altitude_error", 0.2)],
            &Termination::Completed,
        )
        .unwrap();
        assert_eq!(e.verdict, Verdict::Fail);
        assert!((e.metrics[0].value.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn unknown_metric_is_rejected() {
        let log = synthetic(0.0);
        let r = evaluate(&log, &[MetricBound::max("max_wobble", 1.0)], &Termination::Completed);
        assert!(matches!(r, Err(HarnessError::UnknownMetric(_))));
    }

    #[test]
    fn crash_fails_even_when_bounds_hold() {
        let log = synthetic(0.0);
        let crash = Termination::Crashed {
            t: 1.0,
            impact_speed: 5.0,
        };
        let e = evaluate(&log, &[MetricBound::max("max_altitude_error", 0.2)], &crash).unwrap();
        assert_eq!(e.verdict, Verdict::Fail);
    }

    #[test]
    fn empty_window_fails_the_bound() {
        let log = synthetic(0.0);
        let e = evaluate(
            &log,
            &[MetricBound::max("max_altitude_error", 0.2).after(100.0)],
            &Termination::Completed,
        )
        .unwrap();
        assert_eq!(e.metrics[0].value, None);
        assert_eq!(e.verdict, Verdict::Fail);
    }

    #[test]
    fn settling_time_measured_from_last_setpoint_change() {
        let mut log = synthetic(0.0);
        let c = |n: &str| log.columns.iter().position(|x| x == n).unwrap();
        let (z, spz) = (c("z"), c("sp_z"));
        // setpoint steps at row 20 (t = 2); error decays linearly to zero by row 50
        for (k, r) in log.rows.iter_mut().enumerate() {
            if k < 20 {
                r[spz] = -5.0;
                r[z] = -5.0;
            } else {
                r[z] = -10.0 + 5.0 * ((50.0 - k as f64) / 30.0).max(0.0);
            }
        }
        let ts = Metric::SettlingTime.compute(&log, None, None).unwrap().unwrap();
        // error <= 0.1 once 5 (50 - k)/30 <= 0.1, i.e. k >= 49.4
        assert!((ts - 3.0).abs() < 1e-9, "{ts}");
    }

    #[test]
    fn tilt_and_impact_metrics() {
        let mut log = synthetic(0.0);
        let c = |n: &str| log.columns.iter().position(|x| x == n).unwrap();
        let (qw, qx) = (c("qw"), c("qx"));
        let half = 20f64.to_radians() / 2.0;
        log.rows[7][qw] = half.cos();
        log.rows[7][qx] = half.sin();
        log.events.push(simloop::LogEvent {
            row: 3,
            t: 0.3,
            text: "touchdown 1.25".into(),
        });
        let tilt = Metric::MaxTiltDeg.compute(&log, None, None).unwrap().unwrap();
        assert!((tilt - 20.0).abs() < 1e-9);
        assert_eq!(Metric::GroundImpactSpeed.compute(&log, None, None).unwrap(), Some(1.25));
    }

    #[test]
    fn bound_validation() {
        assert!(MetricBound {
            metric: "max_tilt_deg".into(),
            min: None,
            max: None,
            after: None,
            tolerance: None,
        }
        .validate()
        .is_err());
        assert!(MetricBound::max("ground_impact_speed", 1.0)
            .after(2.0)
            .validate()
            .is_err());
        assert!(MetricBound::max("max_tilt_deg", 10.0).after(2.0).validate().is_ok());
        let mut b = MetricBound::max("max_tilt_deg", 10.0);
        b.tolerance = Some(0.5);
        assert!(b.validate().is_err());
        b.metric = "settling_time".into();
        assert!(b.validate().is_ok());
    }

    #[test]
    fn scenario_toml_round_trip() {
        let s = Scenario {
            name: "hover".into(),
            description: String::new(),
            vehicle: "builtin:f450".into(),
            seed: 3,
            stop_time: 5.0,
            sim: SimSettings::default(),
            environment: EnvironmentConfig::default(),
            initial: InitialState::default(),
            script: vec![ScriptEntry {
                t: 1.0,
                setpoint: Setpoint::Position {
                    position: Vec3::new(0.0, 0.0, -2.0),
                    yaw: 0.0,
                },
            }],
            faults: Vec::new(),
            expect: vec![MetricBound::max("max_altitude_error", 0.2).after(4.0)],
        };
        let text = toml::to_string(&s).unwrap();
        let back: Scenario = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(LoadedScenario::from_scenario(back, Path::new(".")).is_ok());
    }

    #[test]
    fn unknown_builtin_and_unsorted_script_are_invalid() {
        let mut s: Scenario = toml::from_str("name = \"x\"\nvehicle = \"builtin:nope\"\nstop_time = 1.0").unwrap();
        assert!(LoadedScenario::from_scenario(s.clone(), Path::new(".")).is_err());
        s.vehicle = "builtin:f450".into();
        s.script = vec![
            ScriptEntry {
                t: 2.0,
                setpoint: Setpoint::Idle,
            },
            ScriptEntry {
                t: 1.0,
                setpoint: Setpoint::Idle,
            },
        ];
        assert!(LoadedScenario::from_scenario(s, Path::new(".")).is_err());
    }

    #[test]
    fn termination_recovered_from_events() {
        let mut log = synthetic(0.0);
        assert_eq!(termination_from_log(&log), Termination::Completed);
        log.events.push(simloop::LogEvent {
            row: 5,
            t: 0.5,
            text: "crash 7.5".into(),
        });
        assert_eq!(
            termination_from_log(&log),
            Termination::Crashed {
                t: 0.5,
                impact_speed: 7.5
            }
        );
    }
}
