//! Flat `key = value` study configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. Command-line
//! overrides are applied afterwards and win. Lists are comma separated.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use cfem_core::assembly::Method;
use cfem_core::linear_solver::{PressureFix, SolverConfig, SolverMethod};
use cfem_core::mms::PressureNorm;
use cfem_core::models::Case;
use cfem_core::stabilization::{SeriesTruncation, StabConfig, SubscaleMode};
use thiserror::Error;

pub const KEYS: &[&str] = &[
    "case",
    "grids",
    "dts",
    "methods",
    "time.theta",
    "time.T",
    "time.dt",
    "time.picard",
    "stab.c1",
    "stab.c2",
    "stab.c3",
    "stab.subscale_mode",
    "stab.series",
    "stab.pressure_eps",
    "solver.method",
    "solver.tol",
    "solver.max_iters",
    "solver.pressure_fix",
    "estimate",
    "estimator.advection",
    "norm.pressure",
    "out",
    "csv.walltime",
];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Malformed { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("length mismatch: {grids} grids but {dts} time steps")]
    LengthMismatch { grids: usize, dts: usize },
    #[error("grids must strictly double, found {0:?}")]
    NotDoubling(Vec<usize>),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Advection {
    Discrete,
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub case: Case,
    pub grids: Vec<usize>,
    pub dts: Vec<f64>,
    pub methods: Vec<Method>,
    pub theta: f64,
    pub t_final: f64,
    pub picard_iterations: usize,
    pub stab: StabConfig,
    pub solver: SolverConfig,
    pub estimate: bool,
    pub advection: Advection,
    pub pressure_norm: PressureNorm,
    pub out: Option<PathBuf>,
    pub walltime: bool,
}

impl StudyConfig {
    pub fn defaults(case: Case) -> Self {
        let grids = vec![10, 20, 40, 80];
        StudyConfig {
            case,
            dts: halving(0.1, grids.len()),
            grids,
            methods: vec![Method::Galerkin, Method::Asgs],
            theta: 1.0,
            t_final: 1.0,
            picard_iterations: 0,
            stab: StabConfig::default(),
            solver: SolverConfig::default(),
            estimate: false,
            advection: Advection::Discrete,
            pressure_norm: PressureNorm::L2H1,
            out: None,
            walltime: false,
        }
    }
}

fn halving(first: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| first / (1u64 << i) as f64).collect()
}

/// Ordered assignments from files and flags.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignments(Vec<(String, String)>);

impl Assignments {
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: i + 1,
                text: raw.to_string(),
            })?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Assignments(out))
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse_text(&text)
    }

    /// Parses a single `key=value` override.
    pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
        s.split_once('=')
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .ok_or_else(|| ConfigError::Malformed {
                line: 0,
                text: s.to_string(),
            })
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.0.push((key.into(), value.into()));
    }

    pub fn extend(&mut self, other: Assignments) {
        self.0.extend(other.0);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

fn invalid(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| invalid(key, value, e))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect()
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

/// Builds a validated configuration; later assignments override earlier ones.
pub fn parse_config(assignments: &Assignments) -> Result<StudyConfig, ConfigError> {
    for (k, _) in assignments.iter() {
        if !KEYS.contains(&k) {
            return Err(ConfigError::UnknownKey(k.to_string()));
        }
    }
    let case_text = assignments.get("case").ok_or(ConfigError::Missing("case"))?;
    let case: Case = scalar("case", case_text)?;
    let mut cfg = StudyConfig::defaults(case);

    let mut first_dt = None;
    let mut dts = None;
    for key in KEYS {
        let Some(v) = assignments.get(key) else { continue };
        match *key {
            "case" => {}
            "grids" => cfg.grids = list(key, v)?,
            "dts" => dts = Some(list::<f64>(key, v)?),
            "methods" => cfg.methods = list(key, v)?,
            "time.theta" => cfg.theta = scalar(key, v)?,
            "time.T" => cfg.t_final = scalar(key, v)?,
            "time.dt" => first_dt = Some(scalar::<f64>(key, v)?),
            "time.picard" => cfg.picard_iterations = scalar(key, v)?,
            "stab.c1" => cfg.stab.c1 = scalar(key, v)?,
            "stab.c2" => cfg.stab.c2 = scalar(key, v)?,
            "stab.c3" => cfg.stab.c3 = scalar(key, v)?,
            "stab.subscale_mode" => cfg.stab.mode = scalar::<SubscaleMode>(key, v)?,
            "stab.series" => cfg.stab.series = scalar::<SeriesTruncation>(key, v)?,
            "stab.pressure_eps" => cfg.stab.pressure_regularization = scalar(key, v)?,
            "solver.method" => {
                cfg.solver.method = match v {
                    "direct" => SolverMethod::DirectLu,
                    "bicgstab" => SolverMethod::BicgstabIlu0,
                    _ => return Err(invalid(key, v, "expected direct or bicgstab")),
                }
            }
            "solver.tol" => cfg.solver.tolerance = scalar(key, v)?,
            "solver.max_iters" => cfg.solver.max_iterations = scalar(key, v)?,
            "solver.pressure_fix" => {
                cfg.solver.pressure_fix = match v {
                    "pin-node" => PressureFix::PinNode,
                    "mean-shift" => PressureFix::MeanShift,
                    _ => return Err(invalid(key, v, "expected pin-node or mean-shift")),
                }
            }
            "estimate" => cfg.estimate = boolean(key, v)?,
            "estimator.advection" => {
                cfg.advection = match v {
                    "discrete" => Advection::Discrete,
                    "exact" => Advection::Exact,
                    _ => return Err(invalid(key, v, "expected discrete or exact")),
                }
            }
            "norm.pressure" => {
                cfg.pressure_norm = match v {
                    "l2" => PressureNorm::L2L2,
                    "h1" => PressureNorm::L2H1,
                    _ => return Err(invalid(key, v, "expected l2 or h1")),
                }
            }
            "out" => cfg.out = Some(PathBuf::from(v)),
            "csv.walltime" => cfg.walltime = boolean(key, v)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }

    cfg.dts = match (dts, first_dt) {
        (Some(d), _) => d,
        (None, Some(dt)) => halving(dt, cfg.grids.len()),
        (None, None) => halving(
            0.1 * 10.0 / cfg.grids.first().copied().unwrap_or(10) as f64,
            cfg.grids.len(),
        ),
    };
    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &StudyConfig) -> Result<(), ConfigError> {
    if cfg.grids.is_empty() {
        return Err(invalid("grids", "", "at least one grid is required"));
    }
    if cfg.grids.len() != cfg.dts.len() {
        return Err(ConfigError::LengthMismatch {
            grids: cfg.grids.len(),
            dts: cfg.dts.len(),
        });
    }
    if cfg.grids[0] == 0 || cfg.grids.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(ConfigError::NotDoubling(cfg.grids.clone()));
    }
    if cfg.methods.is_empty() {
        return Err(invalid("methods", "", "at least one method is required"));
    }
    for &dt in &cfg.dts {
        let steps = (cfg.t_final / dt).round();
        if !(dt > 0.0) || steps < 1.0 || (steps * dt - cfg.t_final).abs() > 1e-12 {
            return Err(invalid("dts", &dt.to_string(), "must divide time.T"));
        }
    }
    if cfg.theta != 0.0 && cfg.theta != 1.0 {
        return Err(invalid("time.theta", &cfg.theta.to_string(), "expected 0 or 1"));
    }
    for (key, c) in [
        ("stab.c1", cfg.stab.c1),
        ("stab.c2", cfg.stab.c2),
        ("stab.c3", cfg.stab.c3),
    ] {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(key, &c.to_string(), "must be positive"));
        }
    }
    if !(cfg.stab.pressure_regularization >= 0.0) {
        return Err(invalid(
            "stab.pressure_eps",
            &cfg.stab.pressure_regularization.to_string(),
            "must be non-negative",
        ));
    }
    cfg.solver.validate().map_err(|e| invalid("solver", "", e))?;
    Ok(())
}
