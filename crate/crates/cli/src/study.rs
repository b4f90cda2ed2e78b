//! Convergence studies: one run per (grid, method), rates, CSV and tables.

use std::fmt::Write as _;
use std::time::Instant;

use cfem_core::assembly::Method;
use cfem_core::estimator::AdvectionSource;
use cfem_core::mesh::build_unit_square_mesh;
use cfem_core::mms::{rate_of_convergence, ErrorReport, ExactSolution, ManufacturedForcing};
use cfem_core::models::Case;
use cfem_core::time_stepper::{initialize, run, Problem, RunOptions, SchemeConfig};
use thiserror::Error;

use crate::config::{Advection, StudyConfig};
use crate::dispatch::Dispatch;

pub const CSV_HEADER: &str = "case,method,theta,n_div,dt,total_error,roc,eta,walltime_s";

#[derive(Debug, Error)]
#[error("{case} {method} n={n_div} dt={dt}: {source}")]
pub struct StudyError {
    pub case: Case,
    pub method: &'static str,
    pub n_div: usize,
    pub dt: f64,
    pub source: cfem_core::Error,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub case: Case,
    pub method: Method,
    pub theta: f64,
    pub n_div: usize,
    pub dt: f64,
    /// Total error in the configured pressure norm.
    pub total_error: f64,
    pub roc: Option<f64>,
    pub eta: Option<f64>,
    pub walltime_s: f64,
    pub errors: ErrorReport,
    pub max_relative_residual: f64,
    pub fallbacks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<Row>,
    walltime: bool,
}

/// Runs one configuration cell.
pub fn run_cell(cfg: &StudyConfig, method: Method, n_div: usize, dt: f64) -> Result<Row, StudyError> {
    let fail = |source| StudyError {
        case: cfg.case,
        method: method.key(),
        n_div,
        dt,
        source,
    };
    let started = Instant::now();
    let models = cfg.case.models();
    let forcing = ManufacturedForcing { models };
    let mesh = build_unit_square_mesh(n_div).map_err(fail)?;
    let mut scheme = SchemeConfig::new(cfg.theta, dt, cfg.t_final).map_err(fail)?;
    scheme.picard_iterations = cfg.picard_iterations;
    let problem = Problem {
        mesh: &mesh,
        models: &models,
        stab: &cfg.stab,
        method,
        forcing: &forcing,
        exact: Some(&ExactSolution),
        scheme,
        solver: cfg.solver,
    };
    let estimate = cfg.estimate.then_some(match cfg.advection {
        Advection::Discrete => AdvectionSource::Discrete,
        Advection::Exact => AdvectionSource::Exact(&ExactSolution),
    });
    let initial = initialize(&mesh, &ExactSolution).map_err(fail)?;
    let mut solver = Dispatch::new(&cfg.solver);
    let out = run(
        problem,
        initial,
        &mut solver,
        RunOptions {
            store_trajectory: false,
            estimate,
        },
    )
    .map_err(fail)?;
    if !out.final_state.is_finite() {
        return Err(fail(cfem_core::Error::Solver("non-finite state")));
    }
    let errors = out.errors.expect("exact solution supplied");
    Ok(Row {
        case: cfg.case,
        method,
        theta: cfg.theta,
        n_div,
        dt,
        total_error: errors.total_with(cfg.pressure_norm),
        roc: None,
        eta: out.estimator.map(|e| e.eta),
        walltime_s: started.elapsed().as_secs_f64(),
        errors,
        max_relative_residual: out.max_relative_residual,
        fallbacks: out.fallbacks,
    })
}

/// Runs every (method, grid) pair in method-major order.
pub fn run_study(cfg: &StudyConfig) -> Result<ConvergenceReport, StudyError> {
    run_study_with(cfg, |_| {})
}

/// As [`run_study`], reporting each finished row.
pub fn run_study_with(cfg: &StudyConfig, mut progress: impl FnMut(&Row)) -> Result<ConvergenceReport, StudyError> {
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let mut prev: Option<f64> = None;
        for (&n, &dt) in cfg.grids.iter().zip(&cfg.dts) {
            let mut row = run_cell(cfg, method, n, dt)?;
            if let Some(p) = prev {
                row.roc = Some(rate_of_convergence(p, row.total_error).map_err(|source| StudyError {
                    case: cfg.case,
                    method: method.key(),
                    n_div: n,
                    dt,
                    source,
                })?);
            }
            prev = Some(row.total_error);
            progress(&row);
            rows.push(row);
        }
    }
    Ok(ConvergenceReport {
        rows,
        walltime: cfg.walltime,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

impl ConvergenceReport {
    pub fn new(rows: Vec<Row>, walltime: bool) -> Self {
        ConvergenceReport { rows, walltime }
    }

    pub fn method_rows(&self, method: Method) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn errors(&self, method: Method) -> Vec<f64> {
        self.method_rows(method).map(|r| r.total_error).collect()
    }

    pub fn rates(&self, method: Method) -> Vec<f64> {
        self.method_rows(method).filter_map(|r| r.roc).collect()
    }

    /// CSV text; wall time is left blank unless enabled so output is reproducible.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let wall = if self.walltime {
                format!("{:.3}", r.walltime_s)
            } else {
                String::new()
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6e},{},{},{}",
                r.case,
                r.method.key(),
                r.theta,
                r.n_div,
                r.dt,
                r.total_error,
                opt(r.roc),
                opt(r.eta),
                wall
            );
        }
        s
    }

    /// One block per method: time step, grid, total error, rate.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let mut methods: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        for m in methods {
            let _ = writeln!(s, "{}", m.key());
            let _ = writeln!(
                s,
                "{:>10} {:>10} {:>14} {:>9}",
                "Time step", "Grid size", "Total error", "RoC"
            );
            for r in self.method_rows(m) {
                let _ = writeln!(
                    s,
                    "{:>10} {:>10} {:>14.6} {:>9}",
                    r.dt,
                    format!("{0}x{0}", r.n_div),
                    r.total_error,
                    r.roc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
                );
            }
            s.push('\n');
        }
        s
    }

    /// Galerkin and ASGS side by side.
    pub fn comparison(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>10} {:>10} {:>14} {:>9} {:>14} {:>9}",
            "Time step", "Grid size", "Galerkin", "RoC", "ASGS", "RoC"
        );
        let g: Vec<&Row> = self.method_rows(Method::Galerkin).collect();
        let a: Vec<&Row> = self.method_rows(Method::Asgs).collect();
        let cell = |r: Option<&&Row>| match r {
            Some(r) => (
                format!("{:.6}", r.total_error),
                r.roc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            ),
            None => ("".into(), "".into()),
        };
        for i in 0..g.len().max(a.len()) {
            let base = g.get(i).or(a.get(i)).expect("row exists");
            let (ge, gr) = cell(g.get(i));
            let (ae, ar) = cell(a.get(i));
            let _ = writeln!(
                s,
                "{:>10} {:>10} {:>14} {:>9} {:>14} {:>9}",
                base.dt,
                format!("{0}x{0}", base.n_div),
                ge,
                gr,
                ae,
                ar
            );
        }
        s
    }
}
