use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use cfem::config::{parse_config, Assignments, ConfigError, StudyConfig};
use cfem::selftest::run_selftest;
use cfem::study::{run_cell, run_study_with, ConvergenceReport, StudyError};
use cfem_core::assembly::Method;
use cfem_core::mesh::build_unit_square_mesh;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "solver",
    version,
    about = "Coupled Navier-Stokes and transport FEM verification studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single configuration.
    Run(RunArgs),
    /// Run a convergence study and print its table.
    Converge(StudyArgs),
    /// Galerkin and ASGS side by side.
    Compare(StudyArgs),
    /// Run the property suite.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    /// Also compute the residual indicator.
    #[arg(long)]
    estimate: bool,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    grids: Option<String>,
    #[arg(long)]
    dts: Option<String>,
    #[arg(long)]
    methods: Option<String>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10)]
    grid: usize,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long, default_value = "asgs")]
    method: String,
    /// Write the mesh as text and continue.
    #[arg(long)]
    dump_mesh: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Numerical(String),
    Other(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn assignments(common: &Common, extra: &[(&str, Option<String>)]) -> Result<StudyConfig, Failure> {
    let mut a = match &common.config {
        Some(path) => Assignments::read_file(path)?,
        None => Assignments::default(),
    };
    if let Some(c) = &common.case {
        a.push("case", c.clone());
    }
    if let Some(t) = &common.theta {
        a.push("time.theta", t.clone());
    }
    if common.estimate {
        a.push("estimate", "true");
    }
    for (k, v) in extra {
        if let Some(v) = v {
            a.push(*k, v.clone());
        }
    }
    for s in &common.set {
        let (k, v) = Assignments::parse_override(s)?;
        a.push(k, v);
    }
    Ok(parse_config(&a)?)
}

fn study_config(args: &StudyArgs) -> Result<StudyConfig, Failure> {
    assignments(
        &args.common,
        &[
            ("grids", args.grids.clone()),
            ("dts", args.dts.clone()),
            ("methods", args.methods.clone()),
            ("out", args.out.as_ref().map(|p| p.display().to_string())),
        ],
    )
}

fn converge(args: &StudyArgs, compare: bool) -> Result<(), Failure> {
    let mut cfg = study_config(args)?;
    if compare {
        cfg.methods = vec![Method::Galerkin, Method::Asgs];
    }
    let report = run_study_with(&cfg, |r| {
        eprintln!(
            "{} {} n={} dt={} total={:.6} ({:.1}s)",
            r.case,
            r.method.key(),
            r.n_div,
            r.dt,
            r.total_error,
            r.walltime_s
        )
    })?;
    emit(&cfg, &report, compare)
}

fn emit(cfg: &StudyConfig, report: &ConvergenceReport, compare: bool) -> Result<(), Failure> {
    println!("case {}  theta {}", cfg.case, cfg.theta);
    if compare {
        print!("{}", report.comparison());
    } else {
        print!("{}", report.table());
    }
    if let Some(path) = &cfg.out {
        std::fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run_single(args: &RunArgs) -> Result<(), Failure> {
    let dt = args.dt.clone().unwrap_or_else(|| (1.0 / args.grid as f64).to_string());
    let cfg = assignments(
        &args.common,
        &[
            ("grids", Some(args.grid.to_string())),
            ("dts", Some(dt)),
            ("methods", Some(args.method.clone())),
        ],
    )?;
    if let Some(path) = &args.dump_mesh {
        let mesh = build_unit_square_mesh(args.grid).map_err(|e| Failure::Config(e.to_string()))?;
        let mut text = String::new();
        mesh.write_text(&mut text).expect("writing to a string");
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let row = run_cell(&cfg, cfg.methods[0], cfg.grids[0], cfg.dts[0])?;
    let e = row.errors;
    println!(
        "{} {} n={} dt={} theta={}: total {:.6e} (velocity {:.3e}, pressure {:.3e}, pressure gradient {:.3e}, concentration {:.3e})",
        row.case,
        row.method.key(),
        row.n_div,
        row.dt,
        row.theta,
        row.total_error,
        e.velocity,
        e.pressure,
        e.pressure_gradient,
        e.concentration
    );
    if let Some(eta) = row.eta {
        println!("eta {eta:.6e}");
    }
    println!(
        "max relative residual {:.1e}, solver fallbacks {}",
        row.max_relative_residual, row.fallbacks
    );
    Ok(())
}

fn selftest() -> Result<bool, Failure> {
    let checks = run_selftest();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run_single(a).map(|_| true),
        Command::Converge(a) => converge(a, false).map(|_| true),
        Command::Compare(a) => converge(a, true).map(|_| true),
        Command::Selftest => selftest(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
