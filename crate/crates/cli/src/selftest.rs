//! Property suite: structural identities of the discretization that need no
//! reference tables.

use std::fmt::Write as _;

use cfem_core::assembly::{assemble_convection_block, Assembler, CoupledState, Method, StepContext, ZeroForcing};
use cfem_core::linear_solver::{pin_pressure, pressure_mean, LinearSolver, SolverConfig, SolverMethod};
use cfem_core::mesh::{build_unit_square_mesh, StructuredTriMesh};
use cfem_core::mms::{forcing_f, forcing_g, interpolation_errors, ExactFields, ExactSolution, ManufacturedForcing};
use cfem_core::models::{Case, CaseModels};
use cfem_core::sparse::CsrMatrix;
use cfem_core::stabilization::{dynamic_tau, StabConfig, SubscaleMode};
use cfem_core::time_stepper::{initialize, run, Problem, RunOptions, SchemeConfig, Stepper};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::direct::FaerLu;
use crate::dispatch::Dispatch;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = cfem_core::Result<(bool, String)>;
type Property = (&'static str, fn() -> Outcome);

pub const SEED: u64 = 20_240_601;

/// Runs every property and reports one [`Check`] each.
pub fn run_selftest() -> Vec<Check> {
    let props: [Property; 8] = [
        ("convection skew identity", skew_identity),
        ("continuity subscale vanishes", continuity_subscale),
        ("quasi-static term structure", quasi_static_structure),
        ("tau positivity and dynamic reduction", tau_bounds),
        ("forcing vs finite differences", forcing_oracle),
        ("interpolation orders", interpolation_orders),
        ("solver residual and pressure mean", solver_residual),
        ("zero-data invariance", zero_invariance),
    ];
    props
        .into_iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => Check { name, passed, detail },
            Err(e) => Check {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}

fn skew_identity() -> Outcome {
    let mesh = build_unit_square_mesh(4)?;
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a: Vec<[f64; 2]> = (0..mesh.node_count())
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let v: Vec<f64> = (0..mesh.node_count())
            .map(|n| {
                if mesh.is_boundary(n) {
                    0.0
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let c = assemble_convection_block(&mesh, &a, 1.0)?;
        let mut q = 0.0;
        let mut scale = 0.0;
        for (r, &vr) in v.iter().enumerate() {
            let (cols, vals) = c.row(r);
            for (&col, &cv) in cols.iter().zip(vals) {
                q += vr * cv * v[col];
                scale += (vr * cv * v[col]).abs();
            }
        }
        worst = worst.max(q.abs() / scale);
    }
    Ok((
        worst <= 1e-12,
        format!("max |vᵀC(a)v| / Σ|vᵢCᵢⱼvⱼ| = {worst:.2e} over 100 draws"),
    ))
}

fn manufactured_step<'a>(
    mesh: &'a StructuredTriMesh,
    models: &'a CaseModels,
    stab: &'a StabConfig,
    forcing: &'a ManufacturedForcing,
    method: Method,
    dt: f64,
) -> cfem_core::Result<Problem<'a>> {
    Ok(Problem {
        mesh,
        models,
        stab,
        method,
        forcing,
        exact: Some(&ExactSolution),
        scheme: SchemeConfig::new(1.0, dt, 1.0)?,
        solver: SolverConfig::default(),
    })
}

fn continuity_subscale() -> Outcome {
    let mut checked = 0;
    for case in Case::ALL {
        let mesh = build_unit_square_mesh(8)?;
        let models = case.models();
        let forcing = ManufacturedForcing { models };
        let stab = StabConfig::default();
        let problem = manufactured_step(&mesh, &models, &stab, &forcing, Method::Asgs, 0.125)?;
        let mut stepper = Stepper::new(problem)?;
        let asm = Assembler::new(&mesh);
        let mut state = initialize(&mesh, &ExactSolution)?;
        let mut solver = FaerLu::new(1e-12);
        for n in 0..4 {
            state.time = n as f64 * 0.125;
            let step = asm.assemble_step(&problem.context(), &state, &state, stepper.history())?;
            if step.subscales.iter().any(|d| d.d2 != 0.0) {
                return Ok((false, format!("{case}: nonzero d₂ at step {n}")));
            }
            if n > 0 && step.subscales.iter().all(|d| d.is_zero()) {
                return Ok((false, format!("{case}: history never reached the assembly")));
            }
            checked += step.subscales.len();
            state = stepper.step(&mut solver, &state)?.state;
        }
    }
    Ok((true, format!("d₂ = 0 on {checked} element steps, all cases")))
}

fn matrix_gap(a: &CsrMatrix, b: &CsrMatrix, c: &CsrMatrix, scale: f64) -> f64 {
    // max |a − b − scale (c − b)|
    a.values()
        .iter()
        .zip(b.values())
        .zip(c.values())
        .map(|((&a, &b), &c)| (a - b - scale * (c - b)).abs())
        .fold(0.0, f64::max)
}

fn quasi_static_structure() -> Outcome {
    let mesh = build_unit_square_mesh(6)?;
    let models = Case::IIa.models();
    let forcing = ManufacturedForcing { models };
    let state = initialize(&mesh, &ExactSolution)?;
    let asm = Assembler::new(&mesh);
    let dyn_stab = StabConfig::default();
    let problem = manufactured_step(&mesh, &models, &dyn_stab, &forcing, Method::Asgs, 0.1)?;
    let history = asm.element_residuals(&problem.context(), &state, &state, &state)?;

    let assemble = |scale: f64, method| {
        let stab = StabConfig {
            mode: SubscaleMode::QuasiStatic,
            tau_scale: scale,
            ..StabConfig::default()
        };
        let ctx = StepContext {
            mesh: &mesh,
            models: &models,
            stab: &stab,
            method,
            forcing: &forcing,
            dt: 0.1,
            theta: 1.0,
        };
        asm.assemble_step(&ctx, &state, &state, Some(&history))
    };
    let g = assemble(1.0, Method::Galerkin)?;
    let a1 = assemble(1.0, Method::Asgs)?;
    let a2 = assemble(2.0, Method::Asgs)?;
    let fractions_one = a1.stab.iter().all(|p| p.static_fraction() == [1.0; 4]);
    let no_history = a1.subscales.iter().all(|d| d.is_zero());
    let scale = g.system.matrix.frobenius_norm();
    let gap = matrix_gap(&a2.system.matrix, &g.system.matrix, &a1.system.matrix, 2.0) / scale;
    let passed = fractions_one && no_history && gap <= 1e-12;
    Ok((
        passed,
        format!("τ⁻¹τ′ = I: {fractions_one}, d = 0: {no_history}, nonlinearity in τ {gap:.1e}"),
    ))
}

fn tau_bounds() -> Outcome {
    let mut count = 0usize;
    for case in Case::ALL {
        let models = case.models();
        for n in [10, 20, 40, 80] {
            let mesh = build_unit_square_mesh(n)?;
            let asm = Assembler::new(&mesh);
            let stab = StabConfig::default();
            let ctx = StepContext {
                mesh: &mesh,
                models: &models,
                stab: &stab,
                method: Method::Asgs,
                forcing: &ZeroForcing,
                dt: 1.0 / n as f64,
                theta: 1.0,
            };
            for t in [0.0, 0.5] {
                let state = CoupledState::interpolate(&mesh, &ExactSolution, t);
                for (k, tri) in mesh.triangles().iter().enumerate() {
                    let tau = asm.element_tau(&ctx, k, tri, &state)?;
                    let td = dynamic_tau(&tau, models.params.rho, ctx.dt, SubscaleMode::Dynamic);
                    let positive = [tau.t1, tau.t2, tau.t3].iter().all(|v| v.is_finite() && *v > 0.0);
                    if !positive || !(td.t1 < tau.t1 && td.t3 < tau.t3 && td.t2 == tau.t2) {
                        return Ok((false, format!("{case} n={n} element {k}: τ={tau:?} τ′={td:?}")));
                    }
                    count += 1;
                }
            }
        }
    }
    Ok((true, format!("{count} element evaluations")))
}

/// Strong-form residual operators evaluated by central differences of the exact fields.
fn fd_forcing(x: f64, y: f64, t: f64, models: &CaseModels) -> ([f64; 2], f64) {
    let e = ExactSolution;
    let h = 1e-5;
    let rho = models.params.rho;
    let u = e.velocity(x, y, t);
    let c = e.concentration(x, y, t);
    let d = |f: &dyn Fn(f64, f64, f64) -> f64| {
        [
            (f(x + h, y, t) - f(x - h, y, t)) / (2.0 * h),
            (f(x, y + h, t) - f(x, y - h, t)) / (2.0 * h),
            (f(x, y, t + h) - f(x, y, t - h)) / (2.0 * h),
        ]
    };
    let mut f = [0.0; 2];
    let gp = d(&|x, y, t| e.pressure(x, y, t));
    let mu = models.viscosity.at(c);
    for i in 0..2 {
        let du = d(&|x, y, t| e.velocity(x, y, t)[i]);
        let lap =
            d(&|x, y, t| e.velocity_gradient(x, y, t)[i][0])[0] + d(&|x, y, t| e.velocity_gradient(x, y, t)[i][1])[1];
        f[i] = rho * du[2] + rho * (u[0] * du[0] + u[1] * du[1]) - mu * lap + gp[i];
    }
    let dc = d(&|x, y, t| e.concentration(x, y, t));
    let flux_x = d(&|x, y, t| models.diffusion.at(x, y, t)[0] * e.concentration_gradient(x, y, t)[0])[0];
    let flux_y = d(&|x, y, t| models.diffusion.at(x, y, t)[1] * e.concentration_gradient(x, y, t)[1])[1];
    let g = dc[2] - flux_x - flux_y + u[0] * dc[0] + u[1] * dc[1] + models.params.alpha * c;
    (f, g)
}

fn forcing_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED + 1);
    let mut worst: f64 = 0.0;
    for case in Case::ALL {
        let models = case.models();
        for _ in 0..100 {
            let (x, y, t) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let (f_fd, g_fd) = fd_forcing(x, y, t, &models);
            let f = forcing_f(x, y, t, &models);
            let g = forcing_g(x, y, t, &models);
            worst = worst
                .max((f[0] - f_fd[0]).abs())
                .max((f[1] - f_fd[1]).abs())
                .max((g - g_fd).abs());
        }
    }
    Ok((worst <= 1e-6, format!("max deviation {worst:.2e} at 500 points")))
}

fn interpolation_orders() -> Outcome {
    use std::f64::consts::PI;
    let mut errs = Vec::new();
    for n in [10, 20, 40, 80] {
        let mesh = build_unit_square_mesh(n)?;
        errs.push(interpolation_errors(
            &mesh,
            |x, y| (PI * x).sin() * (PI * y).sin(),
            |x, y| {
                [
                    PI * (PI * x).cos() * (PI * y).sin(),
                    PI * (PI * x).sin() * (PI * y).cos(),
                ]
            },
        ));
    }
    let mut detail = String::from("L² / H¹ rates:");
    let mut passed = true;
    for w in errs.windows(2) {
        let l2 = (w[0].0 / w[1].0).log2();
        let h1 = (w[0].1 / w[1].1).log2();
        passed &= (l2 - 2.0).abs() <= 0.1 && (h1 - 1.0).abs() <= 0.1;
        let _ = write!(detail, " {l2:.3}/{h1:.3}");
    }
    Ok((passed, detail))
}

fn independent_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let mut r2 = 0.0;
    let mut b2 = 0.0;
    for (i, &bi) in b.iter().enumerate() {
        let (cols, vals) = a.row(i);
        let ax: f64 = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        r2 += (bi - ax) * (bi - ax);
        b2 += bi * bi;
    }
    (r2 / b2).sqrt()
}

fn solver_residual() -> Outcome {
    let mesh = build_unit_square_mesh(10)?;
    let models = Case::Ia.models();
    let forcing = ManufacturedForcing { models };
    let stab = StabConfig::default();
    let state = initialize(&mesh, &ExactSolution)?;
    let mut worst: f64 = 0.0;
    let mut fallbacks = 0;
    for method in [Method::Galerkin, Method::Asgs] {
        let problem = manufactured_step(&mesh, &models, &stab, &forcing, method, 0.1)?;
        let mut step = Assembler::new(&mesh).assemble_step(&problem.context(), &state, &state, None)?;
        pin_pressure(&mut step.system, 0, 0.0);
        let iterative = SolverConfig {
            method: SolverMethod::BicgstabIlu0,
            ..SolverConfig::default()
        };
        let solvers: [Box<dyn LinearSolver>; 2] = [Box::new(FaerLu::new(1e-10)), Box::new(Dispatch::new(&iterative))];
        for mut s in solvers {
            let mut x = vec![0.0; step.system.size()];
            let rec = s.solve(&step.system.matrix, &step.system.rhs, &mut x)?;
            fallbacks += rec.fell_back as usize;
            worst = worst.max(independent_residual(&step.system.matrix, &step.system.rhs, &x));
        }
    }
    let problem = manufactured_step(&mesh, &models, &stab, &forcing, Method::Asgs, 0.1)?;
    let mut short = problem;
    short.scheme = SchemeConfig::new(1.0, 0.1, 0.2)?;
    let out = run(short, state, &mut FaerLu::new(1e-10), RunOptions::default())?;
    let mean = pressure_mean(&mesh, &out.final_state).abs();
    Ok((
        worst <= 1e-10 && mean <= 1e-12,
        format!("max relative residual {worst:.1e} ({fallbacks} iterative fallbacks), |mean p| {mean:.1e}"),
    ))
}

fn zero_invariance() -> Outcome {
    let mesh = build_unit_square_mesh(6)?;
    let stab = StabConfig::default();
    for case in Case::ALL {
        let models = case.models();
        for method in [Method::Galerkin, Method::Asgs] {
            let problem = Problem {
                mesh: &mesh,
                models: &models,
                stab: &stab,
                method,
                forcing: &ZeroForcing,
                exact: None,
                scheme: SchemeConfig::new(1.0, 0.25, 1.0)?,
                solver: SolverConfig::default(),
            };
            let out = run(
                problem,
                CoupledState::zeros(mesh.node_count(), 0.0),
                &mut FaerLu::new(1e-10),
                RunOptions {
                    store_trajectory: true,
                    estimate: None,
                },
            )?;
            let trajectory = out.trajectory.expect("stored");
            if trajectory.iter().any(|s| s.values.iter().any(|&v| v != 0.0)) {
                return Ok((false, format!("{case} {}: nonzero state", method.key())));
            }
        }
    }
    Ok((true, "all states exactly zero, 5 cases × 2 methods × 4 steps".into()))
}
