//! θ-scheme time loop, initial projection and error bookkeeping.

use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{Assembler, CoupledState, Forcing, Method, StepContext};
use crate::basis::{element_gradients, quadrature};
use crate::estimator::{compute_residuals, AdvectionSource, ResidualField};
use crate::linear_solver::{
    conjugate_gradient, fix_pressure_nullspace, pin_pressure, LinearSolver, PressureFix, SolveRecord, SolverConfig,
};
use crate::math::{abs, round};
use crate::mesh::StructuredTriMesh;
use crate::mms::{ErrorAccumulator, ErrorReport, ExactFields};
use crate::models::CaseModels;
use crate::sparse::CsrMatrix;
use crate::stabilization::{ElementResidual, SeriesTruncation, StabConfig, SubscaleMode};
use crate::{Error, Field, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    /// 1 for backward Euler, 0 for Crank–Nicolson.
    pub theta: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Extra fixed-point sweeps re-lagging the convection velocity at `U^{n,θ}`.
    pub picard_iterations: usize,
}

impl SchemeConfig {
    pub fn new(theta: f64, dt: f64, t_final: f64) -> Result<Self> {
        let s = SchemeConfig {
            theta,
            dt,
            t_final,
            picard_iterations: 0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta != 0.0 && self.theta != 1.0 {
            return Err(Error::InvalidParameter("θ must be 0 or 1"));
        }
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::InvalidParameter("dt and T must be positive"));
        }
        let n = round(self.t_final / self.dt);
        if n < 1.0 || abs(n * self.dt - self.t_final) > 1e-12 {
            return Err(Error::InvalidParameter("T must be an integer multiple of dt"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        round(self.t_final / self.dt) as usize
    }

    /// `tⁿ = n·dt`.
    pub fn time_at(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// Everything that defines one simulation.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub mesh: &'a StructuredTriMesh,
    pub models: &'a CaseModels,
    pub stab: &'a StabConfig,
    pub method: Method,
    pub forcing: &'a dyn Forcing,
    /// Exact solution for pressure pinning, error norms and the projected initial state.
    pub exact: Option<&'a dyn ExactFields>,
    pub scheme: SchemeConfig,
    pub solver: SolverConfig,
}

impl<'a> Problem<'a> {
    pub fn context(&self) -> StepContext<'a> {
        StepContext {
            mesh: self.mesh,
            models: self.models,
            stab: self.stab,
            method: self.method,
            forcing: self.forcing,
            dt: self.scheme.dt,
            theta: self.scheme.theta,
        }
    }
}

/// Result of one time step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: CoupledState,
    /// `U^{n,θ}` after the pressure fix.
    pub theta_state: CoupledState,
    pub record: SolveRecord,
}

/// Advances states one step at a time, carrying the subscale history.
pub struct Stepper<'a> {
    problem: Problem<'a>,
    assembler: Assembler<'a>,
    history: Option<Vec<ElementResidual>>,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: Problem<'a>) -> Result<Self> {
        problem.scheme.validate()?;
        problem.solver.validate()?;
        problem.models.params.validate()?;
        Ok(Stepper {
            assembler: Assembler::new(problem.mesh),
            problem,
            history: None,
        })
    }

    pub fn problem(&self) -> &Problem<'a> {
        &self.problem
    }

    pub fn history(&self) -> Option<&[ElementResidual]> {
        self.history.as_deref()
    }

    pub fn step(&mut self, solver: &mut dyn LinearSolver, state_n: &CoupledState) -> Result<StepOutcome> {
        let p = self.problem;
        let ctx = p.context();
        let a = ctx.new_level_weight();
        let b = 1.0 - a;
        let t_theta = ctx.theta_time(state_n.time);
        let pin_value = match (p.solver.pressure_fix, p.exact) {
            (PressureFix::PinNode, Some(e)) => {
                let [x, y] = p.mesh.nodes()[0];
                e.pressure(x, y, t_theta)
            }
            _ => 0.0,
        };

        let mut lagged = state_n.clone();
        let mut y = state_n.clone();
        let mut record = None;
        let mut used = Vec::new();
        for sweep in 0..=p.scheme.picard_iterations {
            if sweep > 0 {
                lagged = y.clone();
                lagged.time = state_n.time;
            }
            let mut step = self
                .assembler
                .assemble_step(&ctx, state_n, &lagged, self.history.as_deref())?;
            pin_pressure(&mut step.system, 0, pin_value);
            used = step.subscales;
            let mut x = y.values.clone();
            let rec = solver.solve(&step.system.matrix, &step.system.rhs, &mut x)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver("non-finite solution"));
            }
            y = CoupledState {
                values: x,
                time: t_theta,
            };
            record = Some(rec);
        }

        let mut next = CoupledState {
            values: y
                .values
                .iter()
                .zip(&state_n.values)
                .map(|(yv, un)| (yv - b * un) / a)
                .collect(),
            time: state_n.time + p.scheme.dt,
        };
        // boundary values are exactly zero by construction; remove recovery roundoff
        for &n in p.mesh.boundary_nodes() {
            for f in [Field::VelocityX, Field::VelocityY, Field::Concentration] {
                next.set(f, n, 0.0);
            }
        }
        fix_pressure_nullspace(&mut y, p.mesh, p.solver.pressure_fix);
        fix_pressure_nullspace(&mut next, p.mesh, p.solver.pressure_fix);

        if p.method == Method::Asgs && p.stab.mode == SubscaleMode::Dynamic {
            let mut r = self.assembler.element_residuals(&ctx, state_n, &lagged, &next)?;
            if p.stab.series == SeriesTruncation::Recursive {
                for (rk, dk) in r.iter_mut().zip(&used) {
                    *rk = rk.plus(dk);
                }
            }
            self.history = Some(r);
        }
        Ok(StepOutcome {
            state: next,
            theta_state: y,
            record: record.expect("at least one sweep"),
        })
    }
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub final_state: CoupledState,
    /// All states `t⁰ … t^N` when requested.
    pub trajectory: Option<Vec<CoupledState>>,
    pub errors: Option<ErrorReport>,
    /// Residual indicator of the last step.
    pub estimator: Option<ResidualField>,
    pub steps: usize,
    pub max_relative_residual: f64,
    pub fallbacks: usize,
}

#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    pub store_trajectory: bool,
    pub estimate: Option<AdvectionSource<'a>>,
}

/// Runs `N = T/dt` steps from `initial`.
pub fn run(
    problem: Problem<'_>,
    initial: CoupledState,
    solver: &mut dyn LinearSolver,
    options: RunOptions<'_>,
) -> Result<RunOutcome> {
    initial.validate(problem.mesh)?;
    let mut stepper = Stepper::new(problem)?;
    let n_steps = problem.scheme.steps();
    let mut acc = problem.exact.map(|_| ErrorAccumulator::new());
    if let (Some(acc), Some(e)) = (acc.as_mut(), problem.exact) {
        acc.record_endpoint(problem.mesh, &initial, e);
    }
    let mut trajectory = options.store_trajectory.then(|| vec![initial.clone()]);
    let mut state = initial;
    let mut max_res: f64 = 0.0;
    let mut fallbacks = 0;
    let mut estimator = None;
    for n in 0..n_steps {
        state.time = problem.scheme.time_at(n);
        let out = stepper.step(solver, &state)?;
        max_res = max_res.max(out.record.relative_residual);
        fallbacks += out.record.fell_back as usize;
        if let (Some(acc), Some(e)) = (acc.as_mut(), problem.exact) {
            acc.record_interval(problem.mesh, &out.theta_state, e, problem.scheme.dt);
            acc.record_endpoint(problem.mesh, &out.state, e);
        }
        if n + 1 == n_steps {
            if let Some(adv) = options.estimate {
                estimator = Some(compute_residuals(
                    problem.mesh,
                    &state,
                    &out.state,
                    problem.scheme.theta,
                    problem.scheme.dt,
                    problem.models,
                    problem.forcing,
                    adv,
                )?);
            }
        }
        if let Some(tr) = trajectory.as_mut() {
            tr.push(out.state.clone());
        }
        state = out.state;
    }
    Ok(RunOutcome {
        final_state: state,
        trajectory,
        errors: acc.map(|a| a.report()),
        estimator,
        steps: n_steps,
        max_relative_residual: max_res,
        fallbacks,
    })
}

/// Scalar P1 mass matrix.
pub fn mass_matrix(mesh: &StructuredTriMesh) -> Result<CsrMatrix> {
    let mut m = CsrMatrix::block_pattern(mesh, 1);
    for (k, tri, g) in mesh.elements() {
        element_gradients(&g, k)?;
        for i in 0..3 {
            for j in 0..3 {
                let v = if i == j { g.area / 6.0 } else { g.area / 12.0 };
                m.add(tri[i], tri[j], v);
            }
        }
    }
    Ok(m)
}

/// L² projection onto P1 functions vanishing on the boundary. `value(k, λ, x, y)`
/// evaluates the target inside element `k` at barycentric point `λ`.
pub fn l2_projection<F>(mesh: &StructuredTriMesh, mut value: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, [f64; 3], f64, f64) -> f64,
{
    let rule = quadrature(4)?;
    let nn = mesh.node_count();
    let mut load = vec![0.0; nn];
    for (k, tri, g) in mesh.elements() {
        for (lam, w) in rule.iter() {
            let [x, y] = g.map_barycentric(lam);
            let v = value(k, lam, x, y);
            for i in 0..3 {
                load[tri[i]] += 2.0 * g.area * w * v * lam[i];
            }
        }
    }
    // interior block of the mass matrix
    let interior: Vec<usize> = (0..nn).filter(|&n| !mesh.is_boundary(n)).collect();
    let mut index = vec![usize::MAX; nn];
    for (i, &n) in interior.iter().enumerate() {
        index[n] = i;
    }
    let full = mass_matrix(mesh)?;
    let mut rows = vec![0usize];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for &n in &interior {
        let (c, v) = full.row(n);
        for (&cj, &vj) in c.iter().zip(v) {
            if index[cj] != usize::MAX {
                cols.push(index[cj]);
                vals.push(vj);
            }
        }
        rows.push(cols.len());
    }
    let mut out = vec![0.0; nn];
    if interior.is_empty() {
        return Ok(out);
    }
    let m = CsrMatrix::new(interior.len(), interior.len(), rows, cols, vals)?;
    let b: Vec<f64> = interior.iter().map(|&n| load[n]).collect();
    let mut x = vec![0.0; interior.len()];
    conjugate_gradient(&m, &b, &mut x, 1e-14, 10 * interior.len() + 100)?;
    for (i, &n) in interior.iter().enumerate() {
        out[n] = x[i];
    }
    Ok(out)
}

/// Initial state: L² projections of `u₀` and `c₀`, interpolated `p₀`, pressure mean removed.
pub fn initialize<E: ExactFields + ?Sized>(mesh: &StructuredTriMesh, exact: &E) -> Result<CoupledState> {
    let mut s = CoupledState::zeros(mesh.node_count(), 0.0);
    let u1 = l2_projection(mesh, |_, _, x, y| exact.velocity(x, y, 0.0)[0])?;
    let u2 = l2_projection(mesh, |_, _, x, y| exact.velocity(x, y, 0.0)[1])?;
    let c = l2_projection(mesh, |_, _, x, y| exact.concentration(x, y, 0.0))?;
    for (n, &[x, y]) in mesh.nodes().iter().enumerate() {
        s.set(Field::VelocityX, n, u1[n]);
        s.set(Field::VelocityY, n, u2[n]);
        s.set(Field::Concentration, n, c[n]);
        s.set(Field::Pressure, n, exact.pressure(x, y, 0.0));
    }
    fix_pressure_nullspace(&mut s, mesh, PressureFix::MeanShift);
    Ok(s)
}
