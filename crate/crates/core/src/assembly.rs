//! Monolithic assembly of one θ-scheme step.
//!
//! Unknowns are ordered `(u₁, u₂, p, c)` per node. The system is written for the
//! θ-combination `Y = U^{n,θ} = ½(1+θ)U^{n+1} + ½(1−θ)Uⁿ`, so that the discrete
//! time derivative is `(U^{n+1} − Uⁿ)/dt = (Y − Uⁿ)/(a·dt)` with `a = ½(1+θ)`.
//! Convection velocity, viscosity argument and the adjoint operator are lagged at
//! the supplied state, so every step is linear. Second derivatives of P1 fields
//! vanish elementwise and are dropped from all strong residuals; the first-order
//! part `∂ᵢDᵢ ∂ᵢc` of `∇·∇̃c` is kept.

use alloc::vec;
use alloc::vec::Vec;

use crate::basis::{element_gradients, quadrature, QuadratureRule};
use crate::math::{dot, norm2};
use crate::mesh::StructuredTriMesh;
use crate::mms::ExactFields;
use crate::models::CaseModels;
use crate::sparse::CsrMatrix;
use crate::stabilization::{
    compute_tau, dynamic_tau, mass_diagonal, subscale_history, ElementResidual, StabConfig, StabParams, SubscaleVector,
    TauInputs,
};
use crate::{Error, Field, Result, DOFS_PER_NODE};

/// Nodal values of `(u₁, u₂, p, c)` at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState {
    /// Interleaved unknowns, `DOFS_PER_NODE` per node.
    pub values: Vec<f64>,
    pub time: f64,
}

impl CoupledState {
    pub fn zeros(node_count: usize, time: f64) -> Self {
        CoupledState {
            values: vec![0.0; node_count * DOFS_PER_NODE],
            time,
        }
    }

    /// Nodal interpolant of the exact fields.
    pub fn interpolate<E: ExactFields + ?Sized>(mesh: &StructuredTriMesh, exact: &E, t: f64) -> Self {
        let mut s = Self::zeros(mesh.node_count(), t);
        for (n, &[x, y]) in mesh.nodes().iter().enumerate() {
            let u = exact.velocity(x, y, t);
            s.set(Field::VelocityX, n, u[0]);
            s.set(Field::VelocityY, n, u[1]);
            s.set(Field::Pressure, n, exact.pressure(x, y, t));
            s.set(Field::Concentration, n, exact.concentration(x, y, t));
        }
        s
    }

    /// `½(1+θ)·next + ½(1−θ)·prev`, stamped at `t^{n,θ}`.
    pub fn theta_combination(prev: &CoupledState, next: &CoupledState, theta: f64) -> Self {
        let a = 0.5 * (1.0 + theta);
        let b = 0.5 * (1.0 - theta);
        CoupledState {
            values: prev
                .values
                .iter()
                .zip(&next.values)
                .map(|(p, n)| a * n + b * p)
                .collect(),
            time: b * prev.time + a * next.time,
        }
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / DOFS_PER_NODE
    }

    #[inline]
    pub fn get(&self, field: Field, node: usize) -> f64 {
        self.values[field.dof(node)]
    }

    #[inline]
    pub fn set(&mut self, field: Field, node: usize, v: f64) {
        self.values[field.dof(node)] = v;
    }

    #[inline]
    pub fn velocity(&self, node: usize) -> [f64; 2] {
        [self.get(Field::VelocityX, node), self.get(Field::VelocityY, node)]
    }

    pub fn field(&self, field: Field) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(field.offset()).step_by(DOFS_PER_NODE).copied()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Length matches the mesh and Dirichlet values are exactly zero.
    pub fn validate(&self, mesh: &StructuredTriMesh) -> Result<()> {
        if self.values.len() != mesh.node_count() * DOFS_PER_NODE {
            return Err(Error::DimensionMismatch {
                expected: mesh.node_count() * DOFS_PER_NODE,
                found: self.values.len(),
            });
        }
        for &n in mesh.boundary_nodes() {
            for f in [Field::VelocityX, Field::VelocityY, Field::Concentration] {
                if self.get(f, n) != 0.0 {
                    return Err(Error::InvalidParameter("Dirichlet value is not zero"));
                }
            }
        }
        Ok(())
    }
}

/// Body force `f` and solute source `g`.
pub trait Forcing {
    fn momentum(&self, x: f64, y: f64, t: f64) -> [f64; 2];
    fn transport(&self, x: f64, y: f64, t: f64) -> f64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroForcing;

impl Forcing for ZeroForcing {
    fn momentum(&self, _: f64, _: f64, _: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn transport(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Galerkin,
    Asgs,
}

impl Method {
    pub fn key(self) -> &'static str {
        match self {
            Method::Galerkin => "galerkin",
            Method::Asgs => "asgs",
        }
    }
}

impl core::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "galerkin" => Ok(Method::Galerkin),
            "asgs" => Ok(Method::Asgs),
            _ => Err(Error::InvalidParameter("method must be galerkin or asgs")),
        }
    }
}

/// Linear system of one step, over `4 · node_count` unknowns.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Unknowns replaced by an identity row.
    pub fixed: Vec<bool>,
}

impl SparseSystem {
    pub fn size(&self) -> usize {
        self.rhs.len()
    }

    /// Replaces row `dof` by `x_dof = value` and eliminates the column symmetrically.
    /// Relies on the structurally symmetric pattern.
    pub fn constrain(&mut self, dof: usize, value: f64) {
        let (cols, _) = self.matrix.row(dof);
        let cols: Vec<usize> = cols.to_vec();
        for &i in &cols {
            if i == dof {
                continue;
            }
            if let Some(p) = self.matrix.position(i, dof) {
                let a = self.matrix.values()[p];
                if !self.fixed[i] {
                    self.rhs[i] -= a * value;
                }
                self.matrix.values_mut()[p] = 0.0;
            }
        }
        let (cols, vals) = self.matrix.row_mut(dof);
        for (c, v) in cols.iter().zip(vals.iter_mut()) {
            *v = if *c == dof { 1.0 } else { 0.0 };
        }
        self.rhs[dof] = value;
        self.fixed[dof] = true;
    }
}

/// Homogeneous Dirichlet conditions on `u` and `c`; pressure rows are left alone.
pub fn apply_dirichlet(system: &mut SparseSystem, mesh: &StructuredTriMesh) {
    for &n in mesh.boundary_nodes() {
        for f in [Field::VelocityX, Field::VelocityY, Field::Concentration] {
            system.constrain(f.dof(n), 0.0);
        }
    }
}

/// Parameters shared by every step of a run.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub mesh: &'a StructuredTriMesh,
    pub models: &'a CaseModels,
    pub stab: &'a StabConfig,
    pub method: Method,
    pub forcing: &'a dyn Forcing,
    pub dt: f64,
    pub theta: f64,
}

impl StepContext<'_> {
    /// Weight `a = ½(1+θ)` of the new level in `U^{n,θ}`.
    #[inline]
    pub fn new_level_weight(&self) -> f64 {
        0.5 * (1.0 + self.theta)
    }

    /// `t^{n,θ} = tⁿ + ½(1+θ)dt`.
    #[inline]
    pub fn theta_time(&self, t_n: f64) -> f64 {
        t_n + self.new_level_weight() * self.dt
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter("dt must be positive"));
        }
        if self.theta != 0.0 && self.theta != 1.0 {
            return Err(Error::InvalidParameter("θ must be 0 or 1"));
        }
        self.models.params.validate()
    }
}

/// Output of [`Assembler::assemble_step`].
#[derive(Clone, Debug)]
pub struct AssembledStep {
    /// System for `Y = U^{n,θ}` with Dirichlet conditions applied.
    pub system: SparseSystem,
    /// Per-element τ and τ′ (empty for Galerkin).
    pub stab: Vec<StabParams>,
    /// Per-element subscale history used in this step (empty for Galerkin).
    pub subscales: Vec<SubscaleVector>,
}

const NLOC: usize = 3 * DOFS_PER_NODE;

/// Cached sparsity pattern and element scatter map for one mesh.
#[derive(Clone, Debug)]
pub struct Assembler<'m> {
    mesh: &'m StructuredTriMesh,
    pattern: CsrMatrix,
    scatter: Vec<[usize; NLOC * NLOC]>,
    rule: QuadratureRule,
}

impl<'m> Assembler<'m> {
    pub fn new(mesh: &'m StructuredTriMesh) -> Self {
        let pattern = CsrMatrix::coupled_pattern(mesh);
        let scatter = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut pos = [0usize; NLOC * NLOC];
                for i in 0..NLOC {
                    let gi = tri[i / DOFS_PER_NODE] * DOFS_PER_NODE + i % DOFS_PER_NODE;
                    for j in 0..NLOC {
                        let gj = tri[j / DOFS_PER_NODE] * DOFS_PER_NODE + j % DOFS_PER_NODE;
                        pos[i * NLOC + j] = pattern.position(gi, gj).expect("element couplings are in the pattern");
                    }
                }
                pos
            })
            .collect();
        Assembler {
            mesh,
            pattern,
            scatter,
            rule: quadrature(4).expect("degree 4 rule exists"),
        }
    }

    pub fn mesh(&self) -> &StructuredTriMesh {
        self.mesh
    }

    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    /// Per-element τ evaluated at the lagged state.
    pub fn element_tau(
        &self,
        ctx: &StepContext<'_>,
        k: usize,
        tri: &[usize; 3],
        lagged: &CoupledState,
    ) -> Result<crate::stabilization::Tau> {
        let geom = self.mesh.geometry_of(tri);
        let t_theta = ctx.theta_time(lagged.time);
        let mut mu_upper = 0.0f64;
        let mut diffusion = 0.0;
        for (lam, w) in self.rule.iter() {
            let c: f64 = (0..3).map(|i| lam[i] * lagged.get(Field::Concentration, tri[i])).sum();
            mu_upper = mu_upper.max(ctx.models.viscosity.at(c));
            let [x, y] = geom.map_barycentric(lam);
            let d = ctx.models.diffusion.at(x, y, t_theta);
            diffusion += 2.0 * w * d[0].max(d[1]);
        }
        let mut mean = [0.0; 2];
        for &n in tri {
            let v = lagged.velocity(n);
            mean[0] += v[0] / 3.0;
            mean[1] += v[1] / 3.0;
        }
        let velocity_norm = norm2(mean);
        if !(mu_upper.is_finite() && diffusion.is_finite() && velocity_norm.is_finite()) {
            return Err(Error::NonFiniteCoefficient {
                element: k,
                what: "lagged coefficient",
            });
        }
        let inputs = TauInputs {
            h: geom.h,
            mu_upper,
            velocity_norm,
            diffusion,
            alpha: ctx.models.params.alpha,
            rho: ctx.models.params.rho,
        };
        Ok(compute_tau(&inputs, ctx.stab)?.scaled(ctx.stab.tau_scale))
    }

    /// Assembles the step `Uⁿ → U^{n+1}`.
    ///
    /// `lagged` supplies the advecting velocity, the viscosity argument and the
    /// stabilization parameters (normally `state_n`). `history` holds the element
    /// residuals of the previous step, from which the dynamic subscale vector is
    /// built; `None` means no subscale history.
    pub fn assemble_step(
        &self,
        ctx: &StepContext<'_>,
        state_n: &CoupledState,
        lagged: &CoupledState,
        history: Option<&[ElementResidual]>,
    ) -> Result<AssembledStep> {
        ctx.validate()?;
        let mesh = self.mesh;
        let n_dofs = mesh.node_count() * DOFS_PER_NODE;
        for s in [state_n, lagged] {
            if s.values.len() != n_dofs {
                return Err(Error::DimensionMismatch {
                    expected: n_dofs,
                    found: s.values.len(),
                });
            }
        }
        if let Some(h) = history {
            if h.len() != mesh.triangle_count() {
                return Err(Error::DimensionMismatch {
                    expected: mesh.triangle_count(),
                    found: h.len(),
                });
            }
        }

        let rho = ctx.models.params.rho;
        let alpha = ctx.models.params.alpha;
        let m_dt = 1.0 / (ctx.new_level_weight() * ctx.dt);
        let t_theta = ctx.theta_time(state_n.time);
        let asgs = ctx.method == Method::Asgs;
        let eps_p = ctx.stab.pressure_regularization;

        let mut matrix = self.pattern.clone();
        let mut rhs = vec![0.0; n_dofs];
        let mut stab = Vec::new();
        let mut subscales = Vec::new();
        if asgs {
            stab.reserve(mesh.triangle_count());
            subscales.reserve(mesh.triangle_count());
        }

        for (k, tri, geom) in mesh.elements() {
            let grads = element_gradients(&geom, k)?;
            let jac = 2.0 * geom.area;
            let w_nodes = [
                lagged.velocity(tri[0]),
                lagged.velocity(tri[1]),
                lagged.velocity(tri[2]),
            ];
            let c_lag = [0, 1, 2].map(|i| lagged.get(Field::Concentration, tri[i]));
            let u_prev = [
                state_n.velocity(tri[0]),
                state_n.velocity(tri[1]),
                state_n.velocity(tri[2]),
            ];
            let c_prev = [0, 1, 2].map(|i| state_n.get(Field::Concentration, tri[i]));
            let div_w: f64 = (0..3).map(|i| dot(grads[i], w_nodes[i])).sum();

            // stabilization data for the element
            let mut tau_dyn = [0.0; 4];
            let mut one_minus_s = [0.0; 4];
            let mut s_frac = [1.0; 4];
            let mut dvec = [0.0; 4];
            if asgs {
                let tau = self.element_tau(ctx, k, tri, lagged)?;
                let td = dynamic_tau(&tau, rho, ctx.dt, ctx.stab.mode);
                let params = StabParams { tau, tau_dyn: td };
                let sub = match history {
                    Some(h) => subscale_history(&h[k], &td, rho, ctx.dt, ctx.stab.mode, ctx.stab.series),
                    None => SubscaleVector::default(),
                };
                tau_dyn = td.diagonal();
                s_frac = params.static_fraction();
                for c in 0..4 {
                    one_minus_s[c] = 1.0 - s_frac[c];
                }
                dvec = sub.as_array();
                stab.push(params);
                subscales.push(sub);
            }

            let mut kloc = [[0.0f64; NLOC]; NLOC];
            let mut floc = [0.0f64; NLOC];

            for (lam, wq) in self.rule.iter() {
                let wj = wq * jac;
                let [x, y] = geom.map_barycentric(lam);
                let mut wvel = [0.0; 2];
                let mut un = [0.0; 2];
                let mut c_l = 0.0;
                let mut cn = 0.0;
                for i in 0..3 {
                    for d in 0..2 {
                        wvel[d] += lam[i] * w_nodes[i][d];
                        un[d] += lam[i] * u_prev[i][d];
                    }
                    c_l += lam[i] * c_lag[i];
                    cn += lam[i] * c_prev[i];
                }
                let mu = ctx.models.viscosity.at(c_l);
                let dcoef = ctx.models.diffusion.at(x, y, t_theta);
                let dd = ctx.models.diffusion.axial_derivatives(x, y, t_theta);
                let f = ctx.forcing.momentum(x, y, t_theta);
                let g = ctx.forcing.transport(x, y, t_theta);
                if !(mu.is_finite() && dcoef[0].is_finite() && dcoef[1].is_finite()) {
                    return Err(Error::NonFiniteCoefficient {
                        element: k,
                        what: "coefficient at quadrature point",
                    });
                }
                let adv = [0, 1, 2].map(|j| dot(wvel, grads[j]));

                // Galerkin part
                for i in 0..3 {
                    let ni = lam[i];
                    for j in 0..3 {
                        let nj = lam[j];
                        let mass = ni * nj;
                        let vel = rho * m_dt * mass
                            + rho * adv[j] * ni
                            + 0.5 * rho * div_w * mass
                            + mu * dot(grads[i], grads[j]);
                        #[allow(clippy::needless_range_loop)]
                        for d in 0..2 {
                            let (ri, rj) = (4 * i + d, 4 * j + d);
                            kloc[ri][rj] += wj * vel;
                            kloc[ri][4 * j + 2] -= wj * grads[i][d] * nj;
                            kloc[4 * i + 2][rj] += wj * grads[j][d] * ni;
                        }
                        let tr = m_dt * mass
                            + dcoef[0] * grads[i][0] * grads[j][0]
                            + dcoef[1] * grads[i][1] * grads[j][1]
                            + ni * adv[j]
                            + alpha * mass;
                        kloc[4 * i + 3][4 * j + 3] += wj * tr;
                        kloc[4 * i + 2][4 * j + 2] += wj * eps_p * mass;
                    }
                    for d in 0..2 {
                        floc[4 * i + d] += wj * ni * (rho * m_dt * un[d] + f[d]);
                    }
                    floc[4 * i + 3] += wj * ni * (m_dt * cn + g);
                }

                if !asgs {
                    continue;
                }

                // strong residual of each trial function, −L* of each test function
                let mut trial = [[0.0f64; 4]; NLOC];
                let mut test = [[0.0f64; 4]; NLOC];
                for j in 0..3 {
                    let nj = lam[j];
                    let gj = grads[j];
                    let mom = rho * m_dt * nj + rho * adv[j];
                    trial[4 * j] = [mom, 0.0, gj[0], 0.0];
                    trial[4 * j + 1] = [0.0, mom, gj[1], 0.0];
                    trial[4 * j + 2] = [gj[0], gj[1], 0.0, 0.0];
                    trial[4 * j + 3] = [
                        0.0,
                        0.0,
                        0.0,
                        m_dt * nj - (dd[0] * gj[0] + dd[1] * gj[1]) + adv[j] + alpha * nj,
                    ];
                    let tm = rho * adv[j];
                    test[4 * j] = [tm, 0.0, gj[0], 0.0];
                    test[4 * j + 1] = [0.0, tm, gj[1], 0.0];
                    test[4 * j + 2] = [gj[0], gj[1], 0.0, 0.0];
                    test[4 * j + 3] = [0.0, 0.0, 0.0, dd[0] * gj[0] + dd[1] * gj[1] + adv[j] - alpha * nj];
                }
                // F − (known part of M∂ₜU)
                let known = [f[0] + rho * m_dt * un[0], f[1] + rho * m_dt * un[1], 0.0, g + m_dt * cn];

                for (ii, ti) in test.iter().enumerate() {
                    let ci = ii % DOFS_PER_NODE;
                    let ni = lam[ii / DOFS_PER_NODE];
                    let scaled = [
                        tau_dyn[0] * ti[0],
                        tau_dyn[1] * ti[1],
                        tau_dyn[2] * ti[2],
                        tau_dyn[3] * ti[3],
                    ];
                    for (jj, rj) in trial.iter().enumerate() {
                        let v = scaled[0] * rj[0] + scaled[1] * rj[1] + scaled[2] * rj[2] + scaled[3] * rj[3]
                            - one_minus_s[ci] * rj[ci] * ni;
                        kloc[ii][jj] += wj * v;
                    }
                    let mut r = 0.0;
                    for c in 0..4 {
                        r += scaled[c] * (known[c] + dvec[c]);
                    }
                    r -= one_minus_s[ci] * known[ci] * ni;
                    r += s_frac[ci] * dvec[ci] * ni;
                    floc[ii] += wj * r;
                }
            }

            let pos = &self.scatter[k];
            for i in 0..NLOC {
                let gi = tri[i / DOFS_PER_NODE] * DOFS_PER_NODE + i % DOFS_PER_NODE;
                rhs[gi] += floc[i];
                for j in 0..NLOC {
                    matrix.add_at(pos[i * NLOC + j], kloc[i][j]);
                }
            }
        }

        if matrix.values().iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoefficient {
                element: usize::MAX,
                what: "assembled entry",
            });
        }

        let mut system = SparseSystem {
            matrix,
            rhs,
            fixed: vec![false; n_dofs],
        };
        apply_dirichlet(&mut system, mesh);
        Ok(AssembledStep {
            system,
            stab,
            subscales,
        })
    }

    /// Element means of the strong residual `F − M(U^{n+1} − Uⁿ)/dt − L(u_lag; U^{n,θ})`,
    /// the input of the next step's subscale history.
    pub fn element_residuals(
        &self,
        ctx: &StepContext<'_>,
        state_n: &CoupledState,
        lagged: &CoupledState,
        state_next: &CoupledState,
    ) -> Result<Vec<ElementResidual>> {
        let rho = ctx.models.params.rho;
        let alpha = ctx.models.params.alpha;
        let t_theta = ctx.theta_time(state_n.time);
        let y = CoupledState::theta_combination(state_n, state_next, ctx.theta);
        let m = mass_diagonal(rho);
        let mut out = Vec::with_capacity(self.mesh.triangle_count());
        for (k, tri, geom) in self.mesh.elements() {
            let grads = element_gradients(&geom, k)?;
            let grad_of = |field: Field| {
                let mut g = [0.0; 2];
                for i in 0..3 {
                    let v = y.get(field, tri[i]);
                    g[0] += grads[i][0] * v;
                    g[1] += grads[i][1] * v;
                }
                g
            };
            let gu1 = grad_of(Field::VelocityX);
            let gu2 = grad_of(Field::VelocityY);
            let gp = grad_of(Field::Pressure);
            let gc = grad_of(Field::Concentration);
            let mut acc = [0.0; 4];
            for (lam, wq) in self.rule.iter() {
                let wt = 2.0 * wq; // weights sum to 1 over the element
                let [x, yy] = geom.map_barycentric(lam);
                let interp = |s: &CoupledState, f: Field| -> f64 { (0..3).map(|i| lam[i] * s.get(f, tri[i])).sum() };
                let w = [interp(lagged, Field::VelocityX), interp(lagged, Field::VelocityY)];
                let f = ctx.forcing.momentum(x, yy, t_theta);
                let g = ctx.forcing.transport(x, yy, t_theta);
                let dd = ctx.models.diffusion.axial_derivatives(x, yy, t_theta);
                let dtu = [
                    (interp(state_next, Field::VelocityX) - interp(state_n, Field::VelocityX)) / ctx.dt,
                    (interp(state_next, Field::VelocityY) - interp(state_n, Field::VelocityY)) / ctx.dt,
                ];
                let dtc = (interp(state_next, Field::Concentration) - interp(state_n, Field::Concentration)) / ctx.dt;
                let cy = interp(&y, Field::Concentration);
                acc[0] += wt * (f[0] - m[0] * dtu[0] - (rho * dot(w, gu1) + gp[0]));
                acc[1] += wt * (f[1] - m[1] * dtu[1] - (rho * dot(w, gu2) + gp[1]));
                acc[2] += wt * -(gu1[0] + gu2[1]);
                acc[3] += wt * (g - m[3] * dtc - (-(dd[0] * gc[0] + dd[1] * gc[1]) + dot(w, gc) + alpha * cy));
            }
            out.push(ElementResidual {
                momentum: [acc[0], acc[1]],
                continuity: acc[2],
                transport: acc[3],
            });
        }
        Ok(out)
    }
}

/// One-shot assembly, building the pattern on the fly.
pub fn assemble_step(
    ctx: &StepContext<'_>,
    state_n: &CoupledState,
    history: Option<&[ElementResidual]>,
) -> Result<AssembledStep> {
    Assembler::new(ctx.mesh).assemble_step(ctx, state_n, state_n, history)
}

/// Scalar convection matrix `C_ij = c(a, Nⱼ, Nᵢ)` of the skew-symmetrized trilinear form
/// `c(a, v, w) = ρ∫((a·∇)v)·w + (ρ/2)∫(∇·a) v·w`, one block per velocity component.
pub fn assemble_convection_block(mesh: &StructuredTriMesh, advecting: &[[f64; 2]], rho: f64) -> Result<CsrMatrix> {
    if advecting.len() != mesh.node_count() {
        return Err(Error::DimensionMismatch {
            expected: mesh.node_count(),
            found: advecting.len(),
        });
    }
    let rule = quadrature(4)?;
    let mut c = CsrMatrix::block_pattern(mesh, 1);
    for (k, tri, geom) in mesh.elements() {
        let grads = element_gradients(&geom, k)?;
        let a_nodes = [advecting[tri[0]], advecting[tri[1]], advecting[tri[2]]];
        let div: f64 = (0..3).map(|i| dot(grads[i], a_nodes[i])).sum();
        let jac = 2.0 * geom.area;
        for (lam, wq) in rule.iter() {
            let mut a = [0.0; 2];
            for i in 0..3 {
                a[0] += lam[i] * a_nodes[i][0];
                a[1] += lam[i] * a_nodes[i][1];
            }
            for i in 0..3 {
                for j in 0..3 {
                    let v = rho * dot(a, grads[j]) * lam[i] + 0.5 * rho * div * lam[j] * lam[i];
                    c.add(tri[i], tri[j], wq * jac * v);
                }
            }
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square_mesh;
    use crate::mms::{ExactSolution, ManufacturedForcing};
    use crate::models::Case;
    use crate::sparse::dot as vdot;
    use crate::stabilization::SubscaleMode;

    fn ctx<'a>(
        mesh: &'a StructuredTriMesh,
        models: &'a CaseModels,
        stab: &'a StabConfig,
        method: Method,
        forcing: &'a dyn Forcing,
    ) -> StepContext<'a> {
        StepContext {
            mesh,
            models,
            stab,
            method,
            forcing,
            dt: 0.1,
            theta: 1.0,
        }
    }

    #[test]
    fn zero_problem_has_zero_rhs() {
        let mesh = build_unit_square_mesh(4).unwrap();
        let models = Case::Ia.models();
        let stab = StabConfig::default();
        for method in [Method::Galerkin, Method::Asgs] {
            let c = ctx(&mesh, &models, &stab, method, &ZeroForcing);
            let s = CoupledState::zeros(mesh.node_count(), 0.0);
            let step = assemble_step(&c, &s, None).unwrap();
            assert!(step.system.rhs.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn mass_rows_sum_to_patch_area_over_three() {
        // uⁿ ≡ 1 with zero forcing: the u₁ load at a node is ρ/(a·dt) Σⱼ Mᵢⱼ = ρ/(a·dt)·|patch|/3
        let mesh = build_unit_square_mesh(2).unwrap();
        let mut models = Case::Ia.models();
        models.params.rho = 2.5;
        let stab = StabConfig::default();
        let mut s = CoupledState::zeros(mesh.node_count(), 0.0);
        for n in 0..mesh.node_count() {
            s.set(Field::VelocityX, n, 1.0);
        }
        for theta in [0.0, 1.0] {
            let c = StepContext {
                theta,
                ..ctx(&mesh, &models, &stab, Method::Galerkin, &ZeroForcing)
            };
            let step = assemble_step(&c, &s, None).unwrap();
            let patch = 6.0 * 0.125;
            let expected = 2.5 / (c.new_level_weight() * c.dt) * patch / 3.0;
            assert!((step.system.rhs[Field::VelocityX.dof(4)] - expected).abs() < 1e-13);
            assert_eq!(step.system.rhs[Field::VelocityY.dof(4)], 0.0);
        }
    }

    #[test]
    fn tau_zero_reproduces_galerkin() {
        let mesh = build_unit_square_mesh(5).unwrap();
        let models = Case::IIa.models();
        let forcing = ManufacturedForcing { models };
        let state = CoupledState::interpolate(&mesh, &ExactSolution, 0.0);
        let asm = Assembler::new(&mesh);
        for mode in [SubscaleMode::QuasiStatic, SubscaleMode::Dynamic] {
            let stab = StabConfig {
                tau_scale: 0.0,
                mode,
                ..StabConfig::default()
            };
            let g = asm
                .assemble_step(
                    &ctx(&mesh, &models, &stab, Method::Galerkin, &forcing),
                    &state,
                    &state,
                    None,
                )
                .unwrap();
            let a = asm
                .assemble_step(
                    &ctx(&mesh, &models, &stab, Method::Asgs, &forcing),
                    &state,
                    &state,
                    None,
                )
                .unwrap();
            for (x, y) in g.system.matrix.values().iter().zip(a.system.matrix.values()) {
                assert!((x - y).abs() <= 1e-14, "{x} vs {y}");
            }
            for (x, y) in g.system.rhs.iter().zip(&a.system.rhs) {
                assert!((x - y).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn quasi_static_stabilization_is_linear_in_tau() {
        // Without the (I − τ⁻¹τ′) and d terms, A(s) − A(0) = s (A(1) − A(0)).
        let mesh = build_unit_square_mesh(4).unwrap();
        let models = Case::Ib.models();
        let forcing = ManufacturedForcing { models };
        let state = CoupledState::interpolate(&mesh, &ExactSolution, 0.2);
        let asm = Assembler::new(&mesh);
        let build = |scale: f64, mode: SubscaleMode| {
            let stab = StabConfig {
                tau_scale: scale,
                mode,
                ..StabConfig::default()
            };
            asm.assemble_step(
                &ctx(&mesh, &models, &stab, Method::Asgs, &forcing),
                &state,
                &state,
                None,
            )
            .unwrap()
            .system
            .matrix
        };
        let a0 = build(0.0, SubscaleMode::QuasiStatic);
        let a1 = build(1.0, SubscaleMode::QuasiStatic);
        let ah = build(0.37, SubscaleMode::QuasiStatic);
        let scale = a1.frobenius_norm();
        for ((x0, x1), xh) in a0.values().iter().zip(a1.values()).zip(ah.values()) {
            assert!((xh - x0 - 0.37 * (x1 - x0)).abs() < 1e-12 * scale);
        }
        // dynamic subscales are not linear in τ
        let d1 = build(1.0, SubscaleMode::Dynamic);
        let dh = build(0.37, SubscaleMode::Dynamic);
        let dev: f64 = a0
            .values()
            .iter()
            .zip(d1.values())
            .zip(dh.values())
            .map(|((x0, x1), xh)| (xh - x0 - 0.37 * (x1 - x0)).abs())
            .fold(0.0, f64::max);
        assert!(dev > 1e-8 * scale);
    }

    #[test]
    fn divergence_block_is_minus_transpose_of_gradient_block() {
        let mesh = build_unit_square_mesh(4).unwrap();
        let models = Case::Ia.models();
        let stab = StabConfig::default();
        let asm = Assembler::new(&mesh);
        let state = CoupledState::zeros(mesh.node_count(), 0.0);
        let step = asm
            .assemble_step(
                &ctx(&mesh, &models, &stab, Method::Galerkin, &ZeroForcing),
                &state,
                &state,
                None,
            )
            .unwrap();
        let a = &step.system.matrix;
        let fixed = &step.system.fixed;
        for n in 0..mesh.node_count() {
            for m in 0..mesh.node_count() {
                for d in 0..2 {
                    let vrow = 4 * n + d;
                    let prow = 4 * m + 2;
                    if fixed[vrow] {
                        continue;
                    }
                    let grad = a.get(vrow, prow);
                    let div = a.get(prow, vrow);
                    assert!((grad + div).abs() < 1e-14, "({n},{m},{d})");
                }
            }
        }
    }

    #[test]
    fn convection_block_examples() {
        let mesh = build_unit_square_mesh(4).unwrap();
        let zero = vec![[0.0; 2]; mesh.node_count()];
        let c = assemble_convection_block(&mesh, &zero, 1.0).unwrap();
        assert!(c.values().iter().all(|v| *v == 0.0));

        // a = (1, 0), v = hat at node (2,2) → c(a, v, v) = ∫ v ∂ₓv = 0;
        // off-diagonal entry towards the right neighbour (3,2): ∫ (∂ₓN₍₃,₂₎) N₍₂,₂₎
        // = Σ over the two shared triangles of (area/3)·∂ₓN = 2 · (1/32)/3 · 4 = 1/12
        let ones = vec![[1.0, 0.0]; mesh.node_count()];
        let c = assemble_convection_block(&mesh, &ones, 1.0).unwrap();
        let centre = 2 * 5 + 2;
        assert!(c.get(centre, centre).abs() < 1e-15);
        assert!((c.get(centre, centre + 1) - 1.0 / 12.0).abs() < 1e-14);
        assert!((c.get(centre, centre - 1) + 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn skew_identity_for_interior_fields() {
        let mesh = build_unit_square_mesh(4).unwrap();
        let mut seed = 12345u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..20 {
            let a: Vec<[f64; 2]> = (0..mesh.node_count()).map(|_| [rnd(), rnd()]).collect();
            let v: Vec<f64> = (0..mesh.node_count())
                .map(|n| if mesh.is_boundary(n) { 0.0 } else { rnd() })
                .collect();
            let c = assemble_convection_block(&mesh, &a, 1.0).unwrap();
            let q = vdot(&v, &c.mul_vec(&v));
            assert!(q.abs() <= 1e-12 * c.frobenius_norm() * vdot(&v, &v));
        }
    }

    #[test]
    fn dirichlet_rows_are_identity_and_pressure_rows_survive() {
        let mesh = build_unit_square_mesh(1).unwrap();
        let models = Case::Ia.models();
        let stab = StabConfig::default();
        let state = CoupledState::zeros(mesh.node_count(), 0.0);
        let step = assemble_step(
            &ctx(&mesh, &models, &stab, Method::Galerkin, &ZeroForcing),
            &state,
            None,
        )
        .unwrap();
        let sys = &step.system;
        for r in 0..sys.size() {
            let (cols, vals) = sys.matrix.row(r);
            if r % 4 == 2 {
                assert!(!sys.fixed[r]);
                // u columns were eliminated; only pressure couplings may remain
                for (&c, &v) in cols.iter().zip(vals) {
                    if c % 4 != 2 {
                        assert_eq!(v, 0.0);
                    }
                }
            } else {
                assert!(sys.fixed[r]);
                for (&c, &v) in cols.iter().zip(vals) {
                    assert_eq!(v, if c == r { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn elimination_moves_known_values_to_the_rhs() {
        let mesh = build_unit_square_mesh(3).unwrap();
        let models = Case::Ia.models();
        let stab = StabConfig::default();
        let forcing = ManufacturedForcing { models };
        let state = CoupledState::interpolate(&mesh, &ExactSolution, 0.0);
        let asm = Assembler::new(&mesh);
        let step = asm
            .assemble_step(
                &ctx(&mesh, &models, &stab, Method::Asgs, &forcing),
                &state,
                &state,
                None,
            )
            .unwrap();
        let mut sys = step.system.clone();
        let interior = Field::VelocityX.dof(5);
        let row_before: Vec<f64> = sys.matrix.row(interior).1.to_vec();
        let rhs_before = sys.rhs[interior];
        let fixed_dof = Field::Concentration.dof(6);
        let coupling = sys.matrix.get(interior, fixed_dof);
        sys.constrain(fixed_dof, 0.5);
        assert_eq!(sys.matrix.get(interior, fixed_dof), 0.0);
        assert!((sys.rhs[interior] - (rhs_before - 0.5 * coupling)).abs() < 1e-15);
        let row_after = sys.matrix.row(interior).1;
        let (cols, _) = sys.matrix.row(interior);
        for ((c, a), b) in cols.iter().zip(row_after).zip(&row_before) {
            if *c != fixed_dof {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn asgs_records_subscales_with_vanishing_continuity_component() {
        let mesh = build_unit_square_mesh(4).unwrap();
        let models = Case::IIb.models();
        let forcing = ManufacturedForcing { models };
        let stab = StabConfig::default();
        let asm = Assembler::new(&mesh);
        let s0 = CoupledState::interpolate(&mesh, &ExactSolution, 0.0);
        let s1 = CoupledState::interpolate(&mesh, &ExactSolution, 0.1);
        let c = ctx(&mesh, &models, &stab, Method::Asgs, &forcing);
        let hist = asm.element_residuals(&c, &s0, &s0, &s1).unwrap();
        assert!(hist.iter().any(|r| r.continuity != 0.0));
        let step = asm.assemble_step(&c, &s1, &s1, Some(&hist)).unwrap();
        assert_eq!(step.subscales.len(), mesh.triangle_count());
        assert!(step.subscales.iter().all(|d| d.d2 == 0.0));
        assert!(step.subscales.iter().any(|d| d.d1[0] != 0.0));
        for p in &step.stab {
            assert!(p.tau_dyn.t1 < p.tau.t1 && p.tau_dyn.t3 < p.tau.t3);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mesh = build_unit_square_mesh(2).unwrap();
        let models = Case::Ia.models();
        let stab = StabConfig::default();
        let s = CoupledState::zeros(mesh.node_count(), 0.0);
        let mut c = ctx(&mesh, &models, &stab, Method::Asgs, &ZeroForcing);
        c.theta = 0.5;
        assert!(assemble_step(&c, &s, None).is_err());
        c.theta = 1.0;
        let mut bad = s.clone();
        bad.values[3 * 4 + 3] = f64::NAN;
        assert!(matches!(
            assemble_step(&c, &bad, None),
            Err(Error::NonFiniteCoefficient { .. })
        ));
    }
}
