//! Manufactured solution, the forcing it implies, and space–time error norms.

use crate::assembly::{CoupledState, Forcing};
use crate::basis::{element_gradients, quadrature, QuadratureRule};
use crate::math::{exp, log2};
use crate::mesh::StructuredTriMesh;
use crate::models::CaseModels;
use crate::{Error, Field, Result};

/// Closed-form fields a discrete solution can be compared against.
pub trait ExactFields {
    fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2];
    /// `grad[i][j] = ∂uᵢ/∂xⱼ`.
    fn velocity_gradient(&self, x: f64, y: f64, t: f64) -> [[f64; 2]; 2];
    fn pressure(&self, x: f64, y: f64, t: f64) -> f64;
    fn pressure_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2];
    fn concentration(&self, x: f64, y: f64, t: f64) -> f64;
    fn concentration_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2];
}

/// `u = e^{−t}(A(x)B(y), −B(x)A(y))` with `A(s) = s²(s−1)²`, `B(s) = s(s−1)(2s−1) = A′(s)/2`;
/// `p = e^{−t}(3x² + 3y² − 2)`; `c = e^{−t} x y (x−1)(y−1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExactSolution;

#[inline]
fn a(s: f64) -> f64 {
    let q = s * (s - 1.0);
    q * q
}
#[inline]
fn a1(s: f64) -> f64 {
    2.0 * b(s)
}
#[inline]
fn a2(s: f64) -> f64 {
    2.0 * b1(s)
}
#[inline]
fn b(s: f64) -> f64 {
    s * (s - 1.0) * (2.0 * s - 1.0)
}
#[inline]
fn b1(s: f64) -> f64 {
    6.0 * s * s - 6.0 * s + 1.0
}
#[inline]
fn b2(s: f64) -> f64 {
    12.0 * s - 6.0
}
#[inline]
fn pc(s: f64) -> f64 {
    s * (s - 1.0)
}
#[inline]
fn pc1(s: f64) -> f64 {
    2.0 * s - 1.0
}

impl ExactSolution {
    pub fn velocity_laplacian(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let e = exp(-t);
        [e * (a2(x) * b(y) + a(x) * b2(y)), -e * (b2(x) * a(y) + b(x) * a2(y))]
    }

    pub fn velocity_time_derivative(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let u = self.velocity(x, y, t);
        [-u[0], -u[1]]
    }

    /// `(∂²c/∂x², ∂²c/∂y²)`.
    pub fn concentration_second_derivatives(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let e = exp(-t);
        [2.0 * e * pc(y), 2.0 * e * pc(x)]
    }

    pub fn concentration_time_derivative(&self, x: f64, y: f64, t: f64) -> f64 {
        -self.concentration(x, y, t)
    }

    pub fn divergence(&self, x: f64, y: f64, t: f64) -> f64 {
        let g = self.velocity_gradient(x, y, t);
        g[0][0] + g[1][1]
    }
}

impl ExactFields for ExactSolution {
    fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let e = exp(-t);
        [e * a(x) * b(y), -e * b(x) * a(y)]
    }

    fn velocity_gradient(&self, x: f64, y: f64, t: f64) -> [[f64; 2]; 2] {
        let e = exp(-t);
        [
            [e * a1(x) * b(y), e * a(x) * b1(y)],
            [-e * b1(x) * a(y), -e * b(x) * a1(y)],
        ]
    }

    fn pressure(&self, x: f64, y: f64, t: f64) -> f64 {
        exp(-t) * (3.0 * x * x + 3.0 * y * y - 2.0)
    }

    fn pressure_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let e = exp(-t);
        [6.0 * e * x, 6.0 * e * y]
    }

    fn concentration(&self, x: f64, y: f64, t: f64) -> f64 {
        exp(-t) * pc(x) * pc(y)
    }

    fn concentration_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let e = exp(-t);
        [e * pc1(x) * pc(y), e * pc(x) * pc1(y)]
    }
}

/// Momentum source `f = ρ∂ₜu + ρ(u·∇)u − μ(c)Δu + ∇p` of the manufactured solution.
pub fn forcing_f(x: f64, y: f64, t: f64, models: &CaseModels) -> [f64; 2] {
    let ex = ExactSolution;
    let rho = models.params.rho;
    let u = ex.velocity(x, y, t);
    let g = ex.velocity_gradient(x, y, t);
    let lap = ex.velocity_laplacian(x, y, t);
    let dp = ex.pressure_gradient(x, y, t);
    let mu = models.viscosity.at(ex.concentration(x, y, t));
    let mut f = [0.0; 2];
    for i in 0..2 {
        let conv = u[0] * g[i][0] + u[1] * g[i][1];
        f[i] = rho * (-u[i]) + rho * conv - mu * lap[i] + dp[i];
    }
    f
}

/// Transport source `g = ∂ₜc − ∇·∇̃c + u·∇c + αc` with `∇·∇̃c = Σᵢ ∂ᵢ(Dᵢ ∂ᵢc)`.
pub fn forcing_g(x: f64, y: f64, t: f64, models: &CaseModels) -> f64 {
    let ex = ExactSolution;
    let c = ex.concentration(x, y, t);
    let gc = ex.concentration_gradient(x, y, t);
    let hc = ex.concentration_second_derivatives(x, y, t);
    let u = ex.velocity(x, y, t);
    let d = models.diffusion.at(x, y, t);
    let dd = models.diffusion.axial_derivatives(x, y, t);
    let div_flux = dd[0] * gc[0] + d[0] * hc[0] + dd[1] * gc[1] + d[1] * hc[1];
    -c - div_flux + u[0] * gc[0] + u[1] * gc[1] + models.params.alpha * c
}

/// Forcing consistent with [`ExactSolution`] under a given set of models.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedForcing {
    pub models: CaseModels,
}

impl Forcing for ManufacturedForcing {
    fn momentum(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        forcing_f(x, y, t, &self.models)
    }

    fn transport(&self, x: f64, y: f64, t: f64) -> f64 {
        forcing_g(x, y, t, &self.models)
    }
}

/// `(‖v − v_h‖²_{L²}, ‖∇(v − v_h)‖²_{L²})` for a P1 field given by its nodal values.
pub fn field_error_squared<N, V, G>(
    mesh: &StructuredTriMesh,
    rule: &QuadratureRule,
    nodal: N,
    exact: V,
    exact_grad: G,
) -> (f64, f64)
where
    N: Fn(usize) -> f64,
    V: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> [f64; 2],
{
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for (k, tri, geom) in mesh.elements() {
        let grads = element_gradients(&geom, k).expect("structured mesh elements are regular");
        let vals = [nodal(tri[0]), nodal(tri[1]), nodal(tri[2])];
        let gh = [
            grads[0][0] * vals[0] + grads[1][0] * vals[1] + grads[2][0] * vals[2],
            grads[0][1] * vals[0] + grads[1][1] * vals[1] + grads[2][1] * vals[2],
        ];
        let jac = 2.0 * geom.area;
        for (lam, w) in rule.iter() {
            let [x, y] = geom.map_barycentric(lam);
            let vh = lam[0] * vals[0] + lam[1] * vals[1] + lam[2] * vals[2];
            let e = exact(x, y) - vh;
            let ge = exact_grad(x, y);
            l2 += w * jac * e * e;
            let d = [ge[0] - gh[0], ge[1] - gh[1]];
            h1 += w * jac * (d[0] * d[0] + d[1] * d[1]);
        }
    }
    (l2, h1)
}

/// `(‖v − I_h v‖_{L²}, ‖v − I_h v‖_{H¹})` for the nodal interpolant of `v`.
pub fn interpolation_errors<V, G>(mesh: &StructuredTriMesh, v: V, grad: G) -> (f64, f64)
where
    V: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> [f64; 2],
{
    let rule = quadrature(4).expect("degree 4 rule exists");
    let nodes = mesh.nodes();
    let (l2, semi) = field_error_squared(mesh, &rule, |n| v(nodes[n][0], nodes[n][1]), &v, grad);
    (crate::math::sqrt(l2), crate::math::sqrt(l2 + semi))
}

/// Squared component errors of one state against the exact fields at time `t`:
/// `(‖e_u‖², ‖∇e_u‖², ‖e_p‖², ‖e_c‖², ‖∇e_c‖², ‖∇e_p‖²)`.
pub fn state_error_squared<E: ExactFields + ?Sized>(
    mesh: &StructuredTriMesh,
    rule: &QuadratureRule,
    state: &CoupledState,
    exact: &E,
    t: f64,
) -> [f64; 6] {
    let (u1, gu1) = field_error_squared(
        mesh,
        rule,
        |n| state.get(Field::VelocityX, n),
        |x, y| exact.velocity(x, y, t)[0],
        |x, y| exact.velocity_gradient(x, y, t)[0],
    );
    let (u2, gu2) = field_error_squared(
        mesh,
        rule,
        |n| state.get(Field::VelocityY, n),
        |x, y| exact.velocity(x, y, t)[1],
        |x, y| exact.velocity_gradient(x, y, t)[1],
    );
    let (p, gp) = field_error_squared(
        mesh,
        rule,
        |n| state.get(Field::Pressure, n),
        |x, y| exact.pressure(x, y, t),
        |x, y| exact.pressure_gradient(x, y, t),
    );
    let (c, gc) = field_error_squared(
        mesh,
        rule,
        |n| state.get(Field::Concentration, n),
        |x, y| exact.concentration(x, y, t),
        |x, y| exact.concentration_gradient(x, y, t),
    );
    [u1 + u2, gu1 + gu2, p, c, gc, gp]
}

/// Norm of the pressure error inside the total error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PressureNorm {
    /// `‖p − p_h‖_{L²(L²)}`.
    #[default]
    L2L2,
    /// `‖p − p_h‖_{L²(H¹)}`, adding the gradient error.
    L2H1,
}

/// Final error norms of a run.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ErrorReport {
    /// `‖u − u_h‖_Ṽ`.
    pub velocity: f64,
    /// `‖p − p_h‖_{L²(L²)}`.
    pub pressure: f64,
    /// `‖∇(p − p_h)‖_{L²(L²)}`.
    pub pressure_gradient: f64,
    /// `‖c − c_h‖_Ṽ`.
    pub concentration: f64,
    /// `{‖u − u_h‖²_Ṽ + ‖p − p_h‖²_{L²(L²)} + ‖c − c_h‖²_Ṽ}^{1/2}`.
    pub total: f64,
}

impl ErrorReport {
    pub fn total_with(&self, norm: PressureNorm) -> f64 {
        match norm {
            PressureNorm::L2L2 => self.total,
            PressureNorm::L2H1 => {
                crate::math::sqrt(self.total * self.total + self.pressure_gradient * self.pressure_gradient)
            }
        }
    }
}

/// Running sums behind [`ErrorReport`].
///
/// Interval terms compare the θ-combination `U^{n,θ}` with the exact solution at
/// `t^{n,θ}` and are weighted by `dt`; the max terms run over the endpoint states.
#[derive(Clone, Debug)]
pub struct ErrorAccumulator {
    rule: QuadratureRule,
    pub velocity_max_sq: f64,
    pub velocity_l2h1_sq: f64,
    pub pressure_l2l2_sq: f64,
    pub pressure_gradient_sq: f64,
    pub concentration_max_sq: f64,
    pub concentration_l2h1_sq: f64,
    pub intervals: usize,
}

impl Default for ErrorAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl ErrorAccumulator {
    pub fn new() -> Self {
        ErrorAccumulator {
            rule: quadrature(4).expect("degree 4 rule exists"),
            velocity_max_sq: 0.0,
            velocity_l2h1_sq: 0.0,
            pressure_l2l2_sq: 0.0,
            pressure_gradient_sq: 0.0,
            concentration_max_sq: 0.0,
            concentration_l2h1_sq: 0.0,
            intervals: 0,
        }
    }

    /// Updates the `max_n ‖eⁿ‖²` terms with one endpoint state.
    pub fn record_endpoint<E: ExactFields + ?Sized>(
        &mut self,
        mesh: &StructuredTriMesh,
        state: &CoupledState,
        exact: &E,
    ) {
        let e = state_error_squared(mesh, &self.rule, state, exact, state.time);
        self.velocity_max_sq = self.velocity_max_sq.max(e[0]);
        self.concentration_max_sq = self.concentration_max_sq.max(e[3]);
    }

    /// Adds `dt·‖e^{n,θ}‖²` (pressure) and `dt·‖e^{n,θ}‖²_{H¹}` (velocity, concentration).
    pub fn record_interval<E: ExactFields + ?Sized>(
        &mut self,
        mesh: &StructuredTriMesh,
        theta_state: &CoupledState,
        exact: &E,
        dt: f64,
    ) {
        let e = state_error_squared(mesh, &self.rule, theta_state, exact, theta_state.time);
        self.velocity_l2h1_sq += dt * (e[0] + e[1]);
        self.pressure_l2l2_sq += dt * e[2];
        self.pressure_gradient_sq += dt * e[5];
        self.concentration_l2h1_sq += dt * (e[3] + e[4]);
        self.intervals += 1;
    }

    /// Accounts for the step `tⁿ → tⁿ⁺¹`: the interval term at `t^{n,θ}` and the new endpoint.
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate_norms<E: ExactFields + ?Sized>(
        &mut self,
        mesh: &StructuredTriMesh,
        state_n: &CoupledState,
        state_next: &CoupledState,
        exact: &E,
        theta: f64,
        dt: f64,
    ) {
        let combined = CoupledState::theta_combination(state_n, state_next, theta);
        self.record_interval(mesh, &combined, exact, dt);
        self.record_endpoint(mesh, state_next, exact);
    }

    pub fn report(&self) -> ErrorReport {
        let v_sq = self.velocity_max_sq + self.velocity_l2h1_sq;
        let c_sq = self.concentration_max_sq + self.concentration_l2h1_sq;
        let s = crate::math::sqrt;
        ErrorReport {
            velocity: s(v_sq),
            pressure: s(self.pressure_l2l2_sq),
            pressure_gradient: s(self.pressure_gradient_sq),
            concentration: s(c_sq),
            total: s(v_sq + self.pressure_l2l2_sq + c_sq),
        }
    }
}

/// `log₂(e_coarse / e_fine)` for grids differing by a factor 2.
pub fn rate_of_convergence(error_coarse: f64, error_fine: f64) -> Result<f64> {
    if !(error_coarse > 0.0) || !(error_fine > 0.0) {
        return Err(Error::NonPositiveError);
    }
    Ok(log2(error_coarse / error_fine))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square_mesh;
    use crate::models::Case;

    #[test]
    fn rate_examples() {
        let r = rate_of_convergence(0.158435, 0.0833011).unwrap();
        assert!((r - 0.9275).abs() < 5e-4);
        assert_eq!(rate_of_convergence(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(rate_of_convergence(0.4, 0.1).unwrap(), 2.0);
        assert!(rate_of_convergence(0.0, 0.1).is_err());
        assert!(rate_of_convergence(0.1, -1.0).is_err());
    }

    #[test]
    fn convection_vanishes_at_the_centre() {
        let ex = ExactSolution;
        assert_eq!(ex.velocity(0.5, 0.5, 0.3), [0.0, 0.0]);
        // with u = 0 the momentum source is ρ∂ₜu − μΔu + ∇p; ∂ₜu = −u = 0 too
        for case in Case::ALL {
            let m = case.models();
            let f = forcing_f(0.5, 0.5, 0.3, &m);
            let mu = m.viscosity.at(ex.concentration(0.5, 0.5, 0.3));
            let lap = ex.velocity_laplacian(0.5, 0.5, 0.3);
            let dp = ex.pressure_gradient(0.5, 0.5, 0.3);
            for i in 0..2 {
                assert!((f[i] - (-mu * lap[i] + dp[i])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_fields_vanish_on_the_boundary() {
        let ex = ExactSolution;
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            for (x, y) in [(0.0, s), (1.0, s), (s, 0.0), (s, 1.0)] {
                let u = ex.velocity(x, y, 0.4);
                assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
                assert!(ex.concentration(x, y, 0.4).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pressure_has_zero_mean() {
        let m = build_unit_square_mesh(8).unwrap();
        let rule = quadrature(4).unwrap();
        for t in [0.0, 0.5, 1.0] {
            let (l2, _) = field_error_squared(
                &m,
                &rule,
                |_| 0.0,
                |x, y| ExactSolution.pressure(x, y, t),
                |_, _| [0.0, 0.0],
            );
            assert!(l2 > 0.0);
            let mut mean = 0.0;
            for (_, _, g) in m.elements() {
                for (lam, w) in rule.iter() {
                    let [x, y] = g.map_barycentric(lam);
                    mean += w * 2.0 * g.area * ExactSolution.pressure(x, y, t);
                }
            }
            assert!(mean.abs() < 1e-14);
        }
    }

    #[test]
    fn constant_unit_error_over_one_step() {
        struct UnitPressure;
        impl ExactFields for UnitPressure {
            fn velocity(&self, _: f64, _: f64, _: f64) -> [f64; 2] {
                [0.0; 2]
            }
            fn velocity_gradient(&self, _: f64, _: f64, _: f64) -> [[f64; 2]; 2] {
                [[0.0; 2]; 2]
            }
            fn pressure(&self, _: f64, _: f64, _: f64) -> f64 {
                1.0
            }
            fn pressure_gradient(&self, _: f64, _: f64, _: f64) -> [f64; 2] {
                [0.0; 2]
            }
            fn concentration(&self, _: f64, _: f64, _: f64) -> f64 {
                0.0
            }
            fn concentration_gradient(&self, _: f64, _: f64, _: f64) -> [f64; 2] {
                [0.0; 2]
            }
        }
        let m = build_unit_square_mesh(3).unwrap();
        let s0 = CoupledState::zeros(m.node_count(), 0.0);
        let s1 = CoupledState::zeros(m.node_count(), 0.1);
        let mut acc = ErrorAccumulator::new();
        acc.accumulate_norms(&m, &s0, &s1, &UnitPressure, 1.0, 0.1);
        assert!((acc.pressure_l2l2_sq - 0.1).abs() < 1e-14);
        assert_eq!(acc.velocity_l2h1_sq, 0.0);
        let r = acc.report();
        assert!((r.total * r.total - 0.1).abs() < 1e-14);
    }

    #[test]
    fn injected_exact_state_has_interpolation_sized_error() {
        let ex = ExactSolution;
        let mut prev = f64::INFINITY;
        for n in [8, 16, 32] {
            let m = build_unit_square_mesh(n).unwrap();
            let s0 = CoupledState::interpolate(&m, &ex, 0.0);
            let s1 = CoupledState::interpolate(&m, &ex, 0.1);
            let mut acc = ErrorAccumulator::new();
            acc.record_endpoint(&m, &s0, &ex);
            acc.accumulate_norms(&m, &s0, &s1, &ex, 1.0, 0.1);
            let r = acc.report();
            assert!(r.total < 0.1 * m.h());
            assert!(r.total < prev);
            prev = r.total;
        }
    }

    #[test]
    fn pressure_gradient_interpolation_error_is_exact() {
        // for p = e^{-t}(3x² + 3y² − 2) on the right-triangle mesh, ‖∇(p − I_h p)‖ = √6 e^{-t}/n
        let ex = ExactSolution;
        for n in [5, 10, 20] {
            let m = build_unit_square_mesh(n).unwrap();
            let s0 = CoupledState::interpolate(&m, &ex, 0.0);
            let s1 = CoupledState::interpolate(&m, &ex, 0.1);
            let mut acc = ErrorAccumulator::new();
            acc.accumulate_norms(&m, &s0, &s1, &ex, 1.0, 0.1);
            let r = acc.report();
            let expected = (0.1f64).sqrt() * 6f64.sqrt() * (-0.1f64).exp() / n as f64;
            assert!(
                (r.pressure_gradient - expected).abs() < 1e-12,
                "{n}: {}",
                r.pressure_gradient
            );
            let h1 = r.total_with(PressureNorm::L2H1);
            assert!((h1 * h1 - r.total * r.total - expected * expected).abs() < 1e-12);
        }
    }
}
