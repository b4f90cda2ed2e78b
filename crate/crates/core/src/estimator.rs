//! Elementwise strong residuals and the h²-weighted a posteriori indicator.

use alloc::vec::Vec;

use crate::assembly::{CoupledState, Forcing};
use crate::basis::{element_gradients, quadrature};
use crate::math::{dot, sqrt};
use crate::mesh::StructuredTriMesh;
use crate::mms::ExactFields;
use crate::models::CaseModels;
use crate::{Field, Result};

/// Velocity used in the advection term of the transport residual.
#[derive(Clone, Copy)]
pub enum AdvectionSource<'a> {
    /// The discrete velocity, the computable choice.
    Discrete,
    /// A known velocity field (manufactured-solution studies only).
    Exact(&'a dyn ExactFields),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResidualField {
    /// `‖R₁‖_{L²(K)}` per element.
    pub momentum: Vec<f64>,
    /// `‖R₂‖_{L²(K)}` per element.
    pub continuity: Vec<f64>,
    /// `‖R₃‖_{L²(K)}` per element.
    pub transport: Vec<f64>,
    /// Elementwise constant value of `R₂ = −∇·u_h`.
    pub divergence: Vec<f64>,
    pub h: Vec<f64>,
    pub eta: f64,
}

impl ResidualField {
    /// `(Σ h²‖R₁‖², Σ h²‖R₂‖², Σ h²‖R₃‖²)`.
    pub fn component_sums(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for k in 0..self.h.len() {
            let h2 = self.h[k] * self.h[k];
            s[0] += h2 * self.momentum[k] * self.momentum[k];
            s[1] += h2 * self.continuity[k] * self.continuity[k];
            s[2] += h2 * self.transport[k] * self.transport[k];
        }
        s
    }
}

/// Residuals of the step `state_n → state_next`, evaluated at `t^{n,θ}` on `U^{n,θ}`
/// with `∂ₜ ≈ (U^{n+1} − Uⁿ)/dt`.
#[allow(clippy::too_many_arguments)]
pub fn compute_residuals(
    mesh: &StructuredTriMesh,
    state_n: &CoupledState,
    state_next: &CoupledState,
    theta: f64,
    dt: f64,
    models: &CaseModels,
    forcing: &dyn Forcing,
    advection: AdvectionSource<'_>,
) -> Result<ResidualField> {
    let rule = quadrature(4)?;
    let y = CoupledState::theta_combination(state_n, state_next, theta);
    let t = state_n.time + 0.5 * (1.0 + theta) * dt;
    let rho = models.params.rho;
    let alpha = models.params.alpha;
    let n_el = mesh.triangle_count();
    let mut out = ResidualField {
        momentum: Vec::with_capacity(n_el),
        continuity: Vec::with_capacity(n_el),
        transport: Vec::with_capacity(n_el),
        divergence: Vec::with_capacity(n_el),
        h: Vec::with_capacity(n_el),
        eta: 0.0,
    };
    let mut eta2 = 0.0;
    for (k, tri, geom) in mesh.elements() {
        let grads = element_gradients(&geom, k)?;
        let grad = |f: Field| {
            let mut g = [0.0; 2];
            for i in 0..3 {
                let v = y.get(f, tri[i]);
                g[0] += grads[i][0] * v;
                g[1] += grads[i][1] * v;
            }
            g
        };
        let gu = [grad(Field::VelocityX), grad(Field::VelocityY)];
        let gp = grad(Field::Pressure);
        let gc = grad(Field::Concentration);
        let r2 = -(gu[0][0] + gu[1][1]);
        let (mut m1, mut m3) = (0.0, 0.0);
        for (lam, w) in rule.iter() {
            let wj = 2.0 * geom.area * w;
            let [x, yy] = geom.map_barycentric(lam);
            let at = |s: &CoupledState, f: Field| -> f64 { (0..3).map(|i| lam[i] * s.get(f, tri[i])).sum() };
            let uh = [at(&y, Field::VelocityX), at(&y, Field::VelocityY)];
            let dtu = [
                (at(state_next, Field::VelocityX) - at(state_n, Field::VelocityX)) / dt,
                (at(state_next, Field::VelocityY) - at(state_n, Field::VelocityY)) / dt,
            ];
            let dtc = (at(state_next, Field::Concentration) - at(state_n, Field::Concentration)) / dt;
            let f = forcing.momentum(x, yy, t);
            let g = forcing.transport(x, yy, t);
            let r1 = [
                f[0] - (rho * dtu[0] + rho * dot(uh, gu[0]) + gp[0]),
                f[1] - (rho * dtu[1] + rho * dot(uh, gu[1]) + gp[1]),
            ];
            let adv = match advection {
                AdvectionSource::Discrete => uh,
                AdvectionSource::Exact(e) => e.velocity(x, yy, t),
            };
            let dd = models.diffusion.axial_derivatives(x, yy, t);
            let ch = at(&y, Field::Concentration);
            let r3 = g - (dtc - (dd[0] * gc[0] + dd[1] * gc[1]) + dot(adv, gc) + alpha * ch);
            m1 += wj * (r1[0] * r1[0] + r1[1] * r1[1]);
            m3 += wj * r3 * r3;
        }
        let c2 = geom.area * r2 * r2;
        eta2 += geom.h * geom.h * (m1 + c2 + m3);
        out.momentum.push(sqrt(m1));
        out.continuity.push(sqrt(c2));
        out.transport.push(sqrt(m3));
        out.divergence.push(r2);
        out.h.push(geom.h);
    }
    out.eta = sqrt(eta2);
    Ok(out)
}
