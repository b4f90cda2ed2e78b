//! Algebraic subgrid-scale parameters.
//!
//! Per element the stabilization matrix is `τ = diag(τ₁, τ₁, τ₂, τ₃)` acting on
//! `(u₁, u₂, p, c)`. With dynamic subscales it is replaced by
//! `τ′ = (M/dt + τ⁻¹)⁻¹` where `M = diag(ρ, ρ, 0, 1)`, and the history of the
//! subscales enters through the vector `d = Σᵢ (M τ′/dt)ⁱ r`, `r` being the
//! element residual.

use alloc::string::String;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SubscaleMode {
    QuasiStatic,
    #[default]
    Dynamic,
}

/// How the subscale history series is summed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesTruncation {
    /// The limit `f/(1 − f)` of `Σᵢ fⁱ`.
    Geometric,
    /// The first `n` terms only; `Terms(1)` is the default.
    Terms(u32),
    /// `dⁿ = (M τ′/dt)(rⁿ + dⁿ⁻¹)` over the actual residual history. The caller
    /// supplies `rⁿ + dⁿ⁻¹` as the residual; the fixed point is the geometric limit.
    Recursive,
}

impl SubscaleMode {
    pub fn key(self) -> &'static str {
        match self {
            SubscaleMode::QuasiStatic => "quasistatic",
            SubscaleMode::Dynamic => "dynamic",
        }
    }
}

impl core::str::FromStr for SubscaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quasistatic" => Ok(SubscaleMode::QuasiStatic),
            "dynamic" => Ok(SubscaleMode::Dynamic),
            _ => Err(Error::InvalidParameter("subscale mode must be quasistatic or dynamic")),
        }
    }
}

impl Default for SeriesTruncation {
    fn default() -> Self {
        SeriesTruncation::Terms(1)
    }
}

impl SeriesTruncation {
    pub fn key(self) -> String {
        match self {
            SeriesTruncation::Geometric => "geometric".into(),
            SeriesTruncation::Recursive => "recursive".into(),
            SeriesTruncation::Terms(n) => alloc::format!("terms:{n}"),
        }
    }
}

impl core::str::FromStr for SeriesTruncation {
    type Err = Error;

    /// `geometric`, `recursive` or `terms:<n>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(SeriesTruncation::Geometric),
            "recursive" => Ok(SeriesTruncation::Recursive),
            _ => s
                .strip_prefix("terms:")
                .and_then(|n| n.parse().ok())
                .map(SeriesTruncation::Terms)
                .ok_or(Error::InvalidParameter(
                    "series must be geometric, recursive or terms:<n>",
                )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabConfig {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub mode: SubscaleMode,
    pub series: SeriesTruncation,
    /// Multiplies every τ; 1 in production, 0 recovers the Galerkin operator.
    pub tau_scale: f64,
    /// Coefficient ε of the pressure mass term ε(p, q). Equal-order pairs leave
    /// discrete pressure modes undetermined without it.
    pub pressure_regularization: f64,
}

impl Default for StabConfig {
    fn default() -> Self {
        StabConfig {
            c1: 4.0,
            c2: 2.0,
            c3: 1.0,
            mode: SubscaleMode::Dynamic,
            series: SeriesTruncation::Terms(1),
            tau_scale: 1.0,
            pressure_regularization: 1e-8,
        }
    }
}

/// `(τ₁, τ₂, τ₃)` of one element.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Tau {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl Tau {
    /// Diagonal over the four unknowns.
    #[inline]
    pub fn diagonal(&self) -> [f64; 4] {
        [self.t1, self.t1, self.t2, self.t3]
    }

    pub fn scaled(&self, s: f64) -> Tau {
        Tau {
            t1: self.t1 * s,
            t2: self.t2 * s,
            t3: self.t3 * s,
        }
    }
}

/// Per-element stabilization data actually used in an assembled step.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct StabParams {
    pub tau: Tau,
    pub tau_dyn: Tau,
}

impl StabParams {
    /// Diagonal of `τ⁻¹τ′`; entries where τ vanishes are taken as 1 (no subscale).
    pub fn static_fraction(&self) -> [f64; 4] {
        let t = self.tau.diagonal();
        let d = self.tau_dyn.diagonal();
        let mut out = [1.0; 4];
        for i in 0..4 {
            if t[i] != 0.0 {
                out[i] = d[i] / t[i];
            }
        }
        out
    }
}

/// Element-local inputs to the algebraic τ formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauInputs {
    pub h: f64,
    /// Upper bound of the viscosity on the element.
    pub mu_upper: f64,
    pub velocity_norm: f64,
    pub diffusion: f64,
    pub alpha: f64,
    pub rho: f64,
}

/// `τ₁ = (c₁μ/h² + c₂ρ|u|/h)⁻¹`, `τ₂ = h²/(c₁τ₁)`, `τ₃ = c₃(9D/(4h²) + 3|u|/(2h) + α)⁻¹`.
pub fn compute_tau(inp: &TauInputs, cfg: &StabConfig) -> Result<Tau> {
    let TauInputs {
        h,
        mu_upper,
        velocity_norm,
        diffusion,
        alpha,
        rho,
    } = *inp;
    if !(h > 0.0) || !(mu_upper > 0.0) || !(velocity_norm >= 0.0) || !(diffusion >= 0.0) {
        return Err(Error::InvalidParameter("τ needs h > 0, μ > 0, |u| ≥ 0, D ≥ 0"));
    }
    let transport = 9.0 * diffusion / (4.0 * h * h) + 1.5 * velocity_norm / h + alpha;
    if !(transport > 0.0) {
        return Err(Error::DegenerateStabilization);
    }
    let inv1 = cfg.c1 * mu_upper / (h * h) + cfg.c2 * rho * velocity_norm / h;
    let t1 = 1.0 / inv1;
    let t2 = h * h / (cfg.c1 * t1);
    let t3 = cfg.c3 / transport;
    if !(t1.is_finite() && t2.is_finite() && t3.is_finite()) {
        return Err(Error::InvalidParameter("τ is not finite"));
    }
    Ok(Tau { t1, t2, t3 })
}

/// `τ′ = (M/dt + τ⁻¹)⁻¹`: `τ₁′ = τ₁dt/(dt + ρτ₁)`, `τ₂′ = τ₂`, `τ₃′ = τ₃dt/(dt + τ₃)`.
pub fn dynamic_tau(tau: &Tau, rho: f64, dt: f64, mode: SubscaleMode) -> Tau {
    match mode {
        SubscaleMode::QuasiStatic => *tau,
        SubscaleMode::Dynamic => Tau {
            t1: tau.t1 * dt / (dt + rho * tau.t1),
            t2: tau.t2,
            t3: tau.t3 * dt / (dt + tau.t3),
        },
    }
}

/// Diagonal of the mass operator `M` over `(u₁, u₂, p, c)`.
#[inline]
pub fn mass_diagonal(rho: f64) -> [f64; 4] {
    [rho, rho, 0.0, 1.0]
}

/// Strong residual `F − M∂ₜU − L(u; U)` averaged over one element.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ElementResidual {
    pub momentum: [f64; 2],
    pub continuity: f64,
    pub transport: f64,
}

impl ElementResidual {
    /// `self + d`, the input of the recursive history.
    pub fn plus(&self, d: &SubscaleVector) -> ElementResidual {
        ElementResidual {
            momentum: [self.momentum[0] + d.d1[0], self.momentum[1] + d.d1[1]],
            continuity: self.continuity + d.d2,
            transport: self.transport + d.d3,
        }
    }

    #[inline]
    pub fn as_array(&self) -> [f64; 4] {
        [self.momentum[0], self.momentum[1], self.continuity, self.transport]
    }
}

/// The subscale history vector **d** of one element.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SubscaleVector {
    pub d1: [f64; 2],
    pub d2: f64,
    pub d3: f64,
}

impl SubscaleVector {
    #[inline]
    pub fn as_array(&self) -> [f64; 4] {
        [self.d1[0], self.d1[1], self.d2, self.d3]
    }

    pub fn is_zero(&self) -> bool {
        self.as_array().iter().all(|v| *v == 0.0)
    }
}

/// `Σᵢ₌₁ⁿ fⁱ`, or its limit `f/(1 − f)`.
pub fn series_factor(f: f64, series: SeriesTruncation) -> f64 {
    match series {
        SeriesTruncation::Geometric => {
            if f == 0.0 {
                0.0
            } else {
                f / (1.0 - f)
            }
        }
        SeriesTruncation::Recursive => f,
        SeriesTruncation::Terms(n) => {
            let mut term = 1.0;
            let mut sum = 0.0;
            for _ in 0..n {
                term *= f;
                sum += term;
            }
            sum
        }
    }
}

/// `d = Σᵢ (M τ′/dt)ⁱ r` component by component. Vanishes in quasi-static mode.
pub fn subscale_history(
    residual: &ElementResidual,
    tau_dyn: &Tau,
    rho: f64,
    dt: f64,
    mode: SubscaleMode,
    series: SeriesTruncation,
) -> SubscaleVector {
    if mode == SubscaleMode::QuasiStatic {
        return SubscaleVector::default();
    }
    let m = mass_diagonal(rho);
    let t = tau_dyn.diagonal();
    let r = residual.as_array();
    let mut d = [0.0; 4];
    for i in 0..4 {
        d[i] = series_factor(m[i] * t[i] / dt, series) * r[i];
    }
    SubscaleVector {
        d1: [d[0], d[1]],
        d2: d[2],
        d3: d[3],
    }
}
