//! Coefficient models and the five verification cases.

use core::fmt;
use core::str::FromStr;

use crate::math::exp;
use crate::{Error, Result};

/// Concentration-dependent dynamic viscosity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ViscosityModel {
    Constant(f64),
    /// `μ(c) = mu0 · exp(a · b · c)`.
    Exponential {
        mu0: f64,
        a: f64,
        b: f64,
    },
}

impl ViscosityModel {
    pub fn at(&self, c: f64) -> f64 {
        match *self {
            ViscosityModel::Constant(mu) => mu,
            ViscosityModel::Exponential { mu0, a, b } => mu0 * exp(a * b * c),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ViscosityModel::Constant(_))
    }
}

pub fn viscosity_at(model: &ViscosityModel, c: f64) -> f64 {
    model.at(c)
}

/// Diagonal diffusion tensor `diag(D₁, D₂)` acting as `∇̃c = (D₁ ∂ₓc, D₂ ∂ᵧc)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiffusionField {
    Constant(f64),
    /// `D₁ = e^{−t} y²(y−1)²(2y−1)² x⁴(x−1)⁴`, `D₂ = e^{−t} x²(x−1)²(2x−1)² y⁴(y−1)⁴`.
    Manufactured,
}

#[inline]
fn quartic(s: f64) -> f64 {
    // s²(s−1)²
    let q = s * (s - 1.0);
    q * q
}

#[inline]
fn quartic_prime(s: f64) -> f64 {
    2.0 * s * (s - 1.0) * (2.0 * s - 1.0)
}

#[inline]
fn cubic(s: f64) -> f64 {
    // s(s−1)(2s−1)
    s * (s - 1.0) * (2.0 * s - 1.0)
}

impl DiffusionField {
    pub fn at(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        match *self {
            DiffusionField::Constant(d) => [d, d],
            DiffusionField::Manufactured => {
                let e = exp(-t);
                let (ax, ay) = (quartic(x), quartic(y));
                let (bx, by) = (cubic(x), cubic(y));
                [e * by * by * ax * ax, e * bx * bx * ay * ay]
            }
        }
    }

    /// `(∂D₁/∂x, ∂D₂/∂y)`, the parts of `∇·∇̃c` that survive for piecewise-linear `c`.
    pub fn axial_derivatives(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        match *self {
            DiffusionField::Constant(_) => [0.0, 0.0],
            DiffusionField::Manufactured => {
                let e = exp(-t);
                let (bx, by) = (cubic(x), cubic(y));
                [
                    e * by * by * 2.0 * quartic(x) * quartic_prime(x),
                    e * bx * bx * 2.0 * quartic(y) * quartic_prime(y),
                ]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, DiffusionField::Constant(_))
    }
}

pub fn diffusion_at(field: &DiffusionField, x: f64, y: f64, t: f64) -> [f64; 2] {
    field.at(x, y, t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    pub rho: f64,
    /// Reaction coefficient.
    pub alpha: f64,
    pub t_final: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParameter("density must be positive"));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidParameter("reaction coefficient must be non-negative"));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidParameter("final time must be positive"));
        }
        Ok(())
    }
}

/// Everything the discretization needs to know about the physics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseModels {
    pub viscosity: ViscosityModel,
    pub diffusion: DiffusionField,
    pub params: PhysicalParams,
}

/// The verification cases: constant viscosity at three Reynolds numbers, and
/// concentration-dependent viscosity with variable diffusion at two viscosity levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Case {
    Ia,
    Ib,
    Ic,
    IIa,
    IIb,
}

impl Case {
    pub const ALL: [Case; 5] = [Case::Ia, Case::Ib, Case::Ic, Case::IIa, Case::IIb];

    pub fn key(self) -> &'static str {
        match self {
            Case::Ia => "I-a",
            Case::Ib => "I-b",
            Case::Ic => "I-c",
            Case::IIa => "II-a",
            Case::IIb => "II-b",
        }
    }

    /// Reynolds number for the constant-viscosity cases.
    pub fn reynolds(self) -> Option<f64> {
        match self {
            Case::Ia => Some(50.0),
            Case::Ib => Some(500.0),
            Case::Ic => Some(5000.0),
            Case::IIa | Case::IIb => None,
        }
    }

    pub fn models(self) -> CaseModels {
        let params = PhysicalParams {
            rho: 1.0,
            alpha: 0.01,
            t_final: 1.0,
        };
        match self {
            Case::Ia | Case::Ib | Case::Ic => CaseModels {
                // unit density and reference scales: μ = 1/Re
                viscosity: ViscosityModel::Constant(1.0 / self.reynolds().unwrap()),
                diffusion: DiffusionField::Constant(2.0),
                params,
            },
            Case::IIa => CaseModels {
                viscosity: ViscosityModel::Exponential {
                    mu0: 0.00954,
                    a: 27.93,
                    b: 0.028,
                },
                diffusion: DiffusionField::Manufactured,
                params,
            },
            Case::IIb => CaseModels {
                viscosity: ViscosityModel::Exponential {
                    mu0: 0.0000954,
                    a: 27.93,
                    b: 0.028,
                },
                diffusion: DiffusionField::Manufactured,
                params,
            },
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Case::ALL
            .into_iter()
            .find(|c| c.key().eq_ignore_ascii_case(s.trim()))
            .ok_or(Error::InvalidParameter("unknown case key"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn viscosity_examples() {
        assert_eq!(ViscosityModel::Constant(0.02).at(123.0), 0.02);
        let m = Case::IIa.models().viscosity;
        assert_eq!(m.at(0.0), 0.00954);
        // c(0.5, 0.5, 0) = 1/16; 27.93 · 0.028 / 16 = 0.0488775
        let expected = 0.00954 * 0.0488775f64.exp();
        assert!((viscosity_at(&m, 0.0625) - expected).abs() < 1e-15);
    }

    #[test]
    fn diffusion_examples() {
        assert_eq!(DiffusionField::Constant(2.0).at(0.3, 0.4, 0.5), [2.0, 2.0]);
        let m = DiffusionField::Manufactured;
        assert_eq!(m.at(0.0, 0.3, 0.2)[0], 0.0);
        assert_eq!(m.at(0.3, 0.5, 0.2)[0], 0.0);
        // direct expansion of the closed form at (1/4, 1/4, 0):
        // y²(y−1)²(2y−1)² = (1/16)(9/16)(1/4) = 9/1024, x⁴(x−1)⁴ = (1/256)(81/256)
        let d1 = 9.0 / 1024.0 * (81.0 / 65536.0);
        let [a, b] = diffusion_at(&m, 0.25, 0.25, 0.0);
        assert!((a - d1).abs() < 1e-18);
        assert!((b - d1).abs() < 1e-18);
    }

    #[test]
    fn axial_derivatives_match_differences() {
        let m = DiffusionField::Manufactured;
        let h = 1e-6;
        for &(x, y, t) in &[(0.2, 0.7, 0.3), (0.61, 0.33, 0.9), (0.9, 0.1, 0.0)] {
            let d = m.axial_derivatives(x, y, t);
            let fx = (m.at(x + h, y, t)[0] - m.at(x - h, y, t)[0]) / (2.0 * h);
            let fy = (m.at(x, y + h, t)[1] - m.at(x, y - h, t)[1]) / (2.0 * h);
            assert!((d[0] - fx).abs() < 1e-10);
            assert!((d[1] - fy).abs() < 1e-10);
        }
    }

    #[test]
    fn case_keys_roundtrip() {
        for c in Case::ALL {
            assert_eq!(c.key().parse::<Case>().unwrap(), c);
        }
        assert!("III".parse::<Case>().is_err());
        assert_eq!(Case::Ic.models().viscosity, ViscosityModel::Constant(0.0002));
    }

    proptest::proptest! {
        #[test]
        fn exponential_viscosity_is_positive_and_monotone(c1 in -5.0f64..5.0, dc in 0.0f64..3.0) {
            for case in [Case::IIa, Case::IIb] {
                let m = case.models().viscosity;
                proptest::prop_assert!(m.at(c1) > 0.0);
                proptest::prop_assert!(m.at(c1 + dc) >= m.at(c1));
            }
        }

        #[test]
        fn manufactured_diffusion_is_non_negative(x in 0.0f64..=1.0, y in 0.0f64..=1.0, t in 0.0f64..2.0) {
            let [a, b] = DiffusionField::Manufactured.at(x, y, t);
            proptest::prop_assert!(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite());
        }
    }
}
