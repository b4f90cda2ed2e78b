//! P1 reference element and triangle quadrature.

use alloc::vec::Vec;

use crate::mesh::ElementGeometry;
use crate::{Error, Result};

/// Linear Lagrange element on `{(ξ, η) : ξ, η ≥ 0, ξ + η ≤ 1}` with
/// `N₁ = 1 − ξ − η`, `N₂ = ξ`, `N₃ = η`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceElement;

impl ReferenceElement {
    pub const GRADIENTS: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

    #[inline]
    pub fn values(&self, xi: f64, eta: f64) -> [f64; 3] {
        [1.0 - xi - eta, xi, eta]
    }

    #[inline]
    pub fn gradients(&self) -> [[f64; 2]; 3] {
        Self::GRADIENTS
    }
}

/// Quadrature on the reference triangle. Weights sum to its area, 1/2.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    /// Barycentric coordinates `(N₁, N₂, N₃)` of each point.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness_degree: u32,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(ξ, η)` of point `q`.
    #[inline]
    pub fn reference_point(&self, q: usize) -> [f64; 2] {
        [self.points[q][1], self.points[q][2]]
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Rule integrating polynomials of total degree ≤ `degree` exactly, for degree 1 to 4.
pub fn quadrature(degree: u32) -> Result<QuadratureRule> {
    let (points, weights): (Vec<[f64; 3]>, Vec<f64>) = match degree {
        1 => (alloc::vec![[1.0 / 3.0; 3]], alloc::vec![0.5]),
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            (alloc::vec![[a, b, b], [b, a, b], [b, b, a]], alloc::vec![1.0 / 6.0; 3])
        }
        3 => {
            // vertices, edge midpoints and centroid
            let mut p = alloc::vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            p.extend([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]);
            p.push([1.0 / 3.0; 3]);
            let mut w = alloc::vec![1.0 / 40.0; 3];
            w.extend([1.0 / 15.0; 3]);
            w.push(9.0 / 40.0);
            (p, w)
        }
        4 => {
            const A: f64 = 0.445_948_490_915_965;
            const B: f64 = 0.091_576_213_509_771;
            const WA: f64 = 0.223_381_589_678_011 / 2.0;
            const WB: f64 = 0.109_951_743_655_322 / 2.0;
            let (ca, cb) = (1.0 - 2.0 * A, 1.0 - 2.0 * B);
            (
                alloc::vec![[A, A, ca], [A, ca, A], [ca, A, A], [B, B, cb], [B, cb, B], [cb, B, B],],
                alloc::vec![WA, WA, WA, WB, WB, WB],
            )
        }
        d => return Err(Error::UnsupportedQuadrature(d)),
    };
    Ok(QuadratureRule {
        points,
        weights,
        exactness_degree: degree,
    })
}

/// Gradients of the three P1 basis functions on the element with `jacobian`:
/// `∇Nᵢ = J⁻ᵀ ∇̂Nᵢ`.
pub fn physical_gradients(jacobian: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 3]> {
    let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
    let scale = jacobian.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(det.abs() > 1e-14 * scale * scale) || !det.is_finite() {
        return Err(Error::SingularJacobian { element: usize::MAX });
    }
    // J⁻ᵀ = 1/det [[ j11, -j10], [-j01, j00]]
    let inv_t = [
        [jacobian[1][1] / det, -jacobian[1][0] / det],
        [-jacobian[0][1] / det, jacobian[0][0] / det],
    ];
    let mut out = [[0.0; 2]; 3];
    for (g, r) in out.iter_mut().zip(ReferenceElement::GRADIENTS) {
        g[0] = inv_t[0][0] * r[0] + inv_t[0][1] * r[1];
        g[1] = inv_t[1][0] * r[0] + inv_t[1][1] * r[1];
    }
    Ok(out)
}

/// Physical gradients for a mesh element, tagging failures with its index.
pub fn element_gradients(geom: &ElementGeometry, element: usize) -> Result<[[f64; 2]; 3]> {
    physical_gradients(&geom.jacobian).map_err(|_| Error::SingularJacobian { element })
}
