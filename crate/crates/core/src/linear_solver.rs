//! Krylov solvers, the solver interface and pressure gauge handling.

use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{CoupledState, SparseSystem};
use crate::basis::quadrature;
use crate::math::abs;
use crate::mesh::StructuredTriMesh;
use crate::sparse::{dot, norm, CsrMatrix};
use crate::{Error, Field, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    DirectLu,
    BicgstabIlu0,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PressureFix {
    /// Fix the pressure at node `(0, 0)` to the exact value during the solve.
    PinNode,
    /// Fix a zero gauge during the solve; only the post-solve mean shift remains.
    MeanShift,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Relative residual tolerance `‖Ax − b‖/‖b‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub pressure_fix: PressureFix,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: SolverMethod::DirectLu,
            tolerance: 1e-10,
            max_iterations: 5000,
            pressure_fix: PressureFix::PinNode,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("solver tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("solver.max_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveRecord {
    pub method: SolverMethod,
    /// Iterations (0 for a direct solve, refinement sweeps excluded).
    pub iterations: usize,
    pub relative_residual: f64,
    /// The iterative path failed and the direct path produced the answer.
    pub fell_back: bool,
}

/// A solver for one assembled system; implementations may cache factorizations
/// between calls with the same sparsity pattern.
pub trait LinearSolver {
    fn solve(&mut self, a: &CsrMatrix, b: &[f64], x: &mut [f64]) -> Result<SolveRecord>;
}

/// `‖Ax − b‖ / ‖b‖`, or `‖Ax‖` when `b = 0`.
pub fn relative_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    let nb = norm(b);
    if nb > 0.0 {
        norm(&r) / nb
    } else {
        norm(&r)
    }
}

fn check_system(a: &CsrMatrix, b: &[f64], x: &[f64]) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if b.len() != a.nrows() || x.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len().min(x.len()),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("right-hand side is not finite"));
    }
    Ok(())
}

/// Incomplete LU with zero fill on the pattern of `A`.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for (r, d) in diag.iter_mut().enumerate() {
            *d = lu.position(r, r).ok_or(Error::SolverBreakdown {
                iterations: 0,
                residual: f64::INFINITY,
            })?;
        }
        let row_ptr = lu.row_ptr().to_vec();
        let col_idx = lu.col_idx().to_vec();
        let vals = lu.values_mut();
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (row_ptr[i], row_ptr[i + 1]);
            for p in start..end {
                marker[col_idx[p]] = p;
            }
            for p in start..end {
                let k = col_idx[p];
                if k >= i {
                    break;
                }
                let pivot = vals[diag[k]];
                if pivot == 0.0 || !pivot.is_finite() {
                    return Err(Error::SolverBreakdown {
                        iterations: 0,
                        residual: f64::INFINITY,
                    });
                }
                let l = vals[p] / pivot;
                vals[p] = l;
                for q in diag[k] + 1..row_ptr[k + 1] {
                    let m = marker[col_idx[q]];
                    if m != usize::MAX && m >= start && m < end {
                        vals[m] -= l * vals[q];
                    }
                }
            }
            for p in start..end {
                marker[col_idx[p]] = usize::MAX;
            }
            let d = vals[diag[i]];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::SolverBreakdown {
                    iterations: 0,
                    residual: f64::INFINITY,
                });
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    /// `z = (LU)⁻¹ r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let rp = self.lu.row_ptr();
        let ci = self.lu.col_idx();
        let v = self.lu.values();
        for i in 0..n {
            let mut s = r[i];
            for p in rp[i]..self.diag[i] {
                s -= v[p] * z[ci[p]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in self.diag[i] + 1..rp[i + 1] {
                s -= v[p] * z[ci[p]];
            }
            z[i] = s / v[self.diag[i]];
        }
    }
}

/// Right-preconditioned BiCGSTAB with ILU(0).
#[derive(Clone, Copy, Debug)]
pub struct BicgstabIlu0 {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl BicgstabIlu0 {
    pub fn from_config(cfg: &SolverConfig) -> Self {
        BicgstabIlu0 {
            tolerance: cfg.tolerance,
            max_iterations: cfg.max_iterations,
        }
    }
}

impl LinearSolver for BicgstabIlu0 {
    fn solve(&mut self, a: &CsrMatrix, b: &[f64], x: &mut [f64]) -> Result<SolveRecord> {
        check_system(a, b, x)?;
        let n = b.len();
        let nb = norm(b);
        let record = |iterations, relative_residual| SolveRecord {
            method: SolverMethod::BicgstabIlu0,
            iterations,
            relative_residual,
            fell_back: false,
        };
        if nb == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(record(0, 0.0));
        }
        let ilu = Ilu0::factor(a)?;
        let mut r = a.mul_vec(x);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut best = norm(&r) / nb;
        if best <= self.tolerance {
            return Ok(record(0, best));
        }
        for it in 1..=self.max_iterations {
            let rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 || omega == 0.0 || !rho_new.is_finite() {
                return Err(Error::SolverBreakdown {
                    iterations: it,
                    residual: best,
                });
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            ilu.apply(&p, &mut y);
            a.mul_vec_into(&y, &mut v);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 || !rv.is_finite() {
                return Err(Error::SolverBreakdown {
                    iterations: it,
                    residual: best,
                });
            }
            alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            let sn = norm(&s) / nb;
            if sn <= self.tolerance {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                return Ok(record(it, relative_residual(a, b, x)));
            }
            ilu.apply(&s, &mut z);
            a.mul_vec_into(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
            let rn = norm(&r) / nb;
            if !rn.is_finite() {
                return Err(Error::SolverBreakdown {
                    iterations: it,
                    residual: best,
                });
            }
            best = best.min(rn);
            if rn <= self.tolerance {
                // recurrence residual can drift; confirm with the true one
                let true_res = relative_residual(a, b, x);
                if true_res <= self.tolerance {
                    return Ok(record(it, true_res));
                }
                r = a.mul_vec(x);
                for i in 0..n {
                    r[i] = b[i] - r[i];
                }
            }
        }
        Err(Error::NotConverged {
            iterations: self.max_iterations,
            residual: best,
        })
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite systems.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<SolveRecord> {
    check_system(a, b, x)?;
    let n = b.len();
    let nb = norm(b);
    let rec = |iterations, relative_residual| SolveRecord {
        method: SolverMethod::BicgstabIlu0,
        iterations,
        relative_residual,
        fell_back: false,
    };
    if nb == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(rec(0, 0.0));
    }
    let dinv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = a.mul_vec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iterations {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverBreakdown {
                iterations: it,
                residual: norm(&r) / nb,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = norm(&r) / nb;
        if rn <= tolerance {
            return Ok(rec(it, relative_residual(a, b, x)));
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: max_iterations,
        residual: relative_residual(a, b, x),
    })
}

/// Fixes the pressure of `node` to `value` by an identity row.
pub fn pin_pressure(system: &mut SparseSystem, node: usize, value: f64) {
    system.constrain(Field::Pressure.dof(node), value);
}

/// `∫_Ω p_h dΩ / |Ω|`.
pub fn pressure_mean(mesh: &StructuredTriMesh, state: &CoupledState) -> f64 {
    // P1 integrates exactly with the centroid rule
    let rule = quadrature(1).expect("centroid rule");
    let mut integral = 0.0;
    let mut area = 0.0;
    for (_, tri, geom) in mesh.elements() {
        for (lam, w) in rule.iter() {
            let p: f64 = (0..3).map(|i| lam[i] * state.get(Field::Pressure, tri[i])).sum();
            integral += 2.0 * geom.area * w * p;
        }
        area += geom.area;
    }
    integral / area
}

/// Subtracts the area-weighted mean of `p_h`. Pinning, if any, happened before the solve.
pub fn fix_pressure_nullspace(state: &mut CoupledState, mesh: &StructuredTriMesh, _mode: PressureFix) {
    let mean = pressure_mean(mesh, state);
    for n in 0..state.node_count() {
        let p = state.get(Field::Pressure, n);
        state.set(Field::Pressure, n, p - mean);
    }
    // one correction sweep absorbs the rounding of the first subtraction
    let residual = pressure_mean(mesh, state);
    if abs(residual) > 0.0 {
        for n in 0..state.node_count() {
            let p = state.get(Field::Pressure, n);
            state.set(Field::Pressure, n, p - residual);
        }
    }
}

/// Dense Gaussian elimination with partial pivoting, for small systems and tests.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| {
                abs(m[i][k])
                    .partial_cmp(&abs(m[j][k]))
                    .unwrap_or(core::cmp::Ordering::Equal)
            })
            .unwrap_or(k);
        if m[piv][k] == 0.0 {
            return Err(Error::Solver("singular matrix"));
        }
        m.swap(k, piv);
        x.swap(k, piv);
        for i in k + 1..n {
            let l = m[i][k] / m[k][k];
            if l != 0.0 {
                let (upper, lower) = m.split_at_mut(i);
                for (a, b) in lower[0][k..].iter_mut().zip(&upper[k][k..]) {
                    *a -= l * b;
                }
                x[i] -= l * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (x[k] - s) / m[k][k];
    }
    Ok(x)
}

/// Reference implementation of [`LinearSolver`] by dense elimination.
#[derive(Clone, Copy, Debug, Default)]
pub struct DenseLu;

impl LinearSolver for DenseLu {
    fn solve(&mut self, a: &CsrMatrix, b: &[f64], x: &mut [f64]) -> Result<SolveRecord> {
        check_system(a, b, x)?;
        let sol = dense_solve(&a.to_dense(), b)?;
        x.copy_from_slice(&sol);
        Ok(SolveRecord {
            method: SolverMethod::DirectLu,
            iterations: 0,
            relative_residual: relative_residual(a, b, x),
            fell_back: false,
        })
    }
}
