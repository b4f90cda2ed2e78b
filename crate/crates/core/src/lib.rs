//! Finite element kernels for the transient Navier–Stokes equations fully coupled
//! with a variable-coefficient advection–diffusion–reaction transport equation.
//!
//! Equal-order P1 elements on a structured triangulation of the unit square, with
//! either the standard Galerkin formulation or the algebraic subgrid-scale (ASGS)
//! stabilized formulation (quasi-static or dynamic subscales), advanced in time by
//! a θ-scheme with lagged coefficients so that each step is a single linear solve.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files, the
//! command line, or a sparse direct factorization lives in the companion `cfem`
//! crate; a Krylov solver is provided here behind the [`linear_solver::LinearSolver`]
//! trait so that the time stepper can run without it.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
mod math;

pub mod assembly;
pub mod basis;
pub mod estimator;
pub mod linear_solver;
pub mod mesh;
pub mod mms;
pub mod models;
pub mod sparse;
pub mod stabilization;
pub mod time_stepper;

pub use error::Error;

pub type Result<T> = core::result::Result<T, Error>;

/// Unknowns carried by every mesh node, in storage order.
pub const DOFS_PER_NODE: usize = 4;

/// Component offsets inside a node's block of unknowns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    VelocityX = 0,
    VelocityY = 1,
    Pressure = 2,
    Concentration = 3,
}

impl Field {
    pub const ALL: [Field; 4] = [
        Field::VelocityX,
        Field::VelocityY,
        Field::Pressure,
        Field::Concentration,
    ];

    #[inline]
    pub fn offset(self) -> usize {
        self as usize
    }

    /// Global index of this component at `node`.
    #[inline]
    pub fn dof(self, node: usize) -> usize {
        node * DOFS_PER_NODE + self as usize
    }
}
