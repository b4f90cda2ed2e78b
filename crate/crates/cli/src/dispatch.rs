//! Solver selection with a direct fallback for the iterative path.

use cfem_core::linear_solver::{BicgstabIlu0, LinearSolver, SolveRecord, SolverConfig, SolverMethod};
use cfem_core::sparse::CsrMatrix;
use cfem_core::{Error, Result};

use crate::direct::FaerLu;

pub struct Dispatch {
    method: SolverMethod,
    iterative: BicgstabIlu0,
    direct: FaerLu,
}

impl Dispatch {
    pub fn new(cfg: &SolverConfig) -> Self {
        Dispatch {
            method: cfg.method,
            iterative: BicgstabIlu0::from_config(cfg),
            direct: FaerLu::new(cfg.tolerance),
        }
    }
}

impl LinearSolver for Dispatch {
    fn solve(&mut self, a: &CsrMatrix, b: &[f64], x: &mut [f64]) -> Result<SolveRecord> {
        match self.method {
            SolverMethod::DirectLu => self.direct.solve(a, b, x),
            SolverMethod::BicgstabIlu0 => {
                let guess = x.to_vec();
                match self.iterative.solve(a, b, x) {
                    Ok(rec) => Ok(rec),
                    Err(Error::NotConverged { .. } | Error::SolverBreakdown { .. }) => {
                        x.copy_from_slice(&guess);
                        let mut rec = self.direct.solve(a, b, x)?;
                        rec.fell_back = true;
                        Ok(rec)
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }
}
