//! Sparse direct LU through faer, with the symbolic factorization cached per pattern.

use cfem_core::linear_solver::{relative_residual, LinearSolver, SolveRecord, SolverMethod};
use cfem_core::sparse::CsrMatrix;
use cfem_core::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::Mat;

struct Pattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    csc: SymbolicSparseColMat<usize>,
    /// CSR value index feeding each CSC slot.
    gather: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

/// Direct solver with a few sweeps of iterative refinement.
pub struct FaerLu {
    pub tolerance: f64,
    pub refinement_sweeps: usize,
    pattern: Option<Pattern>,
}

impl FaerLu {
    pub fn new(tolerance: f64) -> Self {
        FaerLu {
            tolerance,
            refinement_sweeps: 3,
            pattern: None,
        }
    }

    fn prepare(&mut self, a: &CsrMatrix) -> Result<()> {
        if let Some(p) = &self.pattern {
            if p.row_ptr == a.row_ptr() && p.col_idx == a.col_idx() {
                return Ok(());
            }
        }
        let n = a.nrows();
        let t = a.transpose();
        // CSR of Aᵀ is the CSC of A; track where each value comes from
        let mut gather = vec![0usize; a.nnz()];
        let mut next = t.row_ptr().to_vec();
        for r in 0..n {
            let (cols, _) = a.row(r);
            for (k, &c) in cols.iter().enumerate() {
                gather[next[c]] = a.row_ptr()[r] + k;
                next[c] += 1;
            }
        }
        let csc = SymbolicSparseColMat::new_checked(n, n, t.row_ptr().to_vec(), None, t.col_idx().to_vec());
        let symbolic = SymbolicLu::try_new(csc.as_ref()).map_err(|_| Error::Solver("symbolic LU failed"))?;
        self.pattern = Some(Pattern {
            row_ptr: a.row_ptr().to_vec(),
            col_idx: a.col_idx().to_vec(),
            csc,
            gather,
            symbolic,
        });
        Ok(())
    }
}

impl LinearSolver for FaerLu {
    fn solve(&mut self, a: &CsrMatrix, b: &[f64], x: &mut [f64]) -> Result<SolveRecord> {
        if a.nrows() != a.ncols() || b.len() != a.nrows() || x.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("right-hand side is not finite"));
        }
        self.prepare(a)?;
        let p = self.pattern.as_ref().expect("prepared");
        let vals: Vec<f64> = p.gather.iter().map(|&i| a.values()[i]).collect();
        let mat = SparseColMatRef::new(p.csc.as_ref(), &vals);
        let lu = Lu::try_new_with_symbolic(p.symbolic.clone(), mat).map_err(|_| Error::Solver("numeric LU failed"))?;

        let n = b.len();
        let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        let sol = lu.solve(&rhs);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = sol[(i, 0)];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("singular matrix"));
        }
        let mut res = relative_residual(a, b, x);
        for _ in 0..self.refinement_sweeps {
            if res <= self.tolerance {
                break;
            }
            let ax = a.mul_vec(x);
            let r = Mat::<f64>::from_fn(n, 1, |i, _| b[i] - ax[i]);
            let dx = lu.solve(&r);
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += dx[(i, 0)];
            }
            res = relative_residual(a, b, x);
        }
        if !res.is_finite() {
            return Err(Error::Solver("singular matrix"));
        }
        Ok(SolveRecord {
            method: SolverMethod::DirectLu,
            iterations: 0,
            relative_residual: res,
            fell_back: false,
        })
    }
}
