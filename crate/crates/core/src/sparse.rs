//! Thin wrapper over a sparse LU direct solver.
//!
//! The PDE Jacobians share one sparsity pattern across Newton iterations, so
//! the symbolic analysis is computed once and reused. Singularity is detected
//! by the factorization or by a non-finite triangular solve.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

/// Sparse LU factorization with symbolic reuse between refactorizations.
pub struct SparseLu {
    dim: usize,
    symbolic: Option<SymbolicLu<usize>>,
    numeric: Option<Lu<usize, f64>>,
}

impl SparseLu {
    /// Solver for square systems of the given dimension.
    pub fn new(dim: usize) -> Self {
        SparseLu {
            dim,
            symbolic: None,
            numeric: None,
        }
    }

    /// Factorizes the matrix given as (row, col, value) entries.
    ///
    /// Entries must not repeat a (row, col) position. The first call performs
    /// the symbolic analysis; later calls reuse it, so the sparsity pattern
    /// must not change between calls.
    pub fn factor(&mut self, entries: &[(usize, usize, f64)]) -> Result<()> {
        let triplets: Vec<Triplet<usize, usize, f64>> = entries
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(self.dim, self.dim, &triplets)
            .map_err(|e| Error::LinearAlgebra(format!("matrix assembly failed: {e:?}")))?;
        if self.symbolic.is_none() {
            let sym = SymbolicLu::try_new(mat.symbolic())
                .map_err(|e| Error::LinearAlgebra(format!("symbolic analysis failed: {e:?}")))?;
            self.symbolic = Some(sym);
        }
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone().unwrap(), mat.as_ref())
            .map_err(|e| Error::LinearAlgebra(format!("LU factorization failed: {e:?}")))?;
        self.numeric = Some(lu);
        Ok(())
    }

    /// Solves A x = rhs with the current factorization.
    ///
    /// A non-finite solution reports the matrix as singular.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = self
            .numeric
            .as_ref()
            .ok_or_else(|| Error::LinearAlgebra("solve before factorization".into()))?;
        if rhs.len() != self.dim {
            return Err(Error::LinearAlgebra(format!(
                "rhs length {} does not match dimension {}",
                rhs.len(),
                self.dim
            )));
        }
        let mut x = faer::Mat::<f64>::from_fn(self.dim, 1, |i, _| rhs[i]);
        lu.solve_in_place(x.as_mut());
        let out: Vec<f64> = (0..self.dim).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearAlgebra(
                "triangular solve produced non-finite values (singular matrix)".into(),
            ));
        }
        Ok(out)
    }
}
