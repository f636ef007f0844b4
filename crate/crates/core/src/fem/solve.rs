use faer::linalg::cholesky::llt::factor::LltError as DenseLltError;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use super::{norm2, CsrMatrix, Pattern};
use crate::error::{Error, Result};

/// Relative residual required from every direct solve.
pub const SOLVE_RTOL: f64 = 1e-10;

const REFINEMENT_STEPS: usize = 3;

fn symbolic_of(pattern: &Pattern) -> Result<SymbolicLlt<usize>> {
    if let Some(s) = pattern.symbolic.get() {
        return Ok(s.clone());
    }
    // a symmetric CSR pattern read as CSC describes the same matrix
    let sym = SymbolicSparseColMatRef::new_checked(
        pattern.n,
        pattern.n,
        &pattern.row_ptr,
        None,
        &pattern.col_idx,
    );
    let s = SymbolicLlt::try_new(sym, Side::Lower).map_err(|e| Error::Factorization {
        pivot: 0,
        dimension: pattern.n,
        reason: format!("symbolic analysis failed: {e}"),
    })?;
    Ok(pattern.symbolic.get_or_init(|| s).clone())
}

/// Sparse Cholesky factorization of a symmetric positive definite [`CsrMatrix`].
pub struct Factorization<'a> {
    matrix: &'a CsrMatrix,
    llt: Llt<usize, f64>,
}

impl<'a> Factorization<'a> {
    pub fn new(matrix: &'a CsrMatrix) -> Result<Self> {
        let pattern = matrix.pattern();
        let n = pattern.n;
        if let Some(i) = matrix.values().iter().position(|x| !x.is_finite()) {
            return Err(Error::Factorization {
                pivot: 0,
                dimension: n,
                reason: format!("matrix entry {i} is not finite"),
            });
        }
        let symbolic = symbolic_of(pattern)?;
        let sym =
            SymbolicSparseColMatRef::new_checked(n, n, &pattern.row_ptr, None, &pattern.col_idx);
        let mat = SparseColMatRef::new(sym, matrix.values());
        let llt = Llt::try_new_with_symbolic(symbolic, mat, Side::Lower).map_err(|e| match e {
            LltError::Numeric(DenseLltError::NonPositivePivot { index }) => Error::Factorization {
                pivot: index,
                dimension: n,
                reason: "matrix is not positive definite".into(),
            },
            LltError::Generic(g) => Error::Factorization {
                pivot: 0,
                dimension: n,
                reason: g.to_string(),
            },
        })?;
        Ok(Factorization { matrix, llt })
    }

    fn apply(&self, x: &mut [f64]) {
        let n = x.len();
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(x, n, 1));
    }

    /// Solves `A x = b`, refining iteratively until the relative residual is at most
    /// [`SOLVE_RTOL`].
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.matrix.dimension();
        if b.len() != n {
            return Err(Error::validation(format!(
                "right-hand side has {} entries, matrix dimension is {n}",
                b.len()
            )));
        }
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = b.to_vec();
        self.apply(&mut x);
        let mut rel = f64::INFINITY;
        for step in 0..=REFINEMENT_STEPS {
            let ax = self.matrix.mul_vec(&x);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rel = norm2(&r) / bnorm;
            if rel <= SOLVE_RTOL || !rel.is_finite() || step == REFINEMENT_STEPS {
                break;
            }
            self.apply(&mut r);
            x.iter_mut().zip(&r).for_each(|(xi, di)| *xi += di);
        }
        if rel <= SOLVE_RTOL {
            Ok(x)
        } else {
            Err(Error::Factorization {
                pivot: 0,
                dimension: n,
                reason: format!(
                    "relative residual {rel:.3e} after refinement exceeds {SOLVE_RTOL:e}"
                ),
            })
        }
    }
}

/// Solves `A x = b` for a symmetric positive definite `A`.
pub fn solve_sparse(matrix: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    Factorization::new(matrix)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_load, FemSpace};
    use crate::mesh::generate_disk_mesh;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_system() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.3).unwrap());
        let n = space.n_dofs();
        let d: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let a = CsrMatrix::from_diagonal(space.pattern().clone(), &d);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solve_sparse(&a, &b).unwrap();
        for i in 0..n {
            assert_relative_eq!(x[i], b[i] / d[i], max_relative = 1e-14);
        }
    }

    #[test]
    fn constant_solves_reaction_diffusion() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.05).unwrap());
        let a = space.stiffness().combine(1.0, space.mass(), 1.0);
        let b = assemble_load(&space, |_| 1.0);
        let x = solve_sparse(&a, &b).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn zero_rhs() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.2).unwrap());
        let x = solve_sparse(space.mass(), &vec![0.0; space.n_dofs()]).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_stiffness_is_reported() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.2).unwrap());
        let mut a = space.stiffness().clone();
        a.add_scaled(-1.0, space.mass());
        let err = solve_sparse(&a, &vec![1.0; space.n_dofs()]).unwrap_err();
        match err {
            Error::Factorization { dimension, .. } => assert_eq!(dimension, space.n_dofs()),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn factorization_reuse() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.1).unwrap());
        let f = Factorization::new(space.mass()).unwrap();
        for k in 1..4 {
            let b: Vec<f64> = (0..space.n_dofs())
                .map(|i| ((i * k) as f64).cos())
                .collect();
            let x = f.solve(&b).unwrap();
            let r = space.mass().mul_vec(&x);
            let err: f64 = r
                .iter()
                .zip(&b)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err <= SOLVE_RTOL * norm2(&b));
        }
    }
}
