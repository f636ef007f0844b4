//! Piecewise-linear finite elements on a [`Mesh`].
//!
//! All matrices assembled on one [`FemSpace`] share a single symmetric sparsity
//! pattern (the vertex adjacency graph plus the diagonal), so linear combinations
//! are plain vector operations and one symbolic Cholesky factorization serves
//! every solve.
//!
//! Integrals of nonlinear nodal expressions use the three-point edge-midpoint
//! rule on each triangle. It integrates quadratics exactly, so the consistent
//! mass matrix and every P1 product of two fields are reproduced without error.

mod assemble;
mod solve;

pub use assemble::{
    assemble_boundary_mass, assemble_load, assemble_mass, assemble_midpoint_mass,
    assemble_stiffness, element_means, midpoint_moment, midpoint_values, sigma_vertices, Sigma,
};
pub use solve::{solve_sparse, Factorization, SOLVE_RTOL};

use std::ops::Deref;
use std::sync::{Arc, OnceLock};

use faer::sparse::linalg::solvers::SymbolicLlt;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Symmetric CSR sparsity pattern with sorted column indices.
#[derive(Debug)]
pub struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    symbolic: OnceLock<SymbolicLlt<usize>>,
}

impl Pattern {
    fn from_triangles(n: usize, triangles: &[[usize; 3]]) -> Self {
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for t in triangles {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        adj[t[a]].push(t[b]);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in adj.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Pattern {
            n,
            row_ptr,
            col_idx,
            symbolic: OnceLock::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }
}

/// Symmetric sparse matrix stored over a shared [`Pattern`].
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        CsrMatrix { pattern, values }
    }

    /// Diagonal matrix over an existing pattern.
    pub fn from_diagonal(pattern: Arc<Pattern>, diag: &[f64]) -> Self {
        let mut m = CsrMatrix::zeros(pattern);
        for (i, &d) in diag.iter().enumerate() {
            let s = m.pattern.slot(i, i).expect("pattern holds the diagonal");
            m.values[s] = d;
        }
        m
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn dimension(&self) -> usize {
        self.pattern.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.slot(i, j).map_or(0.0, |s| self.values[s])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dimension()).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dimension(), "vector length");
        let p = &self.pattern;
        (0..p.n)
            .map(|i| {
                (p.row_ptr[i]..p.row_ptr[i + 1])
                    .map(|s| self.values[s] * x[p.col_idx[s]])
                    .sum()
            })
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| self.values[p.row_ptr[i]..p.row_ptr[i + 1]].iter().sum())
            .collect()
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let p = &self.pattern;
        let mut worst: f64 = 0.0;
        for i in 0..p.n {
            for s in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[s];
                worst = worst.max((self.values[s] - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn check_same_pattern(&self, other: &CsrMatrix) {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern),
            "matrices assembled on different spaces"
        );
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &CsrMatrix) {
        self.check_same_pattern(other);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        self.check_same_pattern(other);
        CsrMatrix {
            pattern: self.pattern.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|a| *a *= alpha);
    }

    /// Replaces row and column `i` of every index in `fixed` by the identity,
    /// keeping the pattern. Used to eliminate prescribed unknowns.
    pub fn eliminate(&self, fixed: &[bool]) -> CsrMatrix {
        let p = &self.pattern;
        let mut out = self.clone();
        for i in 0..p.n {
            for s in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[s];
                if fixed[i] || fixed[j] {
                    out.values[s] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Nodal values of a P1 field, one per mesh vertex, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::validation(format!(
                "nodal field has {} values, mesh has {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::validation(format!("nodal value {i} is not finite")));
        }
        Ok(NodalField(values))
    }

    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        NodalField(mesh.vertices().iter().map(|&p| f(p)).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for NodalField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// P1 space on a fixed mesh: element geometry, the shared sparsity pattern and
/// lazily cached constant matrices.
#[derive(Debug)]
pub struct FemSpace {
    mesh: Mesh,
    pattern: Arc<Pattern>,
    /// Value-array positions of the local 3x3 entries of each element, row major.
    slots: Vec<[usize; 9]>,
    /// Gradients of the three barycentric basis functions of each element.
    grads: Vec<[[f64; 2]; 3]>,
    stiffness: OnceLock<CsrMatrix>,
    mass: OnceLock<CsrMatrix>,
}

impl FemSpace {
    pub fn new(mesh: Mesh) -> Self {
        let pattern = Arc::new(Pattern::from_triangles(mesh.n_vertices(), mesh.triangles()));
        let slots = mesh
            .triangles()
            .iter()
            .map(|t| {
                let mut s = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        s[3 * a + b] = pattern.slot(t[a], t[b]).expect("element entry in pattern");
                    }
                }
                s
            })
            .collect();
        let grads = (0..mesh.n_triangles())
            .map(|k| {
                let p = mesh.triangle_points(k);
                let two_area = 2.0 * mesh.element_areas()[k];
                let mut g = [[0.0; 2]; 3];
                for (i, gi) in g.iter_mut().enumerate() {
                    let (b, c) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                    *gi = [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area];
                }
                g
            })
            .collect();
        FemSpace {
            mesh,
            pattern,
            slots,
            grads,
            stiffness: OnceLock::new(),
            mass: OnceLock::new(),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn basis_gradients(&self, k: usize) -> &[[f64; 2]; 3] {
        &self.grads[k]
    }

    /// Constant gradient of the interpolant of `u` on element `k`.
    pub fn element_gradient(&self, k: usize, u: &[f64]) -> [f64; 2] {
        let t = self.mesh.triangles()[k];
        let g = &self.grads[k];
        let mut out = [0.0; 2];
        for i in 0..3 {
            out[0] += u[t[i]] * g[i][0];
            out[1] += u[t[i]] * g[i][1];
        }
        out
    }

    /// Unit-coefficient stiffness matrix, assembled once.
    pub fn stiffness(&self) -> &CsrMatrix {
        self.stiffness.get_or_init(|| {
            assemble_stiffness(self, &vec![1.0; self.mesh.n_triangles()])
                .expect("unit coefficient is positive")
        })
    }

    /// Unit-weight consistent mass matrix, assembled once.
    pub fn mass(&self) -> &CsrMatrix {
        self.mass.get_or_init(|| {
            assemble_mass(self, &vec![1.0; self.mesh.n_triangles()]).expect("unit weight is valid")
        })
    }

    pub(crate) fn scatter(&self, locals: &[[f64; 9]]) -> CsrMatrix {
        let mut m = CsrMatrix::zeros(self.pattern.clone());
        // sequential scatter in element order keeps the sums reproducible
        for (s, local) in self.slots.iter().zip(locals) {
            for q in 0..9 {
                m.values[s[q]] += local[q];
            }
        }
        m
    }

    pub(crate) fn check_nodal(&self, what: &str, x: &[f64]) -> Result<()> {
        if x.len() != self.n_dofs() {
            return Err(Error::validation(format!(
                "{what} has {} values, expected {}",
                x.len(),
                self.n_dofs()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_elemental<T>(&self, what: &str, x: &[T]) -> Result<()> {
        if x.len() != self.mesh.n_triangles() {
            return Err(Error::validation(format!(
                "{what} has {} values, expected one per element ({})",
                x.len(),
                self.mesh.n_triangles()
            )));
        }
        Ok(())
    }
}
