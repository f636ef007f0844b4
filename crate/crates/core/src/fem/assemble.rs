use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CsrMatrix, FemSpace};
use crate::error::{Error, Result};
use crate::mesh::{dist, polar_angle, BoundaryMarker, Mesh, Point};
use crate::par;

/// Accessible part of the outer boundary.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sigma {
    /// The whole outer circle.
    #[default]
    Full,
    /// Counterclockwise arc from `start` to `end`, in radians.
    Arc { start: f64, end: f64 },
}

impl Sigma {
    pub fn validate(&self) -> Result<()> {
        if let Sigma::Arc { start, end } = *self {
            if !start.is_finite() || !end.is_finite() {
                return Err(Error::validation("sigma arc endpoints must be finite"));
            }
            let span = (end - start).rem_euclid(TAU);
            if span == 0.0 {
                return Err(Error::validation("sigma arc is empty"));
            }
        }
        Ok(())
    }

    pub fn contains_angle(&self, theta: f64) -> bool {
        match *self {
            Sigma::Full => true,
            Sigma::Arc { start, end } => {
                let span = (end - start).rem_euclid(TAU);
                let off = (theta - start).rem_euclid(TAU);
                // tolerance absorbs rounding of vertices placed exactly on an endpoint
                off <= span + 1e-12 || off >= TAU - 1e-12
            }
        }
    }

    fn contains_edge(&self, mesh: &Mesh, e: [usize; 2]) -> bool {
        e.iter()
            .all(|&i| self.contains_angle(polar_angle(mesh.vertices()[i])))
    }
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Full => write!(f, "full"),
            Sigma::Arc { start, end } => write!(f, "arc:{start},{end}"),
        }
    }
}

/// Vertices of the OUTER edges lying in `sigma`, sorted by polar angle.
pub fn sigma_vertices(mesh: &Mesh, sigma: &Sigma) -> Vec<usize> {
    let mut on = vec![false; mesh.n_vertices()];
    for e in mesh.boundary_edges() {
        if e.marker == BoundaryMarker::Outer && sigma.contains_edge(mesh, e.vertices) {
            on[e.vertices[0]] = true;
            on[e.vertices[1]] = true;
        }
    }
    mesh.outer_vertices_by_angle()
        .into_iter()
        .filter(|&i| on[i])
        .collect()
}

fn check_finite(what: &str, x: &[f64]) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!("{what}[{i}] is not finite")));
    }
    Ok(())
}

/// `Σ_K coeff_K ∫_K ∇φ_i·∇φ_j` with one coefficient per element.
pub fn assemble_stiffness(space: &FemSpace, coeff: &[f64]) -> Result<CsrMatrix> {
    space.check_elemental("stiffness coefficient", coeff)?;
    check_finite("stiffness coefficient", coeff)?;
    if let Some(k) = coeff.iter().position(|&c| c <= 0.0) {
        return Err(Error::validation(format!(
            "stiffness coefficient on element {k} is {} (must be positive)",
            coeff[k]
        )));
    }
    let areas = space.mesh().element_areas();
    let locals = par::map_range(coeff.len(), |k| {
        let g = space.basis_gradients(k);
        let scale = coeff[k] * areas[k];
        let mut local = [0.0; 9];
        for a in 0..3 {
            for b in 0..3 {
                local[3 * a + b] = scale * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
        local
    });
    Ok(space.scatter(&locals))
}

/// Consistent mass matrix `Σ_K weight_K ∫_K φ_i φ_j` with one weight per element.
pub fn assemble_mass(space: &FemSpace, weight: &[f64]) -> Result<CsrMatrix> {
    space.check_elemental("mass weight", weight)?;
    check_finite("mass weight", weight)?;
    if let Some(k) = weight.iter().position(|&w| w < 0.0) {
        return Err(Error::validation(format!(
            "mass weight on element {k} is {} (must be nonnegative)",
            weight[k]
        )));
    }
    let areas = space.mesh().element_areas();
    let locals = par::map_range(weight.len(), |k| {
        let s = weight[k] * areas[k] / 12.0;
        let mut local = [s; 9];
        local[0] = 2.0 * s;
        local[4] = 2.0 * s;
        local[8] = 2.0 * s;
        local
    });
    Ok(space.scatter(&locals))
}

/// Values of a nodal field at the three edge midpoints of every element.
/// Entry `i` belongs to the edge opposite local vertex `i`.
pub fn midpoint_values(mesh: &Mesh, u: &[f64]) -> Vec<[f64; 3]> {
    mesh.triangles()
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| u[i]);
            [0.5 * (b + c), 0.5 * (c + a), 0.5 * (a + b)]
        })
        .collect()
}

/// Mean of the three vertex values on every element.
pub fn element_means(mesh: &Mesh, v: &[f64]) -> Vec<f64> {
    mesh.triangles()
        .iter()
        .map(|t| (v[t[0]] + v[t[1]] + v[t[2]]) / 3.0)
        .collect()
}

/// `Σ_K ∫_K w φ_i φ_j` with `w` given at the edge midpoints, integrated by the midpoint rule.
pub fn assemble_midpoint_mass(space: &FemSpace, w: &[[f64; 3]]) -> Result<CsrMatrix> {
    space.check_elemental("midpoint weight", w)?;
    let areas = space.mesh().element_areas();
    let locals = par::map_range(w.len(), |k| {
        // φ_a φ_b is 1/4 at the midpoint of edge ab and zero at the others
        let s = areas[k] / 12.0;
        let wk = w[k];
        let total = wk[0] + wk[1] + wk[2];
        let mut local = [0.0; 9];
        for a in 0..3 {
            for b in 0..3 {
                local[3 * a + b] = if a == b {
                    s * (total - wk[a])
                } else {
                    s * wk[3 - a - b]
                };
            }
        }
        local
    });
    Ok(space.scatter(&locals))
}

/// `Σ_K ∫_K g φ_i` with `g` given at the edge midpoints, integrated by the midpoint rule.
pub fn midpoint_moment(space: &FemSpace, g: &[[f64; 3]]) -> Result<Vec<f64>> {
    space.check_elemental("midpoint integrand", g)?;
    let mesh = space.mesh();
    let mut out = vec![0.0; space.n_dofs()];
    for ((t, gk), &area) in mesh.triangles().iter().zip(g).zip(mesh.element_areas()) {
        let total = gk[0] + gk[1] + gk[2];
        for a in 0..3 {
            out[t[a]] += area / 6.0 * (total - gk[a]);
        }
    }
    Ok(out)
}

/// Load vector `∫ f φ_i`, integrated by the edge-midpoint rule.
pub fn assemble_load(space: &FemSpace, f: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
    let mesh = space.mesh();
    let g = par::map_range(mesh.n_triangles(), |k| {
        let [a, b, c] = mesh.triangle_points(k);
        let mid = |p: Point, q: Point| [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
        [f(mid(b, c)), f(mid(c, a)), f(mid(a, b))]
    });
    midpoint_moment(space, &g).expect("one entry per element")
}

/// Boundary mass `Σ_{e ⊆ Σ} ∫_e φ_i φ_j` over the OUTER edges inside `sigma`.
pub fn assemble_boundary_mass(space: &FemSpace, sigma: &Sigma) -> Result<CsrMatrix> {
    sigma.validate()?;
    let mesh = space.mesh();
    let mut m = CsrMatrix::zeros(space.pattern().clone());
    let mut count = 0;
    for e in mesh.boundary_edges() {
        if e.marker != BoundaryMarker::Outer || !sigma.contains_edge(mesh, e.vertices) {
            continue;
        }
        count += 1;
        let [a, b] = e.vertices;
        let len = dist(mesh.vertices()[a], mesh.vertices()[b]);
        let p = space.pattern();
        for (i, j, w) in [(a, a, 2.0), (b, b, 2.0), (a, b, 1.0), (b, a, 1.0)] {
            let s = p.slot(i, j).expect("boundary edge in pattern");
            m.values_mut()[s] += len * w / 6.0;
        }
    }
    if count == 0 {
        return Err(Error::validation(format!(
            "sigma {sigma} contains no boundary edge"
        )));
    }
    Ok(m)
}
