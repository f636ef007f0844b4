use std::f64::consts::TAU;

use super::{polar_angle, Mesh};
use crate::error::{Error, Result};

/// Values attached to the OUTER vertices of a mesh, sorted by polar angle.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub vertices: Vec<usize>,
    pub values: Vec<f64>,
}

impl BoundaryTrace {
    /// Nodal vector of length `n` holding the trace on its vertices and zero elsewhere.
    pub fn scatter(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &x) in self.vertices.iter().zip(&self.values) {
            out[i] = x;
        }
        out
    }
}

fn outer_radius_of(mesh: &Mesh) -> Result<f64> {
    if let Some(r) = mesh.outer_radius() {
        return Ok(r);
    }
    let outer = mesh.outer_vertices_by_angle();
    if outer.is_empty() {
        return Err(Error::validation("mesh has no OUTER boundary"));
    }
    let norms: Vec<f64> = outer
        .iter()
        .map(|&i| mesh.vertices()[i][0].hypot(mesh.vertices()[i][1]))
        .collect();
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    if norms.iter().any(|r| (r - mean).abs() > 1e-9 * mean) {
        return Err(Error::validation("OUTER boundary is not a circle"));
    }
    Ok(mean)
}

/// Evaluates the piecewise-linear OUTER trace of `src_field` at every OUTER vertex of `dst`.
/// Both boundaries lie on the same circle, so points are matched by polar angle.
pub fn boundary_trace_interpolate(
    src: &Mesh,
    src_field: &[f64],
    dst: &Mesh,
) -> Result<BoundaryTrace> {
    if src_field.len() != src.n_vertices() {
        return Err(Error::validation(format!(
            "field has {} values, source mesh has {} vertices",
            src_field.len(),
            src.n_vertices()
        )));
    }
    let (rs, rd) = (outer_radius_of(src)?, outer_radius_of(dst)?);
    if (rs - rd).abs() > 1e-9 * rs.max(rd) {
        return Err(Error::validation(format!(
            "outer radii differ: source {rs}, destination {rd}"
        )));
    }

    let ring = src.outer_vertices_by_angle();
    let angles: Vec<f64> = ring
        .iter()
        .map(|&i| polar_angle(src.vertices()[i]))
        .collect();
    let n = ring.len();
    let vertices = dst.outer_vertices_by_angle();
    let values = vertices
        .iter()
        .map(|&i| {
            let t = polar_angle(dst.vertices()[i]);
            // first ring vertex with angle > t; the bracketing segment may wrap around 2π
            let j = angles.partition_point(|&a| a <= t);
            let (lo, hi) = ((j + n - 1) % n, j % n);
            let (mut a0, mut a1) = (angles[lo], angles[hi]);
            if j == 0 {
                a0 -= TAU;
            }
            if j == n {
                a1 += TAU;
            }
            let s = if a1 > a0 { (t - a0) / (a1 - a0) } else { 0.0 };
            (1.0 - s) * src_field[ring[lo]] + s * src_field[ring[hi]]
        })
        .collect();
    Ok(BoundaryTrace { vertices, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_cavity_mesh, generate_disk_mesh, CavitySpec};

    #[test]
    fn identity_on_same_mesh() {
        let mesh = generate_disk_mesh(1.0, 0.1).unwrap();
        let f: Vec<f64> = mesh.vertices().iter().map(|p| p[0] * p[0] - p[1]).collect();
        let tr = boundary_trace_interpolate(&mesh, &f, &mesh).unwrap();
        for (&i, &x) in tr.vertices.iter().zip(&tr.values) {
            assert!((x - f[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_are_preserved() {
        let src = generate_disk_mesh(1.0, 0.05).unwrap();
        let dst = generate_disk_mesh(1.0, 0.13).unwrap();
        let f = vec![2.5; src.n_vertices()];
        let tr = boundary_trace_interpolate(&src, &f, &dst).unwrap();
        assert!(tr.values.iter().all(|&x| (x - 2.5).abs() < 1e-14));
        assert_eq!(tr.vertices.len(), dst.outer_vertices_by_angle().len());
    }

    #[test]
    fn sine_trace_converges_quadratically() {
        let dst = generate_disk_mesh(1.0, 0.1).unwrap();
        let err = |h: f64| {
            let src =
                generate_cavity_mesh(1.0, &CavitySpec::disk([0.0, 0.0], 0.3), h, 0.1).unwrap();
            let f: Vec<f64> = src
                .vertices()
                .iter()
                .map(|p| polar_angle(*p).sin())
                .collect();
            let tr = boundary_trace_interpolate(&src, &f, &dst).unwrap();
            tr.vertices
                .iter()
                .zip(&tr.values)
                .map(|(&i, &x)| (x - polar_angle(dst.vertices()[i]).sin()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.04), err(0.02));
        assert!(e1 < 0.04 * 0.04, "error {e1}");
        assert!(e2 < 0.35 * e1, "errors {e1} {e2}");
    }

    #[test]
    fn radius_mismatch() {
        let a = generate_disk_mesh(1.0, 0.2).unwrap();
        let b = generate_disk_mesh(2.0, 0.2).unwrap();
        let f = vec![0.0; a.n_vertices()];
        assert!(matches!(
            boundary_trace_interpolate(&a, &f, &b),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn scatter_zero_off_boundary() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let f = vec![1.0; mesh.n_vertices()];
        let tr = boundary_trace_interpolate(&mesh, &f, &mesh).unwrap();
        let full = tr.scatter(mesh.n_vertices());
        assert_eq!(full.iter().sum::<f64>(), tr.vertices.len() as f64);
    }
}
