use super::{Mesh, H_MIN};
use crate::error::{Error, Result};

/// Magnitude of the constant P1 gradient of `v` on each element.
pub fn element_gradient_norms(mesh: &Mesh, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != mesh.n_vertices() {
        return Err(Error::validation(format!(
            "field has {} values, mesh has {} vertices",
            v.len(),
            mesh.n_vertices()
        )));
    }
    Ok(mesh
        .triangles()
        .iter()
        .zip(mesh.element_areas())
        .map(|(t, &area)| {
            let [a, b, c] = t.map(|i| mesh.vertices()[i]);
            let [va, vb, vc] = t.map(|i| v[i]);
            // differences keep the gradient of a constant field exactly zero
            let (d1, d2) = (vb - va, vc - va);
            let gx = d1 * (c[1] - a[1]) - d2 * (b[1] - a[1]);
            let gy = d2 * (b[0] - a[0]) - d1 * (c[0] - a[0]);
            gx.hypot(gy) / (2.0 * area)
        })
        .collect())
}

/// Elements whose gradient magnitude reaches the `(1 - fraction)` quantile.
pub fn mark_by_gradient(mesh: &Mesh, v: &[f64], fraction: f64) -> Result<Vec<usize>> {
    mark_by_gradient_with(mesh, v, fraction, H_MIN)
}

/// As [`mark_by_gradient`], with an explicit minimum size. Elements with zero gradient
/// are never marked, and neither are elements too small to be bisected again
/// (diameter below `2 h_min`).
pub fn mark_by_gradient_with(
    mesh: &Mesh,
    v: &[f64],
    fraction: f64,
    h_min: f64,
) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::validation(format!(
            "marking fraction {fraction} not in (0, 1]"
        )));
    }
    let norms = element_gradient_norms(mesh, v)?;
    if norms.iter().any(|g| !g.is_finite()) {
        return Err(Error::validation("field has non-finite values"));
    }
    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (((1.0 - fraction) * n as f64).ceil() as usize).min(n - 1);
    let threshold = sorted[rank];
    Ok(norms
        .iter()
        .enumerate()
        .filter(|&(k, &g)| g > 0.0 && g >= threshold && mesh.element_diameters()[k] >= 2.0 * h_min)
        .map(|(k, _)| k)
        .collect())
}
