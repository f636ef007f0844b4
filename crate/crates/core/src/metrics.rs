//! Reconstruction quality against a known cavity.
//!
//! The reconstructed cavity is `{v < 0.5}`. Areas are exact for the P1 field: every
//! triangle is clipped by the linear level set, and the pieces are intersected
//! exactly with disks and polygons.

use serde::Serialize;

use crate::contour::{contour_length, extract_contour, Polyline};
use crate::error::{Error, Result};
use crate::mesh::{point_segment_distance, CavityComponent, CavitySpec, Mesh, Point};

pub const DEFAULT_ETA_DIAG: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// `|D_rec △ D_true|`.
    pub symmetric_difference: f64,
    /// `|D_rec △ D_true| / |D_true|`; absent for an empty truth.
    pub symmetric_difference_ratio: Option<f64>,
    /// Hausdorff distance between the 0.5 contour and the true boundary; absent
    /// when either is empty.
    pub hausdorff: Option<f64>,
    pub reconstructed_area: f64,
    pub true_area: f64,
    pub contour_length: f64,
    pub contour_pieces: usize,
    pub eta_diag: f64,
    pub epsilon: f64,
    /// Area of `{η < v < 1 − η}`.
    pub band_area: f64,
    /// `band_area / |Ω_h|`.
    pub band_fraction: f64,
    /// `band_area / (ε · contour_length)`.
    pub band_ratio: Option<f64>,
}

fn shoelace(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
        / 2.0
}

/// Part of triangle `p` where the linear interpolant of `f` is below `level`.
fn clip_below(p: [Point; 3], f: [f64; 3], level: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let j = (i + 1) % 3;
        let (a, b) = (f[i] - level, f[j] - level);
        if a < 0.0 {
            out.push(p[i]);
        }
        if (a < 0.0) != (b < 0.0) {
            let t = a / (a - b);
            out.push([
                p[i][0] + t * (p[j][0] - p[i][0]),
                p[i][1] + t * (p[j][1] - p[i][1]),
            ]);
        }
    }
    out
}

/// Signed area of the disk of radius `r` at the origin intersected with the triangle `(0, a, b)`.
fn disk_triangle_area(r: f64, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let qa = d[0] * d[0] + d[1] * d[1];
    let qb = 2.0 * (a[0] * d[0] + a[1] * d[1]);
    let qc = a[0] * a[0] + a[1] * a[1] - r * r;
    let mut ts = vec![0.0];
    let disc = qb * qb - 4.0 * qa * qc;
    if qa > 0.0 && disc > 0.0 {
        let s = disc.sqrt();
        for t in [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)] {
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }
    ts.push(1.0);
    let at = |t: f64| [a[0] + t * d[0], a[1] + t * d[1]];
    ts.windows(2)
        .map(|w| {
            let (p, q) = (at(w[0]), at(w[1]));
            let m = at(0.5 * (w[0] + w[1]));
            let cross = p[0] * q[1] - p[1] * q[0];
            if m[0] * m[0] + m[1] * m[1] <= r * r {
                cross / 2.0
            } else {
                let dot = p[0] * q[0] + p[1] * q[1];
                r * r * cross.atan2(dot) / 2.0
            }
        })
        .sum()
}

/// Clips `subject` by the convex polygon `clip` (counter-clockwise).
fn clip_polygon(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let side = |p: Point| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut out);
        let m = input.len();
        for k in 0..m {
            let (p, q) = (input[k], input[(k + 1) % m]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

fn intersection_area(piece: &[Point], cavity: &CavitySpec) -> f64 {
    let mut piece = piece.to_vec();
    if shoelace(&piece) < 0.0 {
        piece.reverse();
    }
    cavity
        .components
        .iter()
        .map(|c| match c {
            CavityComponent::Disk { center, radius } => {
                let n = piece.len();
                (0..n)
                    .map(|i| {
                        let a = [piece[i][0] - center[0], piece[i][1] - center[1]];
                        let j = (i + 1) % n;
                        let b = [piece[j][0] - center[0], piece[j][1] - center[1]];
                        disk_triangle_area(*radius, a, b)
                    })
                    .sum::<f64>()
            }
            CavityComponent::Polygon { vertices } => {
                shoelace(&clip_polygon(vertices, &piece)).abs()
            }
        })
        .sum()
}

/// Area of `{v < level}` and its intersection with `cavity`.
fn sublevel_areas(mesh: &Mesh, v: &[f64], level: f64, cavity: &CavitySpec) -> (f64, f64) {
    let mut area = 0.0;
    let mut inter = 0.0;
    for (k, t) in mesh.triangles().iter().enumerate() {
        let piece = clip_below(mesh.triangle_points(k), [v[t[0]], v[t[1]], v[t[2]]], level);
        if piece.len() < 3 {
            continue;
        }
        area += shoelace(&piece).abs();
        if !cavity.is_empty() {
            inter += intersection_area(&piece, cavity);
        }
    }
    (area, inter)
}

/// `|{v < level}|` for a P1 field.
pub fn sublevel_area(mesh: &Mesh, v: &[f64], level: f64) -> f64 {
    sublevel_areas(mesh, v, level, &CavitySpec::empty()).0
}

/// Hausdorff distance between polylines and the boundary of `truth`.
pub fn hausdorff_to_boundary(lines: &[Polyline], truth: &CavitySpec, spacing: f64) -> Option<f64> {
    if lines.iter().all(|l| l.points.is_empty()) || truth.is_empty() {
        return None;
    }
    // contour → truth: the distance to the boundary is |signed distance|, exact;
    // sample the segments so that interior points of long segments count too
    let mut forward = 0.0f64;
    for l in lines {
        for (a, b) in l.segments().chain(l.points.first().map(|&p| (p, p))) {
            let n = ((crate::mesh::dist(a, b) / spacing).ceil() as usize).max(1);
            for i in 0..=n {
                let t = i as f64 / n as f64;
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                forward = forward.max(truth.signed_distance(p).abs());
            }
        }
    }
    let backward = truth
        .boundary_samples(spacing)
        .into_iter()
        .map(|q| {
            lines
                .iter()
                .flat_map(|l| l.segments().chain(l.points.first().map(|&p| (p, p))))
                .map(|(a, b)| point_segment_distance(q, a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max);
    Some(forward.max(backward))
}

/// All reconstruction metrics for the field `v`.
pub fn compute_metrics(
    mesh: &Mesh,
    v: &[f64],
    truth: &CavitySpec,
    epsilon: f64,
    eta_diag: f64,
) -> Result<Metrics> {
    if v.len() != mesh.n_vertices() {
        return Err(Error::validation("field length does not match the mesh"));
    }
    if !(eta_diag > 0.0 && eta_diag < 0.5) {
        return Err(Error::validation(format!(
            "eta_diag = {eta_diag} not in (0, 0.5)"
        )));
    }
    let (rec, inter) = sublevel_areas(mesh, v, 0.5, truth);
    let true_area = truth.area();
    let symmetric_difference = (rec + true_area - 2.0 * inter).max(0.0);
    let lines = extract_contour(mesh, v, 0.5)?;
    let length = contour_length(&lines);
    let band_area =
        (sublevel_area(mesh, v, 1.0 - eta_diag) - sublevel_area(mesh, v, eta_diag)).max(0.0);
    let spacing = mesh.min_diameter().max(1e-3) / 4.0;
    Ok(Metrics {
        symmetric_difference,
        symmetric_difference_ratio: (true_area > 0.0).then(|| symmetric_difference / true_area),
        hausdorff: hausdorff_to_boundary(&lines, truth, spacing),
        reconstructed_area: rec,
        true_area,
        contour_length: length,
        contour_pieces: lines.len(),
        eta_diag,
        epsilon,
        band_area,
        band_fraction: band_area / mesh.total_area(),
        band_ratio: (length > 0.0 && epsilon > 0.0).then(|| band_area / (epsilon * length)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn disk_triangle_oracle() {
        // full sector of a quarter disk by one triangle: points far outside
        let r = 0.5;
        let a = disk_triangle_area(r, [10.0, 0.0], [0.0, 10.0]);
        assert_relative_eq!(a, PI * r * r / 4.0, max_relative = 1e-12);
        // triangle fully inside
        assert_relative_eq!(
            disk_triangle_area(1.0, [0.1, 0.0], [0.0, 0.1]),
            0.005,
            max_relative = 1e-12
        );
        // a square around the origin covers the whole disk
        let sq = [[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]];
        let total: f64 = (0..4)
            .map(|i| disk_triangle_area(r, sq[i], sq[(i + 1) % 4]))
            .sum();
        assert_relative_eq!(total, PI * r * r, max_relative = 1e-12);
        // half plane x > 0 of the disk, via the square [0, 2] × [-2, 2]
        let hs = [[0.0, -2.0], [2.0, -2.0], [2.0, 2.0], [0.0, 2.0]];
        let half: f64 = (0..4)
            .map(|i| disk_triangle_area(r, hs[i], hs[(i + 1) % 4]))
            .sum();
        assert_relative_eq!(half, PI * r * r / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn polygon_clipping() {
        let sq = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let tri = vec![[0.5, -1.0], [2.0, 0.5], [0.5, 0.5]];
        // compare against a sampling estimate
        let exact = shoelace(&clip_polygon(&sq, &tri)).abs();
        let n = 1000;
        let mut count = 0;
        for i in 0..n {
            for j in 0..n {
                let p = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                let inside = (0..3).all(|k| {
                    let (a, b) = (tri[k], tri[(k + 1) % 3]);
                    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
                });
                count += inside as usize;
            }
        }
        assert!((exact - count as f64 / (n * n) as f64).abs() < 2e-3);
    }

    fn sharp(mesh: &Mesh, r: f64) -> Vec<f64> {
        mesh.vertices()
            .iter()
            .map(|p| if p[0].hypot(p[1]) < r { 0.0 } else { 1.0 })
            .collect()
    }

    #[test]
    fn annulus_oracle() {
        // truth r = 0.3, reconstruction a signed-distance ramp with 0.5-level at r = 0.33
        let mesh = generate_disk_mesh(1.0, 0.01).unwrap();
        let v: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| 0.5 + (p[0].hypot(p[1]) - 0.33))
            .collect();
        let m = compute_metrics(&mesh, &v, &CavitySpec::disk([0.0, 0.0], 0.3), 0.01, 0.1).unwrap();
        let expected = PI * (0.33f64.powi(2) - 0.09);
        assert!(
            (m.symmetric_difference - expected).abs() < 1e-3,
            "{}",
            m.symmetric_difference
        );
        assert!((m.symmetric_difference_ratio.unwrap() - 0.21).abs() < 0.01);
        assert!((m.hausdorff.unwrap() - 0.03).abs() < 1e-3);
    }

    #[test]
    fn nothing_reconstructed() {
        let mesh = generate_disk_mesh(1.0, 0.05).unwrap();
        let m = compute_metrics(
            &mesh,
            &vec![1.0; mesh.n_vertices()],
            &CavitySpec::disk([0.0, 0.0], 0.3),
            0.01,
            0.1,
        )
        .unwrap();
        assert_relative_eq!(
            m.symmetric_difference_ratio.unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_eq!(m.hausdorff, None);
        assert_eq!(m.band_area, 0.0);
    }

    #[test]
    fn sharp_interpolant_is_within_mesh_band() {
        for h in [0.04, 0.02] {
            let mesh = generate_disk_mesh(1.0, h).unwrap();
            let m = compute_metrics(
                &mesh,
                &sharp(&mesh, 0.3),
                &CavitySpec::disk([0.0, 0.0], 0.3),
                0.01,
                0.1,
            )
            .unwrap();
            // band of width h around the circle
            assert!(
                m.symmetric_difference <= 2.0 * PI * 0.3 * h,
                "h {h}: {}",
                m.symmetric_difference
            );
            assert!(m.hausdorff.unwrap() <= h);
        }
    }

    #[test]
    fn polygon_truth() {
        let mesh = generate_disk_mesh(1.0, 0.02).unwrap();
        let s = 0.25;
        let truth = CavitySpec::polygon(vec![[-s, -s], [s, -s], [s, s], [-s, s]]);
        let v: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| 0.5 + (p[0].abs().max(p[1].abs()) - s))
            .collect();
        let m = compute_metrics(&mesh, &v, &truth, 0.01, 0.1).unwrap();
        assert!(m.symmetric_difference < 0.01, "{}", m.symmetric_difference);
        assert!(m.hausdorff.unwrap() < 0.02);
    }

    #[test]
    fn band_area_of_ramp() {
        // v = r on the unit disk: {0.1 < v < 0.9} is an annulus
        let mesh = generate_disk_mesh(1.0, 0.01).unwrap();
        let v: Vec<f64> = mesh.vertices().iter().map(|p| p[0].hypot(p[1])).collect();
        let m = compute_metrics(&mesh, &v, &CavitySpec::empty(), 0.1, 0.1).unwrap();
        assert!((m.band_area - PI * (0.81 - 0.01)).abs() < 5e-3);
        assert_eq!(m.symmetric_difference_ratio, None);
    }
}
