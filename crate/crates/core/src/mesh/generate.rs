//! Disk and holed-disk mesh generation.
//!
//! Points are laid out on concentric rings of spacing ≈ `target_h` (each ring
//! holds ≈ `2πr / target_h` equally spaced points, alternate rings rotated by
//! half a step) and triangulated by a constrained Delaunay triangulation whose
//! constraints are the outer boundary polygon and the cavity boundary polygons.
//! With this layout every element diameter stays below
//! [`MESH_SIZE_CONSTANT`]` * target_h`.

use std::f64::consts::TAU;

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::cavity::{point_segment_distance as segment_distance, polygon_contains};
use super::{BoundaryMarker, CavitySpec, Mesh, Point};
use crate::error::{Error, Result};

/// Upper bound of `max diameter / target_h` for generated meshes.
pub const MESH_SIZE_CONSTANT: f64 = 2.0;

/// Default cap on the number of generated vertices.
pub const DEFAULT_VERTEX_CAP: usize = 2_000_000;

/// Interior points closer than this fraction of `target_h` to a cavity boundary are dropped.
const CAVITY_CLEARANCE: f64 = 0.7;

fn check_sizes(radius: f64, target_h: f64, cap: usize) -> Result<()> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::validation(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if !(target_h > 0.0) || !target_h.is_finite() {
        return Err(Error::validation(format!(
            "target_h must be positive, got {target_h}"
        )));
    }
    // ring layout: about one point per (√3/2) h² of area
    let estimate = std::f64::consts::PI * radius * radius / (0.8 * target_h * target_h);
    if estimate > cap as f64 {
        return Err(Error::Resource(format!(
            "target_h = {target_h:e} would need about {estimate:.0} vertices (cap {cap})"
        )));
    }
    Ok(())
}

/// Ring points of the disk: the boundary ring first, then inner rings, then the center.
/// Returns the points and the number of boundary points.
fn ring_points(radius: f64, target_h: f64) -> (Vec<Point>, usize) {
    let rings = ((radius / target_h).round() as usize).max(1);
    let mut pts = Vec::new();
    let mut n_boundary = 0;
    for j in 0..rings {
        let r = radius * (rings - j) as f64 / rings as f64;
        let n = ((TAU * r / target_h).round() as usize).max(6);
        let offset = if j % 2 == 1 { 0.5 } else { 0.0 };
        for k in 0..n {
            let t = TAU * (k as f64 + offset) / n as f64;
            pts.push([r * t.cos(), r * t.sin()]);
        }
        if j == 0 {
            n_boundary = n;
        }
    }
    pts.push([0.0, 0.0]);
    (pts, n_boundary)
}

fn loop_edges(start: usize, len: usize) -> impl Iterator<Item = [usize; 2]> {
    (0..len).map(move |k| [start + k, start + (k + 1) % len])
}

fn triangulate(points: &[Point], constraints: Vec<[usize; 2]>) -> Result<Vec<[usize; 3]>> {
    let verts: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::bulk_load_cdt(verts, constraints)
            .map_err(|e| Error::validation(format!("triangulation failed: {e:?}")))?;
    if cdt.num_vertices() != points.len() {
        return Err(Error::validation("duplicate points in mesh generation"));
    }
    Ok(cdt
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.fix().index()))
        .collect())
}

/// Conforming triangulation of the disk of radius `radius` centered at the origin.
pub fn generate_disk_mesh(radius: f64, target_h: f64) -> Result<Mesh> {
    generate_disk_mesh_capped(radius, target_h, DEFAULT_VERTEX_CAP)
}

pub fn generate_disk_mesh_capped(radius: f64, target_h: f64, vertex_cap: usize) -> Result<Mesh> {
    check_sizes(radius, target_h, vertex_cap)?;
    let (points, n_boundary) = ring_points(radius, target_h);
    let triangles = triangulate(&points, loop_edges(0, n_boundary).collect())?;
    Mesh::from_triangles(points, triangles, Some(radius), |_| BoundaryMarker::Outer)
}

/// Triangulation of the disk minus the cavity. Hole edges are marked CAVITY.
/// The cavity must keep `2 d0` from the outer circle and components must be `d0` apart.
pub fn generate_cavity_mesh(
    radius: f64,
    cavity: &CavitySpec,
    target_h: f64,
    d0: f64,
) -> Result<Mesh> {
    check_sizes(radius, target_h, DEFAULT_VERTEX_CAP)?;
    cavity.validate(radius, d0)?;
    if cavity.is_empty() {
        return generate_disk_mesh(radius, target_h);
    }

    let (rings, n_boundary) = ring_points(radius, target_h);
    let mut points: Vec<Point> = rings[..n_boundary].to_vec();
    let mut constraints: Vec<[usize; 2]> = loop_edges(0, n_boundary).collect();

    let holes: Vec<Vec<Point>> = cavity
        .components
        .iter()
        .map(|c| c.boundary_polyline(target_h))
        .collect();
    for hole in &holes {
        let start = points.len();
        points.extend_from_slice(hole);
        constraints.extend(loop_edges(start, hole.len()));
    }

    let clearance = CAVITY_CLEARANCE * target_h;
    points.extend(rings[n_boundary..].iter().copied().filter(|&p| {
        !cavity.contains(p)
            && holes.iter().all(|hole| {
                let n = hole.len();
                (0..n).all(|i| segment_distance(p, hole[i], hole[(i + 1) % n]) >= clearance)
            })
    }));

    let triangles: Vec<[usize; 3]> = triangulate(&points, constraints)?
        .into_iter()
        .filter(|t| {
            let c = [
                (points[t[0]][0] + points[t[1]][0] + points[t[2]][0]) / 3.0,
                (points[t[0]][1] + points[t[1]][1] + points[t[2]][1]) / 3.0,
            ];
            !holes.iter().any(|hole| polygon_contains(hole, c))
        })
        .collect();

    let (points, triangles) = compact(points, triangles);
    let is_hole_vertex = |p: Point| p[0].hypot(p[1]) < radius * (1.0 - 1e-12);
    let pts = points.clone();
    Mesh::from_triangles(points, triangles, Some(radius), |[a, b]| {
        if is_hole_vertex(pts[a]) && is_hole_vertex(pts[b]) {
            BoundaryMarker::Cavity
        } else {
            BoundaryMarker::Outer
        }
    })
}

/// Drops unreferenced points and renumbers triangles, preserving point order.
fn compact(points: Vec<Point>, triangles: Vec<[usize; 3]>) -> (Vec<Point>, Vec<[usize; 3]>) {
    let mut used = vec![false; points.len()];
    for t in &triangles {
        for &i in t {
            used[i] = true;
        }
    }
    let mut map = vec![usize::MAX; points.len()];
    let mut kept = Vec::with_capacity(points.len());
    for (i, p) in points.into_iter().enumerate() {
        if used[i] {
            map[i] = kept.len();
            kept.push(p);
        }
    }
    let triangles = triangles.into_iter().map(|t| t.map(|i| map[i])).collect();
    (kept, triangles)
}
