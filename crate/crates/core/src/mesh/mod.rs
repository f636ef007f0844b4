//! Conforming triangulations of the disk, with and without cavity holes.

mod cavity;
mod generate;
mod io;
mod mark;
mod refine;
mod trace;

pub(crate) use cavity::point_segment_distance;
pub use cavity::{CavityComponent, CavitySpec};
pub use generate::{
    generate_cavity_mesh, generate_disk_mesh, generate_disk_mesh_capped, DEFAULT_VERTEX_CAP,
    MESH_SIZE_CONSTANT,
};
pub use io::{read_mesh, write_mesh};
pub use mark::{element_gradient_norms, mark_by_gradient, mark_by_gradient_with};
pub use refine::{refine_marked, refine_marked_with, RefineOptions};
pub use trace::{boundary_trace_interpolate, BoundaryTrace};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Smallest element diameter produced by refinement.
pub const H_MIN: f64 = 1e-3;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryMarker {
    /// Outer boundary of the computational domain.
    Outer,
    /// Boundary of a cavity hole.
    Cavity,
}

impl BoundaryMarker {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryMarker::Outer => "OUTER",
            BoundaryMarker::Cavity => "CAVITY",
        }
    }
}

/// A boundary edge, oriented so that the domain lies to its left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: BoundaryMarker,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    diameters: Vec<f64>,
    areas: Vec<f64>,
    /// Radius of the outer circle when the outer boundary approximates one.
    outer_radius: Option<f64>,
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Maps each undirected edge to the triangles that own it.
pub(crate) fn edge_triangle_map(
    triangles: &[[usize; 3]],
) -> Result<HashMap<(usize, usize), Vec<usize>>> {
    let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(triangles.len() * 2);
    for (k, t) in triangles.iter().enumerate() {
        for i in 0..3 {
            let e = edge_key(t[(i + 1) % 3], t[(i + 2) % 3]);
            let entry = map.entry(e).or_default();
            entry.push(k);
            if entry.len() > 2 {
                return Err(Error::validation(format!(
                    "edge ({}, {}) is shared by more than two triangles",
                    e.0, e.1
                )));
            }
        }
    }
    Ok(map)
}

impl Mesh {
    /// Builds a mesh from raw parts, checking orientation and boundary consistency.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        outer_radius: Option<f64>,
    ) -> Result<Self> {
        let n = vertices.len();
        if triangles.is_empty() {
            return Err(Error::validation("mesh has no triangles"));
        }
        if vertices
            .iter()
            .any(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::validation("non-finite vertex coordinate"));
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut diameters = Vec::with_capacity(triangles.len());
        for (k, t) in triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::validation(format!(
                    "triangle {k} references a missing vertex"
                )));
            }
            let [a, b, c] = t.map(|i| vertices[i]);
            let area = signed_area(a, b, c);
            if area <= 0.0 {
                return Err(Error::validation(format!(
                    "triangle {k} has nonpositive signed area {area:e}"
                )));
            }
            areas.push(area);
            diameters.push(dist(a, b).max(dist(b, c)).max(dist(c, a)));
        }

        let edges = edge_triangle_map(&triangles)?;
        let mut single: HashMap<(usize, usize), usize> = edges
            .iter()
            .filter(|(_, ts)| ts.len() == 1)
            .map(|(&e, ts)| (e, ts[0]))
            .collect();
        if single.len() != boundary.len() {
            return Err(Error::validation(format!(
                "{} boundary edges given but the triangulation has {}",
                boundary.len(),
                single.len()
            )));
        }
        for be in &boundary {
            let [a, b] = be.vertices;
            let k = single.remove(&edge_key(a, b)).ok_or_else(|| {
                Error::validation(format!(
                    "boundary edge ({a}, {b}) is not a boundary edge of the triangulation"
                ))
            })?;
            let t = triangles[k];
            let oriented = (0..3).any(|i| t[i] == a && t[(i + 1) % 3] == b);
            if !oriented {
                return Err(Error::validation(format!(
                    "boundary edge ({a}, {b}) is not oriented with the domain on its left"
                )));
            }
        }

        Ok(Mesh {
            vertices,
            triangles,
            boundary,
            diameters,
            areas,
            outer_radius,
        })
    }

    /// Builds a mesh whose boundary edges are derived from the triangulation.
    /// `classify` receives each boundary edge (domain on the left) and returns its marker.
    pub fn from_triangles(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        outer_radius: Option<f64>,
        mut classify: impl FnMut([usize; 2]) -> BoundaryMarker,
    ) -> Result<Self> {
        let boundary = boundary_edges_of(&triangles)?
            .into_iter()
            .map(|e| BoundaryEdge {
                vertices: e,
                marker: classify(e),
            })
            .collect();
        Mesh::new(vertices, triangles, boundary, outer_radius)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn element_diameters(&self) -> &[f64] {
        &self.diameters
    }

    pub fn element_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn outer_radius(&self) -> Option<f64> {
        self.outer_radius
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn min_diameter(&self) -> f64 {
        self.diameters.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_diameter(&self) -> f64 {
        self.diameters.iter().copied().fold(0.0, f64::max)
    }

    pub fn triangle_points(&self, k: usize) -> [Point; 3] {
        self.triangles[k].map(|i| self.vertices[i])
    }

    pub fn centroid(&self, k: usize) -> Point {
        let [a, b, c] = self.triangle_points(k);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Vertices on OUTER edges, sorted by polar angle in `[0, 2π)`.
    pub fn outer_vertices_by_angle(&self) -> Vec<usize> {
        let mut verts: Vec<usize> = self
            .boundary
            .iter()
            .filter(|e| e.marker == BoundaryMarker::Outer)
            .flat_map(|e| e.vertices)
            .collect();
        verts.sort_unstable();
        verts.dedup();
        verts.sort_by(|&a, &b| {
            polar_angle(self.vertices[a])
                .total_cmp(&polar_angle(self.vertices[b]))
                .then(a.cmp(&b))
        });
        verts
    }

    /// Total length of the edges carrying `marker`.
    pub fn boundary_length(&self, marker: BoundaryMarker) -> f64 {
        self.boundary
            .iter()
            .filter(|e| e.marker == marker)
            .map(|e| dist(self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]))
            .sum()
    }
}

/// Polar angle in `[0, 2π)`.
pub fn polar_angle(p: Point) -> f64 {
    let t = p[1].atan2(p[0]);
    if t < 0.0 {
        t + std::f64::consts::TAU
    } else {
        t
    }
}

/// Edges owned by exactly one triangle, oriented counterclockwise with respect to it,
/// returned in triangle order.
pub(crate) fn boundary_edges_of(triangles: &[[usize; 3]]) -> Result<Vec<[usize; 2]>> {
    let map = edge_triangle_map(triangles)?;
    let mut out = Vec::new();
    for t in triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            if map[&edge_key(a, b)].len() == 1 {
                out.push([a, b]);
            }
        }
    }
    Ok(out)
}
