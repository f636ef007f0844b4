//! Longest-edge bisection with conformity closure.
//!
//! Each marked element flags its longest edge. The closure loop then flags the
//! longest edge of every element that owns a flagged edge, until no element
//! has a flagged edge without its longest edge also being flagged. Every
//! element is finally split by recursive bisection: first across its longest
//! edge, then each child across whichever of its original edges is flagged.
//! Because both owners of a flagged edge split it at the same midpoint, the
//! result is conforming. Midpoints of OUTER edges are projected back onto the
//! outer circle when the mesh records its radius.
//!
//! Elements whose diameter is below `2 h_min` are never flagged, so every split
//! edge has length at least `2 h_min` and no child is smaller than `h_min`.

use std::collections::HashMap;

use super::{dist, edge_key, BoundaryMarker, Mesh, Point, H_MIN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub h_min: f64,
    pub vertex_cap: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            h_min: H_MIN,
            vertex_cap: super::DEFAULT_VERTEX_CAP,
        }
    }
}

/// Refines the marked elements and interpolates each nodal field linearly onto the new vertices.
pub fn refine_marked(
    mesh: &Mesh,
    marked: &[usize],
    fields: &[&[f64]],
) -> Result<(Mesh, Vec<Vec<f64>>)> {
    refine_marked_with(mesh, marked, fields, &RefineOptions::default())
}

struct EdgeTable {
    index: HashMap<(usize, usize), usize>,
    edges: Vec<(usize, usize)>,
    owners: Vec<Vec<usize>>,
}

impl EdgeTable {
    fn new(triangles: &[[usize; 3]]) -> Self {
        let mut index = HashMap::with_capacity(triangles.len() * 2);
        let mut edges = Vec::new();
        let mut owners: Vec<Vec<usize>> = Vec::new();
        for (k, t) in triangles.iter().enumerate() {
            for i in 0..3 {
                let key = edge_key(t[i], t[(i + 1) % 3]);
                let id = *index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    owners.push(Vec::with_capacity(2));
                    edges.len() - 1
                });
                owners[id].push(k);
            }
        }
        EdgeTable {
            index,
            edges,
            owners,
        }
    }

    fn id(&self, a: usize, b: usize) -> Option<usize> {
        self.index.get(&edge_key(a, b)).copied()
    }
}

fn edge_len(points: &[Point], e: (usize, usize)) -> f64 {
    dist(points[e.0], points[e.1])
}

/// Longest edge of `t` with ties broken by the smaller edge id.
fn longest_edge(points: &[Point], table: &EdgeTable, t: &[usize; 3]) -> usize {
    (0..3)
        .map(|i| {
            table
                .id(t[i], t[(i + 1) % 3])
                .expect("edge of a mesh triangle")
        })
        .max_by(|&a, &b| {
            edge_len(points, table.edges[a])
                .total_cmp(&edge_len(points, table.edges[b]))
                .then(b.cmp(&a))
        })
        .expect("triangle has three edges")
}

pub fn refine_marked_with(
    mesh: &Mesh,
    marked: &[usize],
    fields: &[&[f64]],
    opts: &RefineOptions,
) -> Result<(Mesh, Vec<Vec<f64>>)> {
    let nv = mesh.n_vertices();
    for (i, f) in fields.iter().enumerate() {
        if f.len() != nv {
            return Err(Error::validation(format!(
                "field {i} has {} values, mesh has {nv} vertices",
                f.len()
            )));
        }
    }
    if let Some(&k) = marked.iter().find(|&&k| k >= mesh.n_triangles()) {
        return Err(Error::validation(format!(
            "marked element {k} does not exist"
        )));
    }

    let points = mesh.vertices();
    let triangles = mesh.triangles();
    let table = EdgeTable::new(triangles);
    let longest: Vec<usize> = triangles
        .iter()
        .map(|t| longest_edge(points, &table, t))
        .collect();

    let mut flagged = vec![false; table.edges.len()];
    let mut queue: Vec<usize> = Vec::new();
    for &k in marked {
        if mesh.element_diameters()[k] >= 2.0 * opts.h_min && !flagged[longest[k]] {
            flagged[longest[k]] = true;
            queue.push(longest[k]);
        }
    }
    // closure: an element owning a flagged edge must have its longest edge flagged too
    while let Some(e) = queue.pop() {
        for &k in &table.owners[e] {
            let l = longest[k];
            if !flagged[l] {
                flagged[l] = true;
                queue.push(l);
            }
        }
    }

    let n_new = flagged.iter().filter(|&&f| f).count();
    if nv + n_new > opts.vertex_cap {
        return Err(Error::Resource(format!(
            "refinement would create {} vertices (cap {})",
            nv + n_new,
            opts.vertex_cap
        )));
    }
    if n_new == 0 {
        return Ok((mesh.clone(), fields.iter().map(|f| f.to_vec()).collect()));
    }

    let outer_edges: HashMap<(usize, usize), BoundaryMarker> = mesh
        .boundary_edges()
        .iter()
        .map(|e| (edge_key(e.vertices[0], e.vertices[1]), e.marker))
        .collect();

    let mut new_points = points.to_vec();
    let mut new_fields: Vec<Vec<f64>> = fields.iter().map(|f| f.to_vec()).collect();
    let mut midpoint = vec![usize::MAX; table.edges.len()];
    // for each new vertex, the edge it splits
    let mut parent_edge: HashMap<usize, (usize, usize)> = HashMap::with_capacity(n_new);
    for (id, &(a, b)) in table.edges.iter().enumerate() {
        if !flagged[id] {
            continue;
        }
        let (pa, pb) = (points[a], points[b]);
        let mut m = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        if let (Some(BoundaryMarker::Outer), Some(r)) =
            (outer_edges.get(&(a, b)), mesh.outer_radius())
        {
            let norm = m[0].hypot(m[1]);
            m = [m[0] * r / norm, m[1] * r / norm];
        }
        midpoint[id] = new_points.len();
        parent_edge.insert(new_points.len(), (a, b));
        new_points.push(m);
        for f in new_fields.iter_mut() {
            let value = 0.5 * (f[a] + f[b]);
            f.push(value);
        }
    }

    let mut new_triangles = Vec::with_capacity(triangles.len() + 3 * n_new);
    for t in triangles {
        split(
            *t,
            &new_points,
            &table,
            &flagged,
            &midpoint,
            &mut new_triangles,
        );
    }

    // a boundary child edge is either an original edge or half of one
    let classify = |[a, b]: [usize; 2]| -> BoundaryMarker {
        let key = match (parent_edge.get(&a), parent_edge.get(&b)) {
            (Some(&e), _) | (_, Some(&e)) => e,
            (None, None) => edge_key(a, b),
        };
        outer_edges
            .get(&key)
            .copied()
            .unwrap_or(BoundaryMarker::Outer)
    };
    let refined = Mesh::from_triangles(new_points, new_triangles, mesh.outer_radius(), classify)?;
    Ok((refined, new_fields))
}

/// Recursively bisects `t` across its flagged original edges, longest first.
fn split(
    t: [usize; 3],
    points: &[Point],
    table: &EdgeTable,
    flagged: &[bool],
    midpoint: &[usize],
    out: &mut Vec<[usize; 3]>,
) {
    // local index i denotes the edge opposite vertex i
    let pick = (0..3)
        .filter_map(|i| {
            let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
            table.id(a, b).filter(|&id| flagged[id]).map(|id| (i, id))
        })
        .max_by(|&(_, x), &(_, y)| {
            edge_len(points, table.edges[x])
                .total_cmp(&edge_len(points, table.edges[y]))
                .then(y.cmp(&x))
        });
    match pick {
        None => out.push(t),
        Some((i, id)) => {
            let q = midpoint[id];
            let (p0, p1, p2) = (t[i], t[(i + 1) % 3], t[(i + 2) % 3]);
            split([p0, p1, q], points, table, flagged, midpoint, out);
            split([p0, q, p2], points, table, flagged, midpoint, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{edge_triangle_map, generate_disk_mesh, polar_angle};
    use proptest::prelude::*;

    fn assert_conforming(mesh: &Mesh) {
        let map = edge_triangle_map(mesh.triangles()).unwrap();
        assert_eq!(
            map.values().filter(|t| t.len() == 1).count(),
            mesh.boundary_edges().len()
        );
        for e in mesh.boundary_edges() {
            if e.marker == BoundaryMarker::Outer {
                for &v in &e.vertices {
                    let p = mesh.vertices()[v];
                    assert!(
                        (p[0].hypot(p[1]) - 1.0).abs() < 1e-12,
                        "hanging boundary vertex"
                    );
                }
            }
        }
    }

    fn square_mesh() -> Mesh {
        Mesh::from_triangles(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
            |_| BoundaryMarker::Outer,
        )
        .unwrap()
    }

    #[test]
    fn empty_marking_is_identity() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let f: Vec<f64> = mesh.vertices().iter().map(|p| p[0]).collect();
        let (m2, fs) = refine_marked(&mesh, &[], &[&f]).unwrap();
        assert_eq!(m2, mesh);
        assert_eq!(fs[0], f);
    }

    #[test]
    fn all_marked_at_least_doubles() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let all: Vec<usize> = (0..mesh.n_triangles()).collect();
        let (m2, _) = refine_marked(&mesh, &all, &[]).unwrap();
        assert!(m2.n_triangles() >= 2 * mesh.n_triangles());
        assert_conforming(&m2);
    }

    #[test]
    fn linear_field_is_reproduced_in_the_interior() {
        let mesh = square_mesh();
        let f: Vec<f64> = mesh.vertices().iter().map(|p| p[0] + p[1]).collect();
        let mut cur = (mesh, f);
        for _ in 0..4 {
            let all: Vec<usize> = (0..cur.0.n_triangles()).collect();
            let (m, fs) = refine_marked(&cur.0, &all, &[&cur.1]).unwrap();
            cur = (m, fs.into_iter().next().unwrap());
        }
        for (p, v) in cur.0.vertices().iter().zip(&cur.1) {
            assert!((p[0] + p[1] - v).abs() < 1e-14);
        }
        assert!((cur.0.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn linear_field_exact_off_the_curved_boundary() {
        let mesh = generate_disk_mesh(1.0, 0.15).unwrap();
        let f: Vec<f64> = mesh.vertices().iter().map(|p| p[0] + p[1]).collect();
        let marked: Vec<usize> = (0..mesh.n_triangles()).filter(|k| k % 3 == 0).collect();
        let (m2, fs) = refine_marked(&mesh, &marked, &[&f]).unwrap();
        assert_conforming(&m2);
        for (i, p) in m2.vertices().iter().enumerate() {
            if (p[0].hypot(p[1]) - 1.0).abs() > 1e-12 {
                assert!((p[0] + p[1] - fs[0][i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn boundary_midpoints_are_projected() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        // outer edges are rarely the longest edge of their element, so it takes a few rounds
        let mut m2 = mesh.clone();
        for _ in 0..3 {
            let all: Vec<usize> = (0..m2.n_triangles()).collect();
            m2 = refine_marked(&m2, &all, &[]).unwrap().0;
        }
        assert_conforming(&m2);
        let outer = m2.outer_vertices_by_angle();
        assert!(outer.len() > mesh.outer_vertices_by_angle().len());
        // polar angles remain strictly increasing along the boundary
        for w in outer.windows(2) {
            assert!(polar_angle(m2.vertices()[w[0]]) < polar_angle(m2.vertices()[w[1]]));
        }
    }

    #[test]
    fn h_min_is_respected() {
        let mut mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let opts = RefineOptions {
            h_min: 0.02,
            ..Default::default()
        };
        for _ in 0..12 {
            // keep hammering the same corner region
            let marked: Vec<usize> = (0..mesh.n_triangles())
                .filter(|&k| {
                    let c = mesh.centroid(k);
                    (c[0] - 0.3).hypot(c[1] - 0.1) < 0.15
                })
                .collect();
            mesh = refine_marked_with(&mesh, &marked, &[], &opts).unwrap().0;
        }
        assert!(mesh.min_diameter() >= opts.h_min);
        assert_conforming(&mesh);
        // further marking changes nothing once the region is saturated
        let all_small: Vec<usize> = (0..mesh.n_triangles())
            .filter(|&k| mesh.element_diameters()[k] < 2.0 * opts.h_min)
            .collect();
        let (again, _) = refine_marked_with(&mesh, &all_small, &[], &opts).unwrap();
        assert_eq!(again.n_triangles(), mesh.n_triangles());
    }

    #[test]
    fn vertex_cap() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let all: Vec<usize> = (0..mesh.n_triangles()).collect();
        let opts = RefineOptions {
            vertex_cap: mesh.n_vertices() + 3,
            ..Default::default()
        };
        assert!(matches!(
            refine_marked_with(&mesh, &all, &[], &opts),
            Err(Error::Resource(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn refinement_partitions_area(seed in 0u64..1000, frac in 0.05f64..0.6) {
            let mesh = generate_disk_mesh(1.0, 0.25).unwrap();
            let n = mesh.n_triangles();
            let marked: Vec<usize> = (0..n)
                .filter(|&k| ((k as u64).wrapping_mul(2654435761).wrapping_add(seed) % 1000) as f64 / 1000.0 < frac)
                .collect();
            // boundary projection adds the circular segments, so compare interior-only meshes
            let interior = Mesh::new(mesh.vertices().to_vec(), mesh.triangles().to_vec(), mesh.boundary_edges().to_vec(), None).unwrap();
            let (m2, _) = refine_marked(&interior, &marked, &[]).unwrap();
            prop_assert!((m2.total_area() - interior.total_area()).abs() < 1e-12);
            let (m3, _) = refine_marked(&mesh, &marked, &[]).unwrap();
            prop_assert!(m3.total_area() >= mesh.total_area() - 1e-12);
            prop_assert!(m3.total_area() <= std::f64::consts::PI);
        }
    }
}
