//! Level sets of P1 fields by marching triangles.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{dist, edge_key, Mesh, Point};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polyline {
    pub points: Vec<Point>,
    /// When set, the last point connects back to the first (which is not repeated).
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let n = self.points.len();
        let open: f64 = self.points.windows(2).map(|w| dist(w[0], w[1])).sum();
        if self.closed && n > 1 {
            open + dist(self.points[n - 1], self.points[0])
        } else {
            open
        }
    }

    /// Consecutive point pairs, including the closing one.
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.points.len();
        let extra = if self.closed && n > 1 {
            n
        } else {
            n.saturating_sub(1)
        };
        (0..extra).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }
}

/// Total length of a set of polylines.
pub fn contour_length(lines: &[Polyline]) -> f64 {
    lines.iter().map(Polyline::length).fold(0.0, |a, b| a + b)
}

/// The `level` set of the P1 field `v`. Vertices with `v == level` count as above
/// the level, so every crossing lies strictly inside an edge.
pub fn extract_contour(mesh: &Mesh, v: &[f64], level: f64) -> Result<Vec<Polyline>> {
    if v.len() != mesh.n_vertices() {
        return Err(Error::validation(format!(
            "field has {} values, mesh has {} vertices",
            v.len(),
            mesh.n_vertices()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation(format!(
            "contour level {level} not in (0, 1)"
        )));
    }
    let pts = mesh.vertices();
    let above = |i: usize| v[i] >= level;
    let crossing = |a: usize, b: usize| -> Point {
        // fixed orientation so both neighbours compute the same point
        let (a, b) = edge_key(a, b);
        let t = (level - v[a]) / (v[b] - v[a]);
        [
            pts[a][0] + t * (pts[b][0] - pts[a][0]),
            pts[a][1] + t * (pts[b][1] - pts[a][1]),
        ]
    };

    let mut points: Vec<Point> = Vec::new();
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut adjacency: Vec<Vec<usize>> = Vec::new();
    let mut node =
        |a: usize, b: usize, points: &mut Vec<Point>, adjacency: &mut Vec<Vec<usize>>| -> usize {
            *index.entry(edge_key(a, b)).or_insert_with(|| {
                points.push(crossing(a, b));
                adjacency.push(Vec::new());
                points.len() - 1
            })
        };
    for t in mesh.triangles() {
        let cut: Vec<(usize, usize)> = [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
            .into_iter()
            .filter(|&(a, b)| above(a) != above(b))
            .collect();
        if cut.len() == 2 {
            let p = node(cut[0].0, cut[0].1, &mut points, &mut adjacency);
            let q = node(cut[1].0, cut[1].1, &mut points, &mut adjacency);
            adjacency[p].push(q);
            adjacency[q].push(p);
        }
    }

    // chain: start from open ends first, then the remaining cycles
    let mut used = vec![false; points.len()];
    let mut lines = Vec::new();
    let starts: Vec<usize> = (0..points.len())
        .filter(|&i| adjacency[i].len() == 1)
        .chain(0..points.len())
        .collect();
    for s in starts {
        if used[s] || adjacency[s].is_empty() {
            continue;
        }
        let mut chain = vec![s];
        used[s] = true;
        let mut cur = s;
        while let Some(&next) = adjacency[cur].iter().find(|&&n| !used[n]) {
            used[next] = true;
            chain.push(next);
            cur = next;
        }
        let closed = chain.len() > 2 && adjacency[cur].contains(&s);
        lines.push(Polyline {
            points: chain.into_iter().map(|i| points[i]).collect(),
            closed,
        });
    }
    Ok(lines)
}
