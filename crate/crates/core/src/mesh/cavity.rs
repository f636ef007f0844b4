use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{dist, Point};
use crate::error::{Error, Result};

/// One connected component of a cavity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CavityComponent {
    Disk {
        center: Point,
        radius: f64,
    },
    /// Simple polygon; either orientation is accepted.
    Polygon {
        vertices: Vec<Point>,
    },
}

/// A cavity made of finitely many disjoint components. An empty spec means no cavity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CavitySpec {
    #[serde(default)]
    pub components: Vec<CavityComponent>,
}

pub(crate) fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * dx, a[1] + t * dy])
}

/// Even-odd point in polygon test.
pub(crate) fn polygon_contains(poly: &[Point], p: Point) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn polygon_signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let orient = |a: Point, b: Point, c: Point| super::signed_area(a, b, c);
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

impl CavityComponent {
    pub fn contains(&self, p: Point) -> bool {
        match self {
            CavityComponent::Disk { center, radius } => dist(p, *center) < *radius,
            CavityComponent::Polygon { vertices } => polygon_contains(vertices, p),
        }
    }

    /// Distance to the component boundary, negative inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match self {
            CavityComponent::Disk { center, radius } => dist(p, *center) - radius,
            CavityComponent::Polygon { vertices } => {
                let n = vertices.len();
                let d = (0..n)
                    .map(|i| point_segment_distance(p, vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min);
                if polygon_contains(vertices, p) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            CavityComponent::Disk { radius, .. } => PI * radius * radius,
            CavityComponent::Polygon { vertices } => polygon_signed_area(vertices).abs(),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            CavityComponent::Disk { radius, .. } => TAU * radius,
            CavityComponent::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| dist(vertices[i], vertices[(i + 1) % n]))
                    .sum()
            }
        }
    }

    /// Largest distance of a component point from the origin.
    fn max_norm(&self) -> f64 {
        match self {
            CavityComponent::Disk { center, radius } => center[0].hypot(center[1]) + radius,
            CavityComponent::Polygon { vertices } => vertices
                .iter()
                .map(|p| p[0].hypot(p[1]))
                .fold(0.0, f64::max),
        }
    }

    /// Boundary polyline, counterclockwise, with segment length at most `h`.
    pub fn boundary_polyline(&self, h: f64) -> Vec<Point> {
        match self {
            CavityComponent::Disk { center, radius } => {
                let n = ((TAU * radius / h).ceil() as usize).max(8);
                (0..n)
                    .map(|k| {
                        let t = TAU * k as f64 / n as f64;
                        [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                    })
                    .collect()
            }
            CavityComponent::Polygon { vertices } => {
                let mut poly = vertices.clone();
                if polygon_signed_area(&poly) < 0.0 {
                    poly.reverse();
                }
                let n = poly.len();
                let mut out = Vec::new();
                for i in 0..n {
                    let (a, b) = (poly[i], poly[(i + 1) % n]);
                    let m = ((dist(a, b) / h).ceil() as usize).max(1);
                    for s in 0..m {
                        let t = s as f64 / m as f64;
                        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    }
                }
                out
            }
        }
    }

    fn validate_shape(&self) -> Result<()> {
        match self {
            CavityComponent::Disk { center, radius } => {
                if !(*radius > 0.0) || !center[0].is_finite() || !center[1].is_finite() {
                    return Err(Error::validation(
                        "disk cavity needs a finite center and positive radius",
                    ));
                }
            }
            CavityComponent::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(Error::validation(
                        "polygon cavity needs at least 3 vertices",
                    ));
                }
                if polygon_signed_area(vertices).abs() <= 0.0 {
                    return Err(Error::validation("polygon cavity is degenerate"));
                }
                for i in 0..n {
                    for j in i + 1..n {
                        let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                        if adjacent {
                            continue;
                        }
                        if segments_intersect(
                            vertices[i],
                            vertices[(i + 1) % n],
                            vertices[j],
                            vertices[(j + 1) % n],
                        ) {
                            return Err(Error::validation("polygon cavity is self-intersecting"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Distance between two components (zero when they overlap).
    fn distance_to(&self, other: &CavityComponent) -> f64 {
        let probe = |a: &CavityComponent, b: &CavityComponent| -> f64 {
            // minimum over a's boundary samples of b's signed distance
            a.boundary_polyline(1e-3)
                .into_iter()
                .map(|p| b.signed_distance(p))
                .fold(f64::INFINITY, f64::min)
        };
        match (self, other) {
            (
                CavityComponent::Disk {
                    center: c1,
                    radius: r1,
                },
                CavityComponent::Disk {
                    center: c2,
                    radius: r2,
                },
            ) => (dist(*c1, *c2) - r1 - r2).max(0.0),
            _ => probe(self, other).min(probe(other, self)).max(0.0),
        }
    }
}

impl CavitySpec {
    pub fn empty() -> Self {
        CavitySpec::default()
    }

    pub fn disk(center: Point, radius: f64) -> Self {
        CavitySpec {
            components: vec![CavityComponent::Disk { center, radius }],
        }
    }

    pub fn polygon(vertices: Vec<Point>) -> Self {
        CavitySpec {
            components: vec![CavityComponent::Polygon { vertices }],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.components.iter().any(|c| c.contains(p))
    }

    /// Signed distance to the cavity boundary (negative inside the cavity).
    pub fn signed_distance(&self, p: Point) -> f64 {
        self.components
            .iter()
            .map(|c| c.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn area(&self) -> f64 {
        self.components.iter().map(CavityComponent::area).sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.components.iter().map(CavityComponent::perimeter).sum()
    }

    /// Points along the cavity boundary with spacing at most `h`.
    pub fn boundary_samples(&self, h: f64) -> Vec<Point> {
        self.components
            .iter()
            .flat_map(|c| c.boundary_polyline(h))
            .collect()
    }

    /// Checks that every component stays at least `2 d0` from the circle of radius
    /// `domain_radius` and that components are pairwise at least `d0` apart.
    pub fn validate(&self, domain_radius: f64, d0: f64) -> Result<()> {
        if !(d0 > 0.0) {
            return Err(Error::validation("d0 must be positive"));
        }
        for (i, c) in self.components.iter().enumerate() {
            c.validate_shape()?;
            let gap = domain_radius - c.max_norm();
            if gap < 2.0 * d0 {
                return Err(Error::validation(format!(
                    "cavity component {i} is {gap:.4} from the outer boundary; at least 2*d0 = {:.4} required",
                    2.0 * d0
                )));
            }
        }
        for i in 0..self.components.len() {
            for j in i + 1..self.components.len() {
                let d = self.components[i].distance_to(&self.components[j]);
                if d < d0 {
                    return Err(Error::validation(format!(
                        "cavity components {i} and {j} are {d:.4} apart; at least d0 = {d0:.4} required"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: f64) -> CavitySpec {
        let s = side / 2.0;
        CavitySpec::polygon(vec![[-s, -s], [s, -s], [s, s], [-s, s]])
    }

    #[test]
    fn disk_geometry() {
        let c = CavitySpec::disk([0.0, 0.0], 0.3);
        assert!(c.contains([0.1, 0.1]));
        assert!(!c.contains([0.3, 0.1]));
        assert!((c.signed_distance([0.5, 0.0]) - 0.2).abs() < 1e-15);
        assert!((c.area() - PI * 0.09).abs() < 1e-15);
    }

    #[test]
    fn polygon_geometry() {
        let c = square(0.4);
        assert!(c.contains([0.0, 0.0]));
        assert!((c.signed_distance([0.0, 0.0]) + 0.2).abs() < 1e-15);
        assert!((c.signed_distance([0.5, 0.0]) - 0.3).abs() < 1e-15);
        assert!((c.area() - 0.16).abs() < 1e-15);
        assert!((c.perimeter() - 1.6).abs() < 1e-15);
        let poly = c.components[0].boundary_polyline(0.05);
        assert_eq!(poly.len(), 32);
        assert!(polygon_signed_area(&poly) > 0.0);
    }

    #[test]
    fn clockwise_polygon_is_reoriented() {
        let c = CavitySpec::polygon(vec![[-0.2, -0.2], [-0.2, 0.2], [0.2, 0.2], [0.2, -0.2]]);
        let poly = c.components[0].boundary_polyline(0.1);
        assert!(polygon_signed_area(&poly) > 0.0);
    }

    #[test]
    fn validation_distances() {
        let c = CavitySpec::disk([0.0, 0.0], 0.3);
        assert!(c.validate(1.0, 0.3).is_ok());
        assert!(c.validate(1.0, 0.36).is_err());
        let two = CavitySpec {
            components: vec![
                CavityComponent::Disk {
                    center: [-0.3, 0.0],
                    radius: 0.2,
                },
                CavityComponent::Disk {
                    center: [0.3, 0.0],
                    radius: 0.15,
                },
            ],
        };
        assert!(two.validate(1.0, 0.2).is_ok());
        assert!(two.validate(1.0, 0.26).is_err());
        let mixed = CavitySpec {
            components: vec![
                CavityComponent::Disk {
                    center: [-0.3, 0.0],
                    radius: 0.1,
                },
                square(0.2).components[0].clone(),
            ],
        };
        // disk edge at x = -0.2, square edge at x = -0.1
        assert!(mixed.validate(1.0, 0.09).is_ok());
        assert!(mixed.validate(1.0, 0.11).is_err());
    }

    #[test]
    fn self_intersecting_polygon_rejected() {
        let bow = CavitySpec::polygon(vec![[-0.2, -0.2], [0.2, 0.2], [0.2, -0.2], [-0.2, 0.2]]);
        assert!(bow.validate(1.0, 0.1).is_err());
    }
}
