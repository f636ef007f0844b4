//! Plain-text mesh format.
//!
//! ```text
//! # outer_radius 1
//! VERTICES
//! 0 0.5 0.25
//! TRIANGLES
//! 0 0 1 2
//! BOUNDARY
//! 0 1 OUTER
//! ```
//!
//! Records are whitespace separated and indices are zero based. Lines starting
//! with `#` are comments, except `# outer_radius r`, which records the radius of
//! the outer circle.

use std::io::{BufRead, Write};

use super::{BoundaryEdge, BoundaryMarker, Mesh};
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &Mesh, mut w: W) -> Result<()> {
    if let Some(r) = mesh.outer_radius() {
        writeln!(w, "# outer_radius {r}")?;
    }
    writeln!(w, "VERTICES")?;
    for (i, p) in mesh.vertices().iter().enumerate() {
        writeln!(w, "{i} {} {}", p[0], p[1])?;
    }
    writeln!(w, "TRIANGLES")?;
    for (k, t) in mesh.triangles().iter().enumerate() {
        writeln!(w, "{k} {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "BOUNDARY")?;
    for e in mesh.boundary_edges() {
        writeln!(
            w,
            "{} {} {}",
            e.vertices[0],
            e.vertices[1],
            e.marker.as_str()
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Vertices,
    Triangles,
    Boundary,
}

pub fn read_mesh<R: BufRead>(r: R) -> Result<Mesh> {
    let mut section = Section::None;
    let mut outer_radius = None;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut boundary = Vec::new();

    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let ctx = || format!("mesh line {}", lineno + 1);
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            let mut it = comment.split_whitespace();
            if it.next() == Some("outer_radius") {
                let value = it
                    .next()
                    .ok_or_else(|| Error::parse(ctx(), "missing radius"))?;
                outer_radius = Some(
                    value
                        .parse::<f64>()
                        .map_err(|e| Error::parse(ctx(), e.to_string()))?,
                );
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        match trimmed {
            "VERTICES" => {
                section = Section::Vertices;
                continue;
            }
            "TRIANGLES" => {
                section = Section::Triangles;
                continue;
            }
            "BOUNDARY" => {
                section = Section::Boundary;
                continue;
            }
            _ => {}
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let index = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|e| Error::parse(ctx(), format!("{s:?}: {e}")))
        };
        let float = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::parse(ctx(), format!("{s:?}: {e}")))
        };
        match section {
            Section::None => return Err(Error::parse(ctx(), "record before any section header")),
            Section::Vertices => {
                if fields.len() != 3 {
                    return Err(Error::parse(ctx(), "expected `index x y`"));
                }
                if index(fields[0])? != vertices.len() {
                    return Err(Error::parse(ctx(), "vertex indices must be consecutive"));
                }
                vertices.push([float(fields[1])?, float(fields[2])?]);
            }
            Section::Triangles => {
                if fields.len() != 4 {
                    return Err(Error::parse(ctx(), "expected `index v0 v1 v2`"));
                }
                if index(fields[0])? != triangles.len() {
                    return Err(Error::parse(ctx(), "triangle indices must be consecutive"));
                }
                triangles.push([index(fields[1])?, index(fields[2])?, index(fields[3])?]);
            }
            Section::Boundary => {
                if fields.len() != 3 {
                    return Err(Error::parse(ctx(), "expected `v0 v1 marker`"));
                }
                let marker = match fields[2] {
                    "OUTER" => BoundaryMarker::Outer,
                    "CAVITY" => BoundaryMarker::Cavity,
                    other => return Err(Error::parse(ctx(), format!("unknown marker {other:?}"))),
                };
                boundary.push(BoundaryEdge {
                    vertices: [index(fields[0])?, index(fields[1])?],
                    marker,
                });
            }
        }
    }
    Mesh::new(vertices, triangles, boundary, outer_radius)
}
