//! Field, contour and visualization exports.
//!
//! Floats are written with the shortest representation that round-trips, so the
//! CSV files are bit-exact copies of the in-memory values.

use std::io::{BufRead, Write};

use crate::contour::Polyline;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

pub const FIELD_HEADER: &str = "vertex,x,y,value";
pub const CONTOUR_HEADER: &str = "polyline,point,x,y,closed";

fn hash_line<W: Write>(w: &mut W, config_hash: Option<&str>) -> Result<()> {
    if let Some(h) = config_hash {
        writeln!(w, "# config_hash = {h}")?;
    }
    Ok(())
}

pub fn write_field_csv<W: Write>(
    mesh: &Mesh,
    v: &[f64],
    config_hash: Option<&str>,
    mut w: W,
) -> Result<()> {
    if v.len() != mesh.n_vertices() {
        return Err(Error::validation("field length does not match the mesh"));
    }
    hash_line(&mut w, config_hash)?;
    writeln!(w, "{FIELD_HEADER}")?;
    for (i, (p, x)) in mesh.vertices().iter().zip(v).enumerate() {
        writeln!(w, "{i},{},{},{x}", p[0], p[1])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the values of a field CSV; vertex indices must be `0, 1, 2, …`.
pub fn read_field_csv<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut header = false;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !header {
            if t != FIELD_HEADER {
                return Err(Error::parse(
                    "field file",
                    format!("unexpected header {t:?}"),
                ));
            }
            header = true;
            continue;
        }
        let ctx = || format!("field line {}", n + 1);
        let f: Vec<&str> = t.split(',').collect();
        if f.len() != 4 {
            return Err(Error::parse(ctx(), "expected 4 columns"));
        }
        let i: usize = f[0]
            .parse()
            .map_err(|e| Error::parse(ctx(), format!("{:?}: {e}", f[0])))?;
        if i != out.len() {
            return Err(Error::parse(ctx(), format!("vertex {i} out of order")));
        }
        out.push(
            f[3].parse::<f64>()
                .map_err(|e| Error::parse(ctx(), format!("{:?}: {e}", f[3])))?,
        );
    }
    if !header {
        return Err(Error::parse("field file", "missing header"));
    }
    Ok(out)
}

/// Legacy ASCII unstructured grid with one point-data scalar per field.
pub fn write_vtk<W: Write>(
    mesh: &Mesh,
    fields: &[(&str, &[f64])],
    config_hash: Option<&str>,
    mut w: W,
) -> Result<()> {
    for (name, f) in fields {
        if f.len() != mesh.n_vertices() {
            return Err(Error::validation(format!(
                "field {name} does not match the mesh"
            )));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::validation(format!("invalid field name {name:?}")));
        }
    }
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(
        w,
        "phase field config_hash={}",
        config_hash.unwrap_or("none")
    )?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{} {} 0", p[0], p[1])?;
    }
    let nt = mesh.n_triangles();
    writeln!(w, "CELLS {nt} {}", 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    if !fields.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
        for (name, f) in fields {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for x in *f {
                writeln!(w, "{x}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_contour_csv<W: Write>(
    lines: &[Polyline],
    config_hash: Option<&str>,
    mut w: W,
) -> Result<()> {
    hash_line(&mut w, config_hash)?;
    writeln!(w, "{CONTOUR_HEADER}")?;
    for (k, l) in lines.iter().enumerate() {
        for (i, p) in l.points.iter().enumerate() {
            writeln!(w, "{k},{i},{},{},{}", p[0], p[1], l.closed)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Returns the config hash recorded in the leading comment lines of a text output.
pub fn recorded_config_hash<R: BufRead>(r: R) -> Result<Option<String>> {
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if let Some(c) = t.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                if k.trim() == "config_hash" {
                    return Ok(Some(v.trim().to_string()));
                }
            }
            continue;
        }
        if let Some(rest) = t.strip_prefix("phase field config_hash=") {
            return Ok(Some(rest.trim().to_string()));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;

    #[test]
    fn field_round_trip_is_bit_exact() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let v: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| (p[0] * 7.1).sin() / 3.0)
            .collect();
        let mut buf = Vec::new();
        write_field_csv(&mesh, &v, Some("abc"), &mut buf).unwrap();
        assert_eq!(read_field_csv(buf.as_slice()).unwrap(), v);
        assert_eq!(
            recorded_config_hash(buf.as_slice()).unwrap().as_deref(),
            Some("abc")
        );
        assert!(read_field_csv("vertex,x,y,value\n1,0,0,0\n".as_bytes()).is_err());
        assert!(read_field_csv("nonsense\n".as_bytes()).is_err());
    }

    #[test]
    fn vtk_layout() {
        let mesh = generate_disk_mesh(1.0, 0.3).unwrap();
        let v = vec![0.5; mesh.n_vertices()];
        let mut buf = Vec::new();
        write_vtk(&mesh, &[("v", &v)], Some("abc"), &mut buf).unwrap();
        let s = String::from_utf8(buf.clone()).unwrap();
        assert!(s.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(s.contains(&format!("POINTS {} double", mesh.n_vertices())));
        assert!(s.contains(&format!("CELL_TYPES {}", mesh.n_triangles())));
        assert_eq!(
            recorded_config_hash(buf.as_slice()).unwrap().as_deref(),
            Some("abc")
        );
        assert!(write_vtk(&mesh, &[("bad name", &v)], None, Vec::new()).is_err());
    }

    #[test]
    fn contour_rows() {
        let lines = vec![Polyline {
            points: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            closed: true,
        }];
        let mut buf = Vec::new();
        write_contour_csv(&lines, None, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert_eq!(s.lines().nth(3).unwrap(), "0,2,0,1,true");
    }
}
