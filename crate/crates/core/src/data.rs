//! Synthetic boundary measurements.
//!
//! Reference solutions are computed on a finer mesh that resolves the true cavity
//! as a hole, then their outer traces are interpolated onto the reconstruction mesh
//! and perturbed with Gaussian noise. The reconstruction mesh is never used for
//! the reference solve.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_load, sigma_vertices, FemSpace, Sigma};
use crate::forward::{solve_cavity_reference, NewtonParams};
use crate::mesh::{
    boundary_trace_interpolate, dist, generate_cavity_mesh, CavitySpec, Mesh, Point,
};
use crate::par;

/// Name of the generator behind every noise draw, recorded with the data.
pub const RNG_NAME: &str = "ChaCha8Rng";

/// `f(x) = amplitude · exp(−|x − center|² / width²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSource {
    pub center: Point,
    pub width: f64,
    pub amplitude: f64,
}

impl GaussianSource {
    pub fn on_ring(radius: f64, angle: f64, width: f64, amplitude: f64) -> Self {
        GaussianSource {
            center: [radius * angle.cos(), radius * angle.sin()],
            width,
            amplitude,
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        let d2 = (p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2);
        self.amplitude * (-d2 / (self.width * self.width)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSpec {
    pub count: usize,
    pub ring_radius: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec {
            count: 4,
            ring_radius: 0.8,
            width: 0.2,
            amplitude: 1.0,
        }
    }
}

impl SourceSpec {
    pub fn validate(&self, domain_radius: f64) -> Result<()> {
        if self.count == 0 {
            return Err(Error::validation("sources.count must be at least 1"));
        }
        if !(self.ring_radius > 0.0 && self.ring_radius < domain_radius) {
            return Err(Error::validation(format!(
                "sources.ring_radius = {} not in (0, {domain_radius})",
                self.ring_radius
            )));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::validation(format!(
                "sources.width = {} must be positive",
                self.width
            )));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::validation(format!(
                "sources.amplitude = {} must be positive",
                self.amplitude
            )));
        }
        Ok(())
    }
}

/// Gaussian bumps centred at angles `iπ/N`, `i = 1..N`, on the source ring.
pub fn make_sources(spec: &SourceSpec) -> Vec<GaussianSource> {
    let n = spec.count as f64;
    (1..=spec.count)
        .map(|i| {
            GaussianSource::on_ring(
                spec.ring_radius,
                i as f64 * PI / n,
                spec.width,
                spec.amplitude,
            )
        })
        .collect()
}

/// Adds i.i.d. `N(0, (eta·max|trace|)²)` noise drawn from `rng`.
pub fn add_noise(trace: &[f64], eta: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::validation(format!(
            "noise level {eta} must be nonnegative"
        )));
    }
    let peak = trace.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let std = eta * peak;
    if std == 0.0 {
        return Ok(trace.to_vec());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::validation(e.to_string()))?;
    Ok(trace.iter().map(|x| x + normal.sample(rng)).collect())
}

/// Boundary data on the Σ vertices of a reconstruction mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub sources: SourceSpec,
    pub eta: f64,
    pub seed: u64,
    pub rng: String,
    pub sigma: Sigma,
    pub fine_h: f64,
    /// Σ vertices of the reconstruction mesh, sorted by polar angle.
    pub vertices: Vec<usize>,
    pub points: Vec<Point>,
    /// One trace per source, aligned with `vertices`.
    pub traces: Vec<Vec<f64>>,
    pub config_hash: Option<String>,
}

impl MeasurementSet {
    pub fn n_sources(&self) -> usize {
        self.traces.len()
    }

    /// Traces as nodal vectors of length `n`, zero off Σ.
    pub fn nodal(&self, n: usize) -> Vec<Vec<f64>> {
        self.traces
            .iter()
            .map(|t| {
                let mut out = vec![0.0; n];
                for (&i, &x) in self.vertices.iter().zip(t) {
                    out[i] = x;
                }
                out
            })
            .collect()
    }

    /// Checks that the measurement vertices exist on `mesh` at the recorded positions.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        for (&i, &p) in self.vertices.iter().zip(&self.points) {
            let q = mesh.vertices().get(i).ok_or_else(|| {
                Error::validation(format!("measurement vertex {i} does not exist on the mesh"))
            })?;
            if dist(p, *q) > 1e-9 {
                return Err(Error::validation(format!(
                    "measurement vertex {i} is at ({}, {}) but the mesh has it at ({}, {})",
                    p[0], p[1], q[0], q[1]
                )));
            }
        }
        let expected = sigma_vertices(mesh, &self.sigma);
        if expected != self.vertices {
            return Err(Error::validation(
                "measurement vertices do not match the mesh's sigma vertices",
            ));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.sources;
        writeln!(w, "# seed = {}", self.seed)?;
        writeln!(w, "# eta = {}", self.eta)?;
        writeln!(w, "# noise_free = {}", self.eta == 0.0)?;
        writeln!(w, "# rng = {}", self.rng)?;
        writeln!(w, "# sigma = {}", self.sigma)?;
        writeln!(w, "# fine_h = {}", self.fine_h)?;
        writeln!(w, "# source_count = {}", s.count)?;
        writeln!(w, "# source_ring_radius = {}", s.ring_radius)?;
        writeln!(w, "# source_width = {}", s.width)?;
        writeln!(w, "# source_amplitude = {}", s.amplitude)?;
        if let Some(h) = &self.config_hash {
            writeln!(w, "# config_hash = {h}")?;
        }
        writeln!(w, "source,vertex,x,y,value")?;
        for (k, trace) in self.traces.iter().enumerate() {
            for ((&i, p), x) in self.vertices.iter().zip(&self.points).zip(trace) {
                writeln!(w, "{k},{i},{},{},{x}", p[0], p[1])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut meta = std::collections::HashMap::new();
        let mut rows: Vec<(usize, usize, Point, f64)> = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let ctx = || format!("measurement line {}", lineno + 1);
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(c) = t.strip_prefix('#') {
                if let Some((k, v)) = c.split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !header_seen {
                if t != "source,vertex,x,y,value" {
                    return Err(Error::parse(ctx(), format!("unexpected header {t:?}")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = t.split(',').collect();
            if f.len() != 5 {
                return Err(Error::parse(ctx(), "expected 5 columns"));
            }
            let int = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::parse(ctx(), format!("{s:?}: {e}")))
            };
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(ctx(), format!("{s:?}: {e}")))
            };
            rows.push((int(f[0])?, int(f[1])?, [num(f[2])?, num(f[3])?], num(f[4])?));
        }
        if !header_seen {
            return Err(Error::parse("measurement file", "missing column header"));
        }
        let get = |k: &str| -> Result<&String> {
            meta.get(k)
                .ok_or_else(|| Error::parse("measurement metadata", format!("missing key {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|e| Error::parse("measurement metadata", format!("{k}: {e}")))
        };
        let sources = SourceSpec {
            count: get("source_count")?
                .parse()
                .map_err(|e| Error::parse("measurement metadata", format!("source_count: {e}")))?,
            ring_radius: num("source_ring_radius")?,
            width: num("source_width")?,
            amplitude: num("source_amplitude")?,
        };
        let sigma = parse_sigma(get("sigma")?)?;
        let n = sources.count;
        let mut traces = vec![Vec::new(); n];
        let mut vertices = Vec::new();
        let mut points = Vec::new();
        for &(k, i, p, x) in &rows {
            if k >= n {
                return Err(Error::parse(
                    "measurement rows",
                    format!("source index {k} >= {n}"),
                ));
            }
            if k == 0 {
                vertices.push(i);
                points.push(p);
            }
            traces[k].push(x);
        }
        // every source block must list the same vertices in the same order
        for k in 0..n {
            let block: Vec<usize> = rows.iter().filter(|r| r.0 == k).map(|r| r.1).collect();
            if block != vertices {
                return Err(Error::parse(
                    "measurement rows",
                    format!("source {k} does not list the same vertices as source 0"),
                ));
            }
        }
        Ok(MeasurementSet {
            sources,
            eta: num("eta")?,
            seed: get("seed")?
                .parse()
                .map_err(|e| Error::parse("measurement metadata", format!("seed: {e}")))?,
            rng: get("rng")?.clone(),
            sigma,
            fine_h: num("fine_h")?,
            vertices,
            points,
            traces,
            config_hash: meta.get("config_hash").cloned(),
        })
    }
}

/// Parses `full` or `arc:a,b` (radians).
pub fn parse_sigma(s: &str) -> Result<Sigma> {
    let s = s.trim();
    if s == "full" {
        return Ok(Sigma::Full);
    }
    let body = s.strip_prefix("arc:").unwrap_or(s);
    let (a, b) = body
        .split_once(',')
        .ok_or_else(|| Error::parse("sigma", format!("expected `full` or `a,b`, got {s:?}")))?;
    let p = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|e| Error::parse("sigma", format!("{x:?}: {e}")))
    };
    let sigma = Sigma::Arc {
        start: p(a)?,
        end: p(b)?,
    };
    sigma.validate()?;
    Ok(sigma)
}

/// Parameters of [`synthesize_measurements`].
#[derive(Debug, Clone)]
pub struct SynthesisParams {
    pub sources: SourceSpec,
    pub eta: f64,
    pub seed: u64,
    pub fine_h: f64,
    pub d0: f64,
    pub sigma: Sigma,
    pub newton: NewtonParams,
}

/// Clean reference traces of every source on the Σ vertices of `recon_mesh`.
pub fn reference_traces(
    cavity: &CavitySpec,
    params: &SynthesisParams,
    recon_mesh: &Mesh,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let radius = recon_mesh
        .outer_radius()
        .ok_or_else(|| Error::validation("reconstruction mesh has no outer radius"))?;
    params.sources.validate(radius)?;
    let outer = recon_mesh.outer_vertices_by_angle();
    let boundary_h = outer
        .iter()
        .zip(outer.iter().cycle().skip(1))
        .map(|(&a, &b)| dist(recon_mesh.vertices()[a], recon_mesh.vertices()[b]))
        .sum::<f64>()
        / outer.len() as f64;
    if !(params.fine_h > 0.0 && params.fine_h < boundary_h) {
        return Err(Error::validation(format!(
            "fine_h = {} must be positive and below the reconstruction boundary spacing {boundary_h:.4}",
            params.fine_h
        )));
    }
    let fine = FemSpace::new(generate_cavity_mesh(
        radius,
        cavity,
        params.fine_h,
        params.d0,
    )?);
    let sources = make_sources(&params.sources);
    let verts = sigma_vertices(recon_mesh, &params.sigma);
    let traces = par::try_map_slice(&sources, |s| -> Result<Vec<f64>> {
        let load = assemble_load(&fine, |p| s.eval(p));
        let sol = solve_cavity_reference(&fine, &load, &params.newton)?;
        let tr = boundary_trace_interpolate(fine.mesh(), &sol.u, recon_mesh)?;
        let full = tr.scatter(recon_mesh.n_vertices());
        Ok(verts.iter().map(|&i| full[i]).collect())
    })?;
    Ok((verts, traces))
}

/// Generates noisy measurements for `cavity` on the Σ vertices of `recon_mesh`.
pub fn synthesize_measurements(
    cavity: &CavitySpec,
    params: &SynthesisParams,
    recon_mesh: &Mesh,
) -> Result<MeasurementSet> {
    let (vertices, clean) = reference_traces(cavity, params, recon_mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let traces = clean
        .iter()
        .map(|t| add_noise(t, params.eta, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementSet {
        sources: params.sources,
        eta: params.eta,
        seed: params.seed,
        rng: RNG_NAME.to_string(),
        sigma: params.sigma,
        fine_h: params.fine_h,
        points: vertices.iter().map(|&i| recon_mesh.vertices()[i]).collect(),
        vertices,
        traces,
        config_hash: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;
    use approx::assert_relative_eq;

    #[test]
    fn default_source_centres() {
        let spec = SourceSpec {
            ring_radius: 0.8,
            ..Default::default()
        };
        let s = make_sources(&spec);
        let angles = [PI / 4.0, PI / 2.0, 3.0 * PI / 4.0, PI];
        for (src, a) in s.iter().zip(angles) {
            assert_relative_eq!(src.center[0], 0.8 * a.cos(), epsilon = 1e-15);
            assert_relative_eq!(src.center[1], 0.8 * a.sin(), epsilon = 1e-15);
            assert_eq!(src.eval(src.center), 1.0);
        }
    }

    #[test]
    fn source_tail_decay() {
        let s = GaussianSource::on_ring(0.9, 0.3, 0.07, 1.0);
        for a in [0.0, 1.0, 2.5, 4.0] {
            let p = [
                s.center[0] + 4.0 * 0.07 * f64::cos(a),
                s.center[1] + 4.0 * 0.07 * f64::sin(a),
            ];
            assert!(s.eval(p) < 1e-6);
        }
    }

    /// Fraction of the source mass inside `|x| < 1 - d0` on the unit disk, by polar midpoint quadrature.
    fn inner_fraction(s: &GaussianSource, d0: f64) -> f64 {
        let (nr, nt) = (1500, 3000);
        let (mut inside, mut total) = (0.0, 0.0);
        for i in 0..nr {
            let r = (i as f64 + 0.5) / nr as f64;
            for j in 0..nt {
                let t = 2.0 * PI * j as f64 / nt as f64;
                let w = s.eval([r * t.cos(), r * t.sin()]) * r;
                total += w;
                if r < 1.0 - d0 {
                    inside += w;
                }
            }
        }
        inside / total
    }

    #[test]
    fn tail_fraction_quadrature() {
        // centred bump: (1 - exp(-rho²/w²)) / (1 - exp(-1/w²))
        let s = GaussianSource {
            center: [0.0, 0.0],
            width: 0.4,
            amplitude: 1.0,
        };
        let exact = (1.0 - f64::exp(-0.49 / 0.16)) / (1.0 - f64::exp(-1.0 / 0.16));
        assert_relative_eq!(inner_fraction(&s, 0.3), exact, max_relative = 1e-5);
    }

    #[test]
    fn narrow_boundary_sources_live_in_the_band() {
        let spec = SourceSpec {
            ring_radius: 0.9,
            width: 0.07,
            ..Default::default()
        };
        for s in make_sources(&spec) {
            assert!(inner_fraction(&s, 0.3) <= 1e-4);
        }
        // the default bumps are wide; most of their mass lies inside the band
        let f = inner_fraction(&make_sources(&SourceSpec::default())[0], 0.1);
        assert!(f > 0.5 && f < 0.9, "fraction {f}");
    }

    #[test]
    fn noise_properties() {
        let trace: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.01).sin() * 2.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(add_noise(&trace, 0.0, &mut rng).unwrap(), trace);
        let a = add_noise(&trace, 0.01, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = add_noise(&trace, 0.01, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        let d: Vec<f64> = a.iter().zip(&trace).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        let peak = trace.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((std / (0.01 * peak) - 1.0).abs() < 0.05, "std {std}");
        assert!(add_noise(&trace, -1.0, &mut rng).is_err());
    }

    fn params(eta: f64, seed: u64) -> SynthesisParams {
        SynthesisParams {
            sources: SourceSpec::default(),
            eta,
            seed,
            fine_h: 0.03,
            d0: 0.1,
            sigma: Sigma::Full,
            newton: NewtonParams::default(),
        }
    }

    #[test]
    fn empty_cavity_matches_direct_solve() {
        let recon = generate_disk_mesh(1.0, 0.06).unwrap();
        let m = synthesize_measurements(&CavitySpec::empty(), &params(0.0, 1), &recon).unwrap();
        assert_eq!(m.n_sources(), 4);
        let space = FemSpace::new(recon.clone());
        let sources = make_sources(&SourceSpec::default());
        let mut worst: f64 = 0.0;
        for (s, t) in sources.iter().zip(&m.traces) {
            let sol = solve_cavity_reference(
                &space,
                &assemble_load(&space, |p| s.eval(p)),
                &NewtonParams::default(),
            )
            .unwrap();
            for (&i, &x) in m.vertices.iter().zip(t) {
                worst = worst.max((x - sol.u[i]).abs());
            }
        }
        let peak = m.traces.iter().flatten().fold(0.0f64, |a, &x| a.max(x));
        // the two meshes differ by a factor 2 in resolution, so only discretization error remains
        assert!(worst < 0.05 * peak, "worst {worst}, peak {peak}");
    }

    #[test]
    fn seeds_change_only_the_noise() {
        let recon = generate_disk_mesh(1.0, 0.1).unwrap();
        let cavity = CavitySpec::disk([0.0, 0.0], 0.3);
        let clean = synthesize_measurements(&cavity, &params(0.0, 1), &recon).unwrap();
        let clean2 = synthesize_measurements(&cavity, &params(0.0, 99), &recon).unwrap();
        assert_eq!(clean.traces, clean2.traces);
        let a = synthesize_measurements(&cavity, &params(0.01, 1), &recon).unwrap();
        let b = synthesize_measurements(&cavity, &params(0.01, 2), &recon).unwrap();
        let a2 = synthesize_measurements(&cavity, &params(0.01, 1), &recon).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a.traces, b.traces);
    }

    #[test]
    fn csv_round_trip() {
        let recon = generate_disk_mesh(1.0, 0.15).unwrap();
        let mut m =
            synthesize_measurements(&CavitySpec::disk([0.0, 0.0], 0.3), &params(0.01, 5), &recon)
                .unwrap();
        m.config_hash = Some("abc".into());
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = MeasurementSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        back.check_mesh(&recon).unwrap();
        let other = generate_disk_mesh(1.0, 0.1).unwrap();
        assert!(back.check_mesh(&other).is_err());
    }

    #[test]
    fn sigma_parsing() {
        assert_eq!(parse_sigma("full").unwrap(), Sigma::Full);
        assert_eq!(
            parse_sigma("0,3").unwrap(),
            Sigma::Arc {
                start: 0.0,
                end: 3.0
            }
        );
        assert_eq!(
            parse_sigma("arc:1,2").unwrap(),
            Sigma::Arc {
                start: 1.0,
                end: 2.0
            }
        );
        assert!(parse_sigma("1").is_err());
        assert!(parse_sigma("1,1").is_err());
    }

    #[test]
    fn fine_h_must_be_finer() {
        let recon = generate_disk_mesh(1.0, 0.1).unwrap();
        let mut p = params(0.0, 1);
        p.fine_h = 0.2;
        assert!(matches!(
            synthesize_measurements(&CavitySpec::empty(), &p, &recon),
            Err(Error::Validation(_))
        ));
    }
}
