use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cavity_core::config::RunConfig;
use cavity_core::continuation::{write_checkpoint, PhaseSummary};
use cavity_core::contour::extract_contour;
use cavity_core::data::MeasurementSet;
use cavity_core::fem::Sigma;
use cavity_core::io::{
    read_field_csv, recorded_config_hash, write_contour_csv, write_field_csv, write_vtk,
};
use cavity_core::mesh::{read_mesh, write_mesh, Mesh};
use cavity_core::optimizer::write_history_csv;
use cavity_core::{pipeline, Error};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

mod guard;

use guard::OutputGuard;

#[derive(Parser)]
#[command(
    name = "cavity",
    version,
    about = "Phase-field reconstruction of cavities from boundary data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize noisy boundary measurements for the configured cavity.
    GenerateData(Common),
    /// Run the continuation schedule on a measurement file.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Measurement file; defaults to OUTPUT_DIR/measurements.csv.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Compare a reconstructed field with the configured true cavity.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Field CSV; defaults to OUTPUT_DIR/final_v.csv.
        #[arg(long)]
        field: Option<PathBuf>,
        /// Mesh of the field; defaults to OUTPUT_DIR/final_mesh.txt.
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        eta_diag: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon0: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    phases: Option<usize>,
    #[arg(long)]
    mesh_h: Option<f64>,
    /// Accessible boundary arc "a,b" in radians.
    #[arg(long)]
    sigma_arc: Option<String>,
    /// Overwrite outputs written under a different configuration.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn load(&self) -> cavity_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                RunConfig::from_toml_str(&fs::read_to_string(p).map_err(|e| with_path(p, e))?)?
            }
            None => RunConfig::default(),
        };
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(x) = self.seed {
            cfg.seed = x;
        }
        if let Some(x) = self.noise {
            cfg.noise = x;
        }
        if let Some(x) = self.alpha {
            cfg.schedule.alpha = x;
            cfg.schedule.alpha_per_phase.clear();
        }
        if let Some(x) = self.epsilon0 {
            cfg.schedule.epsilon0 = x;
        }
        if let Some(x) = self.delta0 {
            cfg.schedule.delta0 = x;
        }
        if let Some(x) = self.phases {
            cfg.schedule.n_phases = x;
        }
        if let Some(x) = self.mesh_h {
            cfg.mesh_h = x;
        }
        if let Some(s) = &self.sigma_arc {
            let sigma = cavity_core::data::parse_sigma(s)?;
            if sigma == Sigma::Full {
                return Err(Error::Validation("--sigma-arc expects \"a,b\"".into()));
            }
            cfg.sigma = sigma;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 4,
        Error::Phase { source, .. } => exit_code(source),
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenerateData(c) => generate_data(c),
        Command::Reconstruct { common, data } => reconstruct(common, data.as_deref()),
        Command::Metrics {
            common,
            field,
            mesh,
            eta_diag,
        } => metrics(common, field.as_deref(), mesh.as_deref(), *eta_diag),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn open(path: &Path) -> cavity_core::Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| with_path(path, e))
}

fn create(path: &Path) -> cavity_core::Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| with_path(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> cavity_core::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn generate_data(c: &Common) -> cavity_core::Result<()> {
    let cfg = c.load()?;
    let hash = cfg.hash();
    let dir = &cfg.output_dir;
    let guard = OutputGuard::new(dir, &hash, c.force);
    let data_path = dir.join("measurements.csv");
    let prov_path = dir.join("provenance.json");
    guard.check_all(&[&data_path, &prov_path])?;

    let (mesh, m) = pipeline::generate_measurements(&cfg)?;
    fs::create_dir_all(dir)?;
    m.write_csv(create(&data_path)?)?;
    let provenance = json!({
        "config_hash": hash,
        "cavity": cfg.cavity,
        "sources": cfg.sources,
        "noise": cfg.noise,
        "noise_free": cfg.noise == 0.0,
        "seed": cfg.seed,
        "rng": m.rng,
        "sigma": cfg.sigma,
        "reconstruction_mesh": {
            "h": cfg.mesh_h,
            "vertices": mesh.n_vertices(),
            "triangles": mesh.n_triangles(),
            "sigma_vertices": m.vertices.len(),
        },
        "fine_mesh": { "h": cfg.fine_h(), "d0_band": cfg.d0_band },
        "config": cfg,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(&prov_path, &provenance)?;
    eprintln!(
        "wrote {} ({} sources, {} boundary vertices, noise {})",
        data_path.display(),
        m.n_sources(),
        m.vertices.len(),
        cfg.noise
    );
    Ok(())
}

/// CSV, VTK and contour exports of one field.
fn export_field(
    dir: &Path,
    stem: &str,
    mesh: &Mesh,
    v: &[f64],
    hash: &str,
) -> cavity_core::Result<()> {
    write_field_csv(
        mesh,
        v,
        Some(hash),
        create(&dir.join(format!("{stem}_v.csv")))?,
    )?;
    write_vtk(
        mesh,
        &[("v", v)],
        Some(hash),
        create(&dir.join(format!("{stem}.vtk")))?,
    )?;
    let lines = extract_contour(mesh, v, 0.5)?;
    write_contour_csv(
        &lines,
        Some(hash),
        create(&dir.join(format!("{stem}_contour.csv")))?,
    )
}

fn reconstruct_outputs(dir: &Path, n_phases: usize) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for stem in (0..n_phases)
        .map(|n| format!("phase{n}"))
        .chain(["final".to_string()])
    {
        for suffix in ["_v.csv", ".vtk", "_contour.csv", "_mesh.txt"] {
            out.push(dir.join(format!("{stem}{suffix}")));
        }
    }
    for f in ["history.csv", "metrics.json", "summary.json"] {
        out.push(dir.join(f));
    }
    out
}

fn reconstruct(c: &Common, data: Option<&Path>) -> cavity_core::Result<()> {
    let cfg = c.load()?;
    let hash = cfg.hash();
    let dir = cfg.output_dir.clone();
    let data_path = data
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("measurements.csv"));
    let m = MeasurementSet::read_csv(open(&data_path)?)?;
    let guard = OutputGuard::new(&dir, &hash, c.force);
    let outputs = reconstruct_outputs(&dir, cfg.schedule.n_phases);
    guard.check_all(&outputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    fs::create_dir_all(&dir)?;

    let mut summaries: Vec<PhaseSummary> = Vec::new();
    let res = pipeline::reconstruct(&cfg, &m, |p, disc, v| {
        eprintln!(
            "phase {}: eps {:e} delta {:e} J {:.6e} accepted {} converged {} vertices {}",
            p.phase, p.epsilon, p.delta, p.j, p.accepted, p.converged, p.nverts
        );
        write_checkpoint(&dir, p.phase, disc.mesh(), v, Some(&hash))?;
        export_field(&dir, &format!("phase{}", p.phase), disc.mesh(), v, &hash)?;
        summaries.push(p.clone());
        Ok(())
    });
    let res = match res {
        Ok(r) => r,
        Err(e) => {
            // keep what was computed before the failure
            if let Error::Phase { history, .. } = &e {
                write_history_csv(history, Some(&hash), create(&dir.join("history.csv"))?)?;
            }
            return Err(e);
        }
    };

    let mesh = res.disc.mesh();
    export_field(&dir, "final", mesh, &res.v, &hash)?;
    let mut w = create(&dir.join("final_mesh.txt"))?;
    writeln!(w, "# config_hash = {hash}")?;
    write_mesh(mesh, w)?;
    write_history_csv(&res.history, Some(&hash), create(&dir.join("history.csv"))?)?;
    let metrics = pipeline::final_metrics(&cfg, mesh, &res.v)?;
    write_json(
        &dir.join("metrics.json"),
        &json!({ "config_hash": hash, "metrics": metrics }),
    )?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "config_hash": hash,
            "measurements": data_path,
            "phases": summaries,
            "config": cfg,
        }),
    )?;
    eprintln!(
        "final: symmetric difference ratio {:?}, hausdorff {:?}",
        metrics.symmetric_difference_ratio, metrics.hausdorff
    );
    Ok(())
}

fn metrics(
    c: &Common,
    field: Option<&Path>,
    mesh: Option<&Path>,
    eta_diag: Option<f64>,
) -> cavity_core::Result<()> {
    let mut cfg = c.load()?;
    if let Some(e) = eta_diag {
        cfg.eta_diag = e;
        cfg.validate()?;
    }
    let dir = cfg.output_dir.clone();
    let field = field
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("final_v.csv"));
    let mesh_path = mesh
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("final_mesh.txt"));
    let mesh = read_mesh(open(&mesh_path)?)?;
    let v = read_field_csv(open(&field)?)?;
    let m = pipeline::final_metrics(&cfg, &mesh, &v)?;
    let report = json!({
        "config_hash": cfg.hash(),
        "field": field,
        "field_config_hash": recorded_config_hash(open(&field)?)?,
        "metrics": m,
    });
    let s = serde_json::to_string_pretty(&report).map_err(std::io::Error::from)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{s}")?;
    Ok(())
}
