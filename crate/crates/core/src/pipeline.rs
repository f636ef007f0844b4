//! End-to-end runs driven by a [`RunConfig`].

use crate::config::RunConfig;
use crate::continuation::{run_continuation, ContinuationResult, PhaseSummary};
use crate::data::{make_sources, synthesize_measurements, MeasurementSet, SynthesisParams};
use crate::error::{Error, Result};
use crate::mesh::{generate_disk_mesh, Mesh};
use crate::metrics::{compute_metrics, Metrics};
use crate::objective::Discretization;

pub fn reconstruction_mesh(cfg: &RunConfig) -> Result<Mesh> {
    generate_disk_mesh(cfg.domain_radius, cfg.mesh_h)
}

pub fn synthesis_params(cfg: &RunConfig) -> SynthesisParams {
    SynthesisParams {
        sources: cfg.sources,
        eta: cfg.noise,
        seed: cfg.seed,
        fine_h: cfg.fine_h(),
        d0: cfg.d0_band,
        sigma: cfg.sigma,
        newton: cfg.newton,
    }
}

/// Synthetic measurements for the configured cavity, stamped with the config hash.
pub fn generate_measurements(cfg: &RunConfig) -> Result<(Mesh, MeasurementSet)> {
    cfg.validate()?;
    let mesh = reconstruction_mesh(cfg)?;
    let mut m = synthesize_measurements(&cfg.cavity, &synthesis_params(cfg), &mesh)?;
    m.config_hash = Some(cfg.hash());
    Ok((mesh, m))
}

/// Checks that `data` was produced with the sources, Σ and mesh of `cfg`.
pub fn check_measurements(cfg: &RunConfig, data: &MeasurementSet, mesh: &Mesh) -> Result<()> {
    if data.sources != cfg.sources {
        return Err(Error::validation(
            "measurement sources differ from the configured sources",
        ));
    }
    if data.sigma != cfg.sigma {
        return Err(Error::validation(
            "measurement sigma differs from the configured sigma",
        ));
    }
    data.check_mesh(mesh)
}

/// Runs the continuation schedule on `data`.
pub fn reconstruct<F>(
    cfg: &RunConfig,
    data: &MeasurementSet,
    on_phase: F,
) -> Result<ContinuationResult>
where
    F: FnMut(&PhaseSummary, &Discretization, &[f64]) -> Result<()>,
{
    cfg.validate()?;
    let mesh = reconstruction_mesh(cfg)?;
    check_measurements(cfg, data, &mesh)?;
    let n = mesh.n_vertices();
    let disc = Discretization::new(
        mesh,
        &make_sources(&data.sources),
        data.nodal(n),
        data.sigma,
    )?;
    run_continuation(disc, &cfg.schedule, &cfg.base_model(), &cfg.step, on_phase)
}

/// Quality metrics of `v` against the configured cavity at the final `ε`.
pub fn final_metrics(cfg: &RunConfig, mesh: &Mesh, v: &[f64]) -> Result<Metrics> {
    compute_metrics(
        mesh,
        v,
        &cfg.cavity,
        cfg.schedule.final_epsilon(),
        cfg.eta_diag,
    )
}
