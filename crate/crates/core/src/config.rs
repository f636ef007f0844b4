//! Run configuration: every tunable of a data-generation + reconstruction run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adjoint::AdjointWeighting;
use crate::continuation::Schedule;
use crate::data::SourceSpec;
use crate::error::{Error, Result};
use crate::fem::Sigma;
use crate::forward::{FictitiousParams, NewtonParams};
use crate::mesh::CavitySpec;
use crate::objective::{ModelParams, PhaseFieldParams, Potential};
use crate::optimizer::StepController;

pub const DEFAULT_MESH_H: f64 = 0.025;
pub const DEFAULT_D0: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain_radius: f64,
    /// Target edge length of the reconstruction mesh.
    pub mesh_h: f64,
    /// Edge length of the mesh with the true cavity; half of `mesh_h` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fine_h: Option<f64>,
    pub cavity: CavitySpec,
    pub sources: SourceSpec,
    /// Noise level relative to the peak of each trace.
    pub noise: f64,
    pub seed: u64,
    pub sigma: Sigma,
    pub d0_band: f64,
    pub potential: Potential,
    pub weighting: AdjointWeighting,
    pub newton: NewtonParams,
    pub schedule: Schedule,
    pub step: StepController,
    pub eta_diag: f64,
    /// Where outputs go. Not part of the config hash.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain_radius: 1.0,
            mesh_h: DEFAULT_MESH_H,
            fine_h: None,
            cavity: CavitySpec::disk([0.0, 0.0], 0.3),
            sources: SourceSpec::default(),
            noise: 0.01,
            seed: 1,
            sigma: Sigma::Full,
            d0_band: DEFAULT_D0,
            potential: Potential::Convex,
            weighting: AdjointWeighting::Exact,
            newton: NewtonParams::default(),
            schedule: Schedule::default(),
            step: StepController::default(),
            eta_diag: crate::metrics::DEFAULT_ETA_DIAG,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::parse("config", e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::validation(format!("config serialization: {e}")))
    }

    pub fn fine_h(&self) -> f64 {
        self.fine_h.unwrap_or(self.mesh_h / 2.0)
    }

    /// Hex SHA-256 of the canonical JSON form, excluding `output_dir`.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes to JSON");
        format!("{:x}", Sha256::digest(&bytes))
    }

    /// Model parameters of phase 0; later phases come from the schedule.
    pub fn base_model(&self) -> ModelParams {
        let (eps, delta, alpha) = self.schedule.phase(0);
        ModelParams {
            phase: PhaseFieldParams::new(eps, alpha, self.potential),
            fict: FictitiousParams {
                delta,
                d0_band: self.d0_band,
            },
            newton: self.newton,
            weighting: self.weighting,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| match e {
            Error::Validation(m) => Error::Validation(format!("{name}: {m}")),
            other => other,
        };
        if !(self.domain_radius > 0.0 && self.domain_radius.is_finite()) {
            return Err(Error::validation(format!(
                "domain_radius = {} must be positive",
                self.domain_radius
            )));
        }
        if !(self.mesh_h > 0.0 && self.mesh_h < self.domain_radius) {
            return Err(Error::validation(format!(
                "mesh_h = {} not in (0, domain_radius)",
                self.mesh_h
            )));
        }
        let fine = self.fine_h();
        if !(fine > 0.0 && fine < self.mesh_h) {
            return Err(Error::validation(format!(
                "fine_h = {fine} not in (0, mesh_h)"
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::validation(format!(
                "noise = {} must be nonnegative",
                self.noise
            )));
        }
        if !(self.eta_diag > 0.0 && self.eta_diag < 0.5) {
            return Err(Error::validation(format!(
                "eta_diag = {} not in (0, 0.5)",
                self.eta_diag
            )));
        }
        if !(self.d0_band > 0.0 && self.d0_band < self.domain_radius) {
            return Err(Error::validation(format!(
                "d0_band = {} not in (0, domain_radius)",
                self.d0_band
            )));
        }
        self.sources
            .validate(self.domain_radius)
            .map_err(|e| field("sources", e))?;
        self.cavity
            .validate(self.domain_radius, self.d0_band)
            .map_err(|e| field("cavity", e))?;
        self.sigma.validate().map_err(|e| field("sigma", e))?;
        self.newton.validate().map_err(|e| field("newton", e))?;
        self.schedule.validate().map_err(|e| field("schedule", e))?;
        self.step.validate().map_err(|e| field("step", e))?;
        for n in 0..self.schedule.n_phases {
            self.schedule
                .model(&self.base_model(), n)
                .validate()
                .map_err(|e| field("schedule", e))?;
        }
        Ok(())
    }
}
