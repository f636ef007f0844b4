//! Phases of decreasing `(ε, δ)`, each warm-started from the previous one.
//!
//! The mesh refined during a phase is kept for the next one, and the step length
//! carries over unless `reset_tau` is set.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_field_csv, write_field_csv};
use crate::mesh::{read_mesh, write_mesh, Mesh};
use crate::objective::{Discretization, ModelParams};
use crate::optimizer::{
    run_phase, AdaptSpec, FeasibleSet, IterationRecord, PhaseOptions, StepController, StoppingSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub epsilon0: f64,
    pub delta0: f64,
    pub epsilon_factor: f64,
    pub delta_factor: f64,
    pub n_phases: usize,
    pub alpha: f64,
    /// Per-phase α; phases beyond the list use `alpha`.
    pub alpha_per_phase: Vec<f64>,
    pub stop: StoppingSpec,
    pub adapt: AdaptSpec,
    /// Restart every phase from the initial step length.
    pub reset_tau: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            epsilon0: 0.1,
            delta0: 1e-2,
            epsilon_factor: 4.0,
            delta_factor: 10.0,
            n_phases: 3,
            alpha: 1e-5,
            alpha_per_phase: Vec::new(),
            stop: StoppingSpec::default(),
            adapt: AdaptSpec::default(),
            reset_tau: false,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0 > 0.0 && self.epsilon0.is_finite()) {
            return Err(Error::validation(format!(
                "schedule.epsilon0 = {} must be positive",
                self.epsilon0
            )));
        }
        if !(self.delta0 > 0.0 && self.delta0 < 1.0) {
            return Err(Error::validation(format!(
                "schedule.delta0 = {} not in (0, 1)",
                self.delta0
            )));
        }
        if !(self.epsilon_factor > 1.0 && self.delta_factor > 1.0) {
            return Err(Error::validation("schedule factors must exceed 1"));
        }
        if self.n_phases == 0 {
            return Err(Error::validation("schedule.n_phases must be at least 1"));
        }
        for &a in std::iter::once(&self.alpha).chain(&self.alpha_per_phase) {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::validation(format!(
                    "alpha = {a} must be nonnegative"
                )));
            }
        }
        self.stop.validate()?;
        self.adapt.validate()
    }

    /// `(ε_n, δ_n, α_n)`.
    pub fn phase(&self, n: usize) -> (f64, f64, f64) {
        let eps = self.epsilon0 / self.epsilon_factor.powi(n as i32);
        let delta = self.delta0 / self.delta_factor.powi(n as i32);
        let alpha = self.alpha_per_phase.get(n).copied().unwrap_or(self.alpha);
        (eps, delta, alpha)
    }

    pub fn final_epsilon(&self) -> f64 {
        self.phase(self.n_phases - 1).0
    }

    /// Model for phase `n`, taking everything but `(ε, δ, α)` from `base`.
    pub fn model(&self, base: &ModelParams, n: usize) -> ModelParams {
        let (eps, delta, alpha) = self.phase(n);
        let mut m = *base;
        m.phase.epsilon = eps;
        m.phase.alpha = alpha;
        m.fict.delta = delta;
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub phase: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    /// Final `J` at this phase's own `(ε, δ)`.
    pub j: f64,
    pub misfit: f64,
    pub reg: f64,
    pub accepted: usize,
    pub converged: bool,
    pub refinements: usize,
    pub fallbacks: usize,
    pub nverts: usize,
    pub tau: f64,
}

#[derive(Debug)]
pub struct ContinuationResult {
    pub disc: Discretization,
    pub v: Vec<f64>,
    pub history: Vec<IterationRecord>,
    pub phases: Vec<PhaseSummary>,
}

/// Runs every phase of `schedule` from the initial guess (zero inside, one on the band).
/// `on_phase` sees each finished phase, for example to write a checkpoint.
pub fn run_continuation<F>(
    disc: Discretization,
    schedule: &Schedule,
    base: &ModelParams,
    ctrl: &StepController,
    on_phase: F,
) -> Result<ContinuationResult>
where
    F: FnMut(&PhaseSummary, &Discretization, &[f64]) -> Result<()>,
{
    let v0 = FeasibleSet::new(disc.mesh(), base.fict.d0_band)?.initial();
    resume_continuation(disc, v0, 0, schedule, base, ctrl, on_phase)
}

/// Runs phases `first..n_phases` starting from `v`, e.g. a checkpoint of phase `first − 1`.
pub fn resume_continuation<F>(
    disc: Discretization,
    v: Vec<f64>,
    first: usize,
    schedule: &Schedule,
    base: &ModelParams,
    ctrl: &StepController,
    mut on_phase: F,
) -> Result<ContinuationResult>
where
    F: FnMut(&PhaseSummary, &Discretization, &[f64]) -> Result<()>,
{
    schedule.validate()?;
    ctrl.validate()?;
    if first >= schedule.n_phases {
        return Err(Error::validation(format!(
            "start phase {first} beyond the {} scheduled phases",
            schedule.n_phases
        )));
    }
    let (mut disc, mut v) = (disc, v);
    let mut history = Vec::new();
    let mut phases = Vec::new();
    let mut step = *ctrl;
    for n in first..schedule.n_phases {
        let model = schedule.model(base, n);
        if schedule.reset_tau {
            step = *ctrl;
        }
        let opts = PhaseOptions {
            stop: schedule.stop,
            adapt: schedule.adapt,
            phase: n,
        };
        let res = match run_phase(disc, v, &model, &mut step, &opts) {
            Ok(r) => r,
            Err(e) => {
                let (partial, source) = match e {
                    Error::Phase {
                        history: h, source, ..
                    } => (h, *source),
                    Error::Stagnation {
                        tau_min,
                        attempts,
                        history: h,
                    } => (
                        h.clone(),
                        Error::Stagnation {
                            tau_min,
                            attempts,
                            history: h,
                        },
                    ),
                    other => (Vec::new(), other),
                };
                history.extend(partial);
                return Err(Error::Phase {
                    phase: n,
                    history,
                    source: Box::new(source),
                });
            }
        };
        let summary = PhaseSummary {
            phase: n,
            epsilon: model.phase.epsilon,
            delta: model.fict.delta,
            alpha: model.phase.alpha,
            j: res.evaluation.total,
            misfit: res.evaluation.misfit,
            reg: res.evaluation.reg,
            accepted: res.accepted,
            converged: res.converged,
            refinements: res.refinements,
            fallbacks: res.fallbacks,
            nverts: res.disc.mesh().n_vertices(),
            tau: step.tau,
        };
        on_phase(&summary, &res.disc, &res.v)?;
        history.extend(res.history);
        phases.push(summary);
        disc = res.disc;
        v = res.v;
    }
    Ok(ContinuationResult {
        disc,
        v,
        history,
        phases,
    })
}

/// File names of the checkpoint of phase `n` inside `dir`.
pub fn checkpoint_paths(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("phase{n}_mesh.txt")),
        dir.join(format!("phase{n}_v.csv")),
    )
}

pub fn write_checkpoint(
    dir: &Path,
    n: usize,
    mesh: &Mesh,
    v: &[f64],
    config_hash: Option<&str>,
) -> Result<()> {
    let (mp, vp) = checkpoint_paths(dir, n);
    let mut w = BufWriter::new(File::create(mp)?);
    if let Some(h) = config_hash {
        writeln!(w, "# config_hash = {h}")?;
    }
    write_mesh(mesh, w)?;
    write_field_csv(mesh, v, config_hash, BufWriter::new(File::create(vp)?))
}

pub fn read_checkpoint(dir: &Path, n: usize) -> Result<(Mesh, Vec<f64>)> {
    let (mp, vp) = checkpoint_paths(dir, n);
    let mesh = read_mesh(BufReader::new(File::open(mp)?))?;
    let v = read_field_csv(BufReader::new(File::open(vp)?))?;
    if v.len() != mesh.n_vertices() {
        return Err(Error::parse("checkpoint", "field and mesh sizes differ"));
    }
    Ok((mesh, v))
}
