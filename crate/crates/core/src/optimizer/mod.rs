//! Semi-implicit minimizing movements with step adaptation and mesh refinement.

mod inner;
mod phase;

pub use inner::{inner_solve, projected_gradient_step, InnerOutcome, PDAS_MAX_SWEEPS};
pub use phase::{
    read_history_csv, run_phase, write_history_csv, AdaptSpec, PhaseOptions, PhaseResult,
    StoppingSpec, HISTORY_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// One tentative step of a phase. `j_previous` is the value the step was compared
/// against; accepted records satisfy `j <= j_previous`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub j: f64,
    pub j_previous: f64,
    pub misfit: f64,
    pub reg: f64,
    pub tau: f64,
    pub accepted: bool,
    pub nverts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepController {
    pub tau: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub shrink: f64,
    pub grow: f64,
}

impl Default for StepController {
    fn default() -> Self {
        StepController {
            tau: 1.0,
            tau_min: 1e-8,
            tau_max: 1e3,
            shrink: 0.5,
            grow: 1.2,
        }
    }
}

impl StepController {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0
            && self.tau_min <= self.tau
            && self.tau <= self.tau_max
            && self.tau_max.is_finite())
        {
            return Err(Error::validation(format!(
                "step controller needs 0 < tau_min <= tau <= tau_max < inf, got {} / {} / {}",
                self.tau_min, self.tau, self.tau_max
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::validation(format!(
                "shrink = {} not in (0, 1)",
                self.shrink
            )));
        }
        if !(self.grow > 1.0 && self.grow.is_finite()) {
            return Err(Error::validation(format!(
                "grow = {} must exceed 1",
                self.grow
            )));
        }
        Ok(())
    }

    pub fn grow(&mut self) {
        self.tau = (self.tau * self.grow).min(self.tau_max);
    }

    /// Shrinks `tau`; returns false once it would drop below `tau_min`.
    pub fn shrink(&mut self) -> bool {
        let t = self.tau * self.shrink;
        if t < self.tau_min {
            return false;
        }
        self.tau = t;
        true
    }
}

/// The box `[0, 1]` per vertex, with the band `|x| >= R − d0` pinned to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pinned: Vec<bool>,
}

impl FeasibleSet {
    pub fn new(mesh: &Mesh, d0: f64) -> Result<Self> {
        if !(d0 >= 0.0 && d0.is_finite()) {
            return Err(Error::validation(format!("d0 = {d0} must be nonnegative")));
        }
        let radius = mesh.outer_radius().unwrap_or(1.0);
        let pinned: Vec<bool> = if d0 == 0.0 {
            vec![false; mesh.n_vertices()]
        } else {
            mesh.vertices()
                .iter()
                .map(|p| p[0].hypot(p[1]) >= radius - d0 - 1e-12)
                .collect()
        };
        if d0 > 0.0 && !pinned.iter().any(|&b| b) {
            return Err(Error::validation("pinned band contains no vertex"));
        }
        Ok(FeasibleSet { pinned })
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    pub fn n_pinned(&self) -> usize {
        self.pinned.iter().filter(|&&b| b).count()
    }

    /// Clamps to `[0, 1]` and resets the band to 1.
    pub fn project(&self, v: &mut [f64]) {
        for (x, &p) in v.iter_mut().zip(&self.pinned) {
            *x = if p { 1.0 } else { x.clamp(0.0, 1.0) };
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.pinned.len()
            && v.iter().zip(&self.pinned).all(|(&x, &p)| {
                if p {
                    x == 1.0
                } else {
                    (0.0..=1.0).contains(&x)
                }
            })
    }

    /// Zero in the interior, one on the band.
    pub fn initial(&self) -> Vec<f64> {
        self.pinned
            .iter()
            .map(|&p| if p { 1.0 } else { 0.0 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;

    #[test]
    fn controller_bounds() {
        let mut c = StepController::default();
        c.validate().unwrap();
        for _ in 0..100 {
            c.grow();
        }
        assert_eq!(c.tau, 1e3);
        let mut n = 0;
        while c.shrink() {
            n += 1;
        }
        assert!(c.tau >= c.tau_min && c.tau * c.shrink < c.tau_min);
        assert_eq!(n, 36);
        assert!(StepController {
            shrink: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(StepController {
            tau: 1e4,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn feasible_set() {
        let mesh = generate_disk_mesh(1.0, 0.1).unwrap();
        let f = FeasibleSet::new(&mesh, 0.3).unwrap();
        assert!(f.n_pinned() > 0 && f.n_pinned() < mesh.n_vertices());
        let v0 = f.initial();
        assert!(f.contains(&v0));
        let mut v: Vec<f64> = (0..mesh.n_vertices())
            .map(|i| (i % 5) as f64 * 0.5 - 0.7)
            .collect();
        f.project(&mut v);
        assert!(f.contains(&v));
        assert!(FeasibleSet::new(&mesh, -1.0).is_err());
        assert_eq!(FeasibleSet::new(&mesh, 0.0).unwrap().n_pinned(), 0);
    }
}
