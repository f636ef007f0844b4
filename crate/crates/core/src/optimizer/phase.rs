use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{inner_solve, FeasibleSet, IterationRecord, StepController, PDAS_MAX_SWEEPS};
use crate::error::{Error, Result};
use crate::fem::CsrMatrix;
use crate::mesh::{mark_by_gradient_with, refine_marked_with, RefineOptions, H_MIN};
use crate::objective::{
    adjoint_states, eval_j, explicit_gradient, Discretization, Evaluation, ModelParams,
};

pub const HISTORY_HEADER: &str = "iter,J,misfit,reg,tau,accepted,nverts";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingSpec {
    /// Tolerance on `‖v_{k+1} − v_k‖ / ‖v_k‖` in L².
    pub rtol: f64,
    /// Cap on accepted steps.
    pub max_iterations: usize,
}

impl Default for StoppingSpec {
    fn default() -> Self {
        StoppingSpec {
            rtol: 1e-4,
            max_iterations: 1000,
        }
    }
}

impl StoppingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol.is_finite()) {
            return Err(Error::validation(format!(
                "stop.rtol = {} must be positive",
                self.rtol
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("stop.max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSpec {
    /// Refine after every `every` accepted steps; 0 disables refinement.
    pub every: usize,
    pub fraction: f64,
    pub h_min: f64,
    pub vertex_cap: usize,
}

impl Default for AdaptSpec {
    fn default() -> Self {
        let r = RefineOptions::default();
        AdaptSpec {
            every: 30,
            fraction: 0.1,
            h_min: H_MIN,
            vertex_cap: r.vertex_cap,
        }
    }
}

impl AdaptSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::validation(format!(
                "adapt.fraction = {} not in (0, 1]",
                self.fraction
            )));
        }
        if !(self.h_min > 0.0 && self.h_min.is_finite()) {
            return Err(Error::validation(format!(
                "adapt.h_min = {} must be positive",
                self.h_min
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseOptions {
    pub stop: StoppingSpec,
    pub adapt: AdaptSpec,
    /// Label used in error reports.
    #[serde(skip)]
    pub phase: usize,
}

impl PhaseOptions {
    pub fn validate(&self) -> Result<()> {
        self.stop.validate()?;
        self.adapt.validate()
    }
}

#[derive(Debug)]
pub struct PhaseResult {
    /// Final discretization; differs from the input one when the mesh was refined.
    pub disc: Discretization,
    pub v: Vec<f64>,
    pub evaluation: Evaluation,
    pub history: Vec<IterationRecord>,
    pub accepted: usize,
    pub converged: bool,
    pub refinements: usize,
    pub fallbacks: usize,
}

struct State {
    disc: Discretization,
    feasible: FeasibleSet,
    v: Vec<f64>,
    eval: Evaluation,
    grad: Vec<f64>,
}

impl State {
    fn new(
        disc: Discretization,
        v: Vec<f64>,
        model: &ModelParams,
        d0: f64,
        warm: Option<&[Vec<f64>]>,
    ) -> Result<Self> {
        let feasible = FeasibleSet::new(disc.mesh(), d0)?;
        let mut v = v;
        feasible.project(&mut v);
        let eval = eval_j(&disc, &v, model, warm)?;
        let adj = adjoint_states(&disc, &v, model, &eval.states)?;
        let grad = explicit_gradient(&disc, &v, &eval.states, &adj, model)?;
        Ok(State {
            disc,
            feasible,
            v,
            eval,
            grad,
        })
    }
}

fn l2_norm(mass: &CsrMatrix, x: &[f64]) -> f64 {
    mass.bilinear(x, x).max(0.0).sqrt()
}

/// Runs minimizing movements from `v0` until the relative L² increment of an accepted
/// step drops below `opts.stop.rtol`, or `max_iterations` steps were accepted.
///
/// A tentative step is accepted when it does not increase `J`; otherwise `tau`
/// shrinks and the step is retried. `ctrl` carries the step length in and out.
/// Errors other than stagnation are wrapped in [`Error::Phase`] together with the
/// history recorded so far.
pub fn run_phase(
    disc: Discretization,
    v0: Vec<f64>,
    model: &ModelParams,
    ctrl: &mut StepController,
    opts: &PhaseOptions,
) -> Result<PhaseResult> {
    let mut history = Vec::new();
    let wrap = |history: &mut Vec<IterationRecord>, e: Error| match e {
        e @ Error::Stagnation { .. } => e,
        e => Error::Phase {
            phase: opts.phase,
            history: std::mem::take(history),
            source: Box::new(e),
        },
    };
    model.validate().map_err(|e| wrap(&mut history, e))?;
    ctrl.validate().map_err(|e| wrap(&mut history, e))?;
    opts.validate().map_err(|e| wrap(&mut history, e))?;
    disc.space()
        .check_nodal("initial phase field", &v0)
        .map_err(|e| wrap(&mut history, e))?;
    let result = phase_loop(disc, v0, model, ctrl, opts, &mut history);
    result.map_err(|e| wrap(&mut history, e))
}

fn phase_loop(
    disc: Discretization,
    v0: Vec<f64>,
    model: &ModelParams,
    ctrl: &mut StepController,
    opts: &PhaseOptions,
    history: &mut Vec<IterationRecord>,
) -> Result<PhaseResult> {
    let d0 = model.fict.d0_band;
    let mut st = State::new(disc, v0, model, d0, None)?;
    history.push(IterationRecord {
        iter: 0,
        j: st.eval.total,
        j_previous: st.eval.total,
        misfit: st.eval.misfit,
        reg: st.eval.reg,
        tau: ctrl.tau,
        accepted: true,
        nverts: st.disc.mesh().n_vertices(),
    });
    let (mut accepted, mut refinements, mut fallbacks, mut rejections) =
        (0usize, 0usize, 0usize, 0usize);
    let mut converged = false;
    let mut adapt_enabled = opts.adapt.every > 0;
    while accepted < opts.stop.max_iterations {
        let tau = ctrl.tau;
        let inner = inner_solve(
            st.disc.space(),
            &st.v,
            &st.grad,
            tau,
            &model.phase,
            &st.feasible,
            PDAS_MAX_SWEEPS,
        )?;
        if inner.fallback {
            fallbacks += 1;
        }
        // a Newton failure at the tentative point counts as an increase
        let tentative = match eval_j(&st.disc, &inner.v, model, Some(&st.eval.states)) {
            Ok(e) => Some(e),
            Err(Error::NonConvergence(_)) => None,
            Err(e) => return Err(e),
        };
        let nverts = st.disc.mesh().n_vertices();
        let j_prev = st.eval.total;
        let ok = tentative.as_ref().is_some_and(|e| e.total <= j_prev);
        history.push(IterationRecord {
            iter: accepted + 1,
            j: tentative.as_ref().map_or(f64::INFINITY, |e| e.total),
            j_previous: j_prev,
            misfit: tentative.as_ref().map_or(f64::NAN, |e| e.misfit),
            reg: tentative.as_ref().map_or(f64::NAN, |e| e.reg),
            tau,
            accepted: ok,
            nverts,
        });
        if !ok {
            rejections += 1;
            if !ctrl.shrink() {
                return Err(Error::Stagnation {
                    tau_min: ctrl.tau_min,
                    attempts: rejections,
                    history: std::mem::take(history),
                });
            }
            continue;
        }
        rejections = 0;
        accepted += 1;
        ctrl.grow();
        let mass = st.disc.space().mass();
        let diff: Vec<f64> = inner.v.iter().zip(&st.v).map(|(a, b)| a - b).collect();
        let denom = l2_norm(mass, &st.v);
        let rel = if denom > 0.0 {
            l2_norm(mass, &diff) / denom
        } else {
            l2_norm(mass, &diff)
        };
        st.v = inner.v;
        st.eval = tentative.expect("accepted step has an evaluation");
        if rel < opts.stop.rtol {
            converged = true;
            break;
        }
        if adapt_enabled && accepted % opts.adapt.every == 0 {
            match adapt(st, model, opts, d0) {
                Ok((next, refined)) => {
                    st = next;
                    if refined {
                        refinements += 1;
                    }
                }
                Err((prev, Error::Resource(_))) => {
                    // vertex cap reached: keep the current mesh for the rest of the phase
                    adapt_enabled = false;
                    st = *prev;
                    let adj = adjoint_states(&st.disc, &st.v, model, &st.eval.states)?;
                    st.grad = explicit_gradient(&st.disc, &st.v, &st.eval.states, &adj, model)?;
                }
                Err((_, e)) => return Err(e),
            }
        } else {
            let adj = adjoint_states(&st.disc, &st.v, model, &st.eval.states)?;
            st.grad = explicit_gradient(&st.disc, &st.v, &st.eval.states, &adj, model)?;
        }
    }
    Ok(PhaseResult {
        disc: st.disc,
        v: st.v,
        evaluation: st.eval,
        history: std::mem::take(history),
        accepted,
        converged,
        refinements,
        fallbacks,
    })
}

type AdaptError = (Box<State>, Error);

/// Refines where `|∇v|` is largest and moves the iterate, data and warm starts to
/// the new mesh. Returns the rebuilt state and whether anything was refined.
fn adapt(
    st: State,
    model: &ModelParams,
    opts: &PhaseOptions,
    d0: f64,
) -> std::result::Result<(State, bool), AdaptError> {
    let mesh = st.disc.mesh();
    let marked = match mark_by_gradient_with(mesh, &st.v, opts.adapt.fraction, opts.adapt.h_min) {
        Ok(m) => m,
        Err(e) => return Err((Box::new(st), e)),
    };
    if marked.is_empty() {
        return match rebuild_gradient(st, model) {
            Ok(s) => Ok((s, false)),
            Err(e) => Err(e),
        };
    }
    let ns = st.disc.n_sources();
    let mut fields: Vec<&[f64]> = vec![&st.v];
    fields.extend(st.disc.data().iter().map(|d| d.as_slice()));
    fields.extend(st.eval.states.iter().map(|u| u.as_slice()));
    let ropts = RefineOptions {
        h_min: opts.adapt.h_min,
        vertex_cap: opts.adapt.vertex_cap,
    };
    let (new_mesh, mut out) = match refine_marked_with(mesh, &marked, &fields, &ropts) {
        Ok(r) => r,
        Err(e) => return Err((Box::new(st), e)),
    };
    let warm = out.split_off(1 + ns);
    let data = out.split_off(1);
    let v = out.pop().expect("phase field was transferred");
    let disc = match Discretization::new(new_mesh, st.disc.sources(), data, st.disc.sigma()) {
        Ok(d) => d,
        Err(e) => return Err((Box::new(st), e)),
    };
    match State::new(disc, v, model, d0, Some(&warm)) {
        Ok(s) => Ok((s, true)),
        Err(e) => Err((Box::new(st), e)),
    }
}

fn rebuild_gradient(mut st: State, model: &ModelParams) -> std::result::Result<State, AdaptError> {
    let grad = adjoint_states(&st.disc, &st.v, model, &st.eval.states)
        .and_then(|adj| explicit_gradient(&st.disc, &st.v, &st.eval.states, &adj, model));
    match grad {
        Ok(g) => {
            st.grad = g;
            Ok(st)
        }
        Err(e) => Err((Box::new(st), e)),
    }
}

/// Writes the 7-column history CSV, preceded by an optional `# config_hash` line.
pub fn write_history_csv<W: Write>(
    records: &[IterationRecord],
    config_hash: Option<&str>,
    mut w: W,
) -> Result<()> {
    if let Some(h) = config_hash {
        writeln!(w, "# config_hash = {h}")?;
    }
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.iter, r.j, r.misfit, r.reg, r.tau, r.accepted, r.nverts
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a history CSV. `j_previous` is not stored and comes back as NaN.
pub fn read_history_csv<R: BufRead>(r: R) -> Result<Vec<IterationRecord>> {
    let mut out = Vec::new();
    let mut header = false;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !header {
            if t != HISTORY_HEADER {
                return Err(Error::parse("history", format!("unexpected header {t:?}")));
            }
            header = true;
            continue;
        }
        let ctx = || format!("history line {}", n + 1);
        let f: Vec<&str> = t.split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse(ctx(), "expected 7 columns"));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::parse(ctx(), format!("{s:?}: {e}")))
        };
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::parse(ctx(), format!("{s:?}: {e}")))
        };
        out.push(IterationRecord {
            iter: int(f[0])?,
            j: num(f[1])?,
            j_previous: f64::NAN,
            misfit: num(f[2])?,
            reg: num(f[3])?,
            tau: num(f[4])?,
            accepted: f[5]
                .parse()
                .map_err(|e| Error::parse(ctx(), format!("{:?}: {e}", f[5])))?,
            nverts: int(f[6])?,
        });
    }
    if !header {
        return Err(Error::parse("history", "missing header"));
    }
    Ok(out)
}
