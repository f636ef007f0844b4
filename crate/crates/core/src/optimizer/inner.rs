use super::FeasibleSet;
use crate::error::{Error, Result};
use crate::fem::{CsrMatrix, Factorization, FemSpace};
use crate::objective::PhaseFieldParams;

pub const PDAS_MAX_SWEEPS: usize = 50;

const ACTIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub v: Vec<f64>,
    pub sweeps: usize,
    /// Set when the active set kept changing and the step was replaced by a
    /// projected-gradient step.
    pub fallback: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Free,
    Lower,
    Upper,
    Pinned,
}

/// Minimizes `½τ⁻¹‖v − v_k‖²_M + g·(v − v_k) + αγε vᵀAv` over the feasible set by a
/// primal-dual active set iteration. `g` is the explicit gradient in weak form.
pub fn inner_solve(
    space: &FemSpace,
    v_k: &[f64],
    g_explicit: &[f64],
    tau: f64,
    phase: &PhaseFieldParams,
    feasible: &FeasibleSet,
    max_sweeps: usize,
) -> Result<InnerOutcome> {
    space.check_nodal("iterate", v_k)?;
    space.check_nodal("explicit gradient", g_explicit)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::validation(format!("tau = {tau} must be positive")));
    }
    if feasible.pinned().len() != v_k.len() {
        return Err(Error::validation("feasible set does not match the mesh"));
    }
    let n = v_k.len();
    let mass = space.mass();
    let c = 2.0 * phase.alpha * phase.gamma * phase.epsilon;
    let k = mass.combine(1.0 / tau, space.stiffness(), c);
    let mv = mass.mul_vec(v_k);
    let b: Vec<f64> = mv
        .iter()
        .zip(g_explicit)
        .map(|(m, g)| m / tau - g)
        .collect();
    let diag = k.diagonal();

    let mut v = v_k.to_vec();
    let mut state: Vec<State> = feasible
        .pinned()
        .iter()
        .map(|&p| if p { State::Pinned } else { State::Free })
        .collect();
    let mut first = true;
    for sweep in 1..=max_sweeps {
        // r = b − Kv is the negative gradient of the quadratic; it vanishes on free nodes
        let kv = k.mul_vec(&v);
        let next: Vec<State> = (0..n)
            .map(|i| {
                if state[i] == State::Pinned {
                    return State::Pinned;
                }
                let trial = v[i] + (b[i] - kv[i]) / diag[i];
                // roundoff-sized excursions keep the previous state, so the sweep
                // cannot cycle on a node sitting exactly at a bound
                if trial < -ACTIVE_TOL {
                    State::Lower
                } else if trial > 1.0 + ACTIVE_TOL {
                    State::Upper
                } else if trial.abs() <= ACTIVE_TOL && state[i] == State::Lower {
                    State::Lower
                } else if (trial - 1.0).abs() <= ACTIVE_TOL && state[i] == State::Upper {
                    State::Upper
                } else {
                    State::Free
                }
            })
            .collect();
        if !first && next == state {
            feasible.project(&mut v);
            return Ok(InnerOutcome {
                v,
                sweeps: sweep - 1,
                fallback: false,
            });
        }
        first = false;
        state = next;
        v = solve_with_fixed(&k, &b, &state)?;
    }
    let mut g_full = g_explicit.to_vec();
    for (a, s) in g_full.iter_mut().zip(space.stiffness().mul_vec(v_k)) {
        *a += c * s;
    }
    let v = projected_gradient_step(space, v_k, &g_full, tau, feasible)?;
    Ok(InnerOutcome {
        v,
        sweeps: max_sweeps,
        fallback: true,
    })
}

fn solve_with_fixed(k: &CsrMatrix, b: &[f64], state: &[State]) -> Result<Vec<f64>> {
    let value = |s: State| match s {
        State::Lower => Some(0.0),
        State::Upper | State::Pinned => Some(1.0),
        State::Free => None,
    };
    let fixed: Vec<bool> = state.iter().map(|&s| s != State::Free).collect();
    let x_fixed: Vec<f64> = state.iter().map(|&s| value(s).unwrap_or(0.0)).collect();
    let kx = k.mul_vec(&x_fixed);
    let rhs: Vec<f64> = (0..b.len())
        .map(|i| if fixed[i] { x_fixed[i] } else { b[i] - kx[i] })
        .collect();
    let reduced = k.eliminate(&fixed);
    Factorization::new(&reduced)?.solve(&rhs)
}

/// `clamp(v_k − τ M⁻¹ g)` with the band reset to 1, for a full gradient `g` in weak form.
pub fn projected_gradient_step(
    space: &FemSpace,
    v_k: &[f64],
    full_gradient: &[f64],
    tau: f64,
    feasible: &FeasibleSet,
) -> Result<Vec<f64>> {
    space.check_nodal("iterate", v_k)?;
    space.check_nodal("gradient", full_gradient)?;
    if full_gradient.iter().all(|&g| g == 0.0) {
        let mut v = v_k.to_vec();
        feasible.project(&mut v);
        return Ok(v);
    }
    let riesz = Factorization::new(space.mass())?.solve(full_gradient)?;
    let mut v: Vec<f64> = v_k.iter().zip(&riesz).map(|(v, r)| v - tau * r).collect();
    feasible.project(&mut v);
    Ok(v)
}
