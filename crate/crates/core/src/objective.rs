//! Relaxed functional `J = misfit + α·GL(v)` and its derivative.
//!
//! The misfit averages `½∫_Σ (u^i − u_meas^i)²` over sources. The Ginzburg–Landau
//! term is `∫ γε|∇v|² + (γ/ε) W(v)`, with `W` integrated by the edge-midpoint rule.
//! Gradients are returned as weak-form vectors `g_i = ∂J/∂v_i`, so the directional
//! derivative along a nodal direction `θ` is `g·θ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoint, AdjointWeighting};
use crate::data::GaussianSource;
use crate::error::{Error, Result};
use crate::fem::{
    assemble_boundary_mass, assemble_load, dot, midpoint_moment, midpoint_values, CsrMatrix,
    FemSpace, Sigma,
};
use crate::forward::{solve_forward, FictitiousParams, NewtonParams};
use crate::mesh::Mesh;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// `W(s) = s²(1 − s)²`
    DoubleWell,
    /// `W(s) = s(1 − s)`
    #[default]
    Convex,
}

impl Potential {
    pub fn w(self, s: f64) -> f64 {
        match self {
            Potential::DoubleWell => s * s * (1.0 - s) * (1.0 - s),
            Potential::Convex => s * (1.0 - s),
        }
    }

    pub fn dw(self, s: f64) -> f64 {
        match self {
            Potential::DoubleWell => 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
            Potential::Convex => 1.0 - 2.0 * s,
        }
    }

    /// `c_W = 2∫₀¹ √W`.
    pub fn c_w(self) -> f64 {
        match self {
            Potential::DoubleWell => 1.0 / 3.0,
            Potential::Convex => PI / 4.0,
        }
    }

    /// `γ = 1 / c_W`, which makes the sharp-interface limit of the energy the perimeter.
    pub fn default_gamma(self) -> f64 {
        1.0 / self.c_w()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseFieldParams {
    pub epsilon: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub potential: Potential,
}

impl PhaseFieldParams {
    /// Parameters with the normalizing `γ` of `potential`.
    pub fn new(epsilon: f64, alpha: f64, potential: Potential) -> Self {
        PhaseFieldParams {
            epsilon,
            gamma: potential.default_gamma(),
            alpha,
            potential,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::validation(format!(
                "gamma = {} must be positive",
                self.gamma
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation(format!(
                "alpha = {} must be nonnegative",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Everything that defines the discrete functional apart from the mesh and data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub phase: PhaseFieldParams,
    pub fict: FictitiousParams,
    pub newton: NewtonParams,
    pub weighting: AdjointWeighting,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.phase.validate()?;
        self.fict.validate()?;
        self.newton.validate()
    }
}

/// `∫ g` for `g` given at the edge midpoints.
pub fn midpoint_integral(space: &FemSpace, g: &[[f64; 3]]) -> f64 {
    space
        .mesh()
        .element_areas()
        .iter()
        .zip(g)
        .map(|(&a, gk)| a / 3.0 * (gk[0] + gk[1] + gk[2]))
        .sum()
}

/// Ginzburg–Landau energy `∫ γε|∇v|² + (γ/ε) W(v)`.
pub fn gl_energy(space: &FemSpace, v: &[f64], params: &PhaseFieldParams) -> f64 {
    let (eps, gamma) = (params.epsilon, params.gamma);
    let wm: Vec<[f64; 3]> = midpoint_values(space.mesh(), v)
        .into_iter()
        .map(|m| m.map(|s| params.potential.w(s)))
        .collect();
    gamma * eps * space.stiffness().bilinear(v, v) + gamma / eps * midpoint_integral(space, &wm)
}

/// `(1/N) Σ_i ½ (u^i − d^i)ᵀ B (u^i − d^i)` for nodal traces and data.
pub fn misfit(boundary_mass: &CsrMatrix, traces: &[Vec<f64>], data: &[Vec<f64>]) -> Result<f64> {
    if traces.len() != data.len() || traces.is_empty() {
        return Err(Error::validation(format!(
            "{} traces for {} measurements",
            traces.len(),
            data.len()
        )));
    }
    let mut total = 0.0;
    for (u, d) in traces.iter().zip(data) {
        if u.len() != d.len() || u.len() != boundary_mass.dimension() {
            return Err(Error::validation("trace and measurement lengths differ"));
        }
        let r: Vec<f64> = u.iter().zip(d).map(|(a, b)| a - b).collect();
        total += 0.5 * boundary_mass.bilinear(&r, &r);
    }
    Ok(total / traces.len() as f64)
}

/// A mesh together with the per-source load vectors, the nodal data and Σ.
#[derive(Debug)]
pub struct Discretization {
    space: FemSpace,
    sources: Vec<GaussianSource>,
    loads: Vec<Vec<f64>>,
    data: Vec<Vec<f64>>,
    sigma: Sigma,
    boundary_mass: CsrMatrix,
}

impl Discretization {
    /// `data[i]` holds the measurements of source `i` as a nodal vector; entries off Σ are ignored.
    pub fn new(
        mesh: Mesh,
        sources: &[GaussianSource],
        data: Vec<Vec<f64>>,
        sigma: Sigma,
    ) -> Result<Self> {
        if sources.is_empty() || sources.len() != data.len() {
            return Err(Error::validation(format!(
                "{} sources for {} measurement vectors",
                sources.len(),
                data.len()
            )));
        }
        let space = FemSpace::new(mesh);
        for d in &data {
            space.check_nodal("measurement vector", d)?;
        }
        let boundary_mass = assemble_boundary_mass(&space, &sigma)?;
        let loads = par::map_slice(sources, |s| assemble_load(&space, |p| s.eval(p)));
        Ok(Discretization {
            space,
            sources: sources.to_vec(),
            loads,
            data,
            sigma,
            boundary_mass,
        })
    }

    pub fn space(&self) -> &FemSpace {
        &self.space
    }

    pub fn mesh(&self) -> &Mesh {
        self.space.mesh()
    }

    pub fn sources(&self) -> &[GaussianSource] {
        &self.sources
    }

    pub fn loads(&self) -> &[Vec<f64>] {
        &self.loads
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma
    }

    pub fn boundary_mass(&self) -> &CsrMatrix {
        &self.boundary_mass
    }

    pub fn n_sources(&self) -> usize {
        self.loads.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub total: f64,
    pub misfit: f64,
    pub reg: f64,
    /// Forward states, one per source.
    pub states: Vec<Vec<f64>>,
}

/// Evaluates `J` at `v`. `warm` supplies Newton initial guesses per source; a solve that
/// fails from a warm start is retried from the default guess.
pub fn eval_j(
    disc: &Discretization,
    v: &[f64],
    model: &ModelParams,
    warm: Option<&[Vec<f64>]>,
) -> Result<Evaluation> {
    model.validate()?;
    disc.space.check_nodal("phase field", v)?;
    if let Some(w) = warm {
        if w.len() != disc.n_sources() {
            return Err(Error::validation("one warm start per source required"));
        }
    }
    let states = par::try_map_range(disc.n_sources(), |i| {
        let solve = |init: Option<&[f64]>| {
            solve_forward(
                &disc.space,
                v,
                &model.fict,
                &disc.loads[i],
                &model.newton,
                init,
            )
        };
        match warm {
            Some(w) => solve(Some(&w[i])).or_else(|e| match e {
                Error::NonConvergence(_) => solve(None),
                e => Err(e),
            }),
            None => solve(None),
        }
        .map(|s| s.u)
    })?;
    let misfit = misfit(&disc.boundary_mass, &states, &disc.data)?;
    let reg = model.phase.alpha * gl_energy(&disc.space, v, &model.phase);
    Ok(Evaluation {
        total: misfit + reg,
        misfit,
        reg,
        states,
    })
}

/// Adjoint states for the forward states of an evaluation.
pub fn adjoint_states(
    disc: &Discretization,
    v: &[f64],
    model: &ModelParams,
    states: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    par::try_map_range(disc.n_sources(), |i| {
        let r: Vec<f64> = states[i]
            .iter()
            .zip(&disc.data[i])
            .map(|(a, b)| a - b)
            .collect();
        solve_adjoint(
            &disc.space,
            v,
            &model.fict,
            &states[i],
            &r,
            &disc.boundary_mass,
            model.weighting,
        )
    })
}

/// Explicit part of `∂J/∂v_i`: the misfit sensitivity averaged over sources plus
/// `(αγ/ε) ∫ W'(v) φ_i`. The gradient term `2αγε A v` is left to the caller.
pub fn explicit_gradient(
    disc: &Discretization,
    v: &[f64],
    states: &[Vec<f64>],
    adjoints: &[Vec<f64>],
    model: &ModelParams,
) -> Result<Vec<f64>> {
    let space = &disc.space;
    space.check_nodal("phase field", v)?;
    if states.len() != disc.n_sources() || adjoints.len() != disc.n_sources() {
        return Err(Error::validation(
            "one forward and one adjoint state per source required",
        ));
    }
    let mesh = space.mesh();
    let fict = &model.fict;
    let react = model.weighting.gradient_factor(fict);
    let per_source = par::try_map_range(disc.n_sources(), |i| -> Result<Vec<f64>> {
        let (u, p) = (&states[i], &adjoints[i]);
        space.check_nodal("forward state", u)?;
        space.check_nodal("adjoint state", p)?;
        let mut g = vec![0.0; space.n_dofs()];
        // conductivity: a_K depends on v through the element mean
        for (k, t) in mesh.triangles().iter().enumerate() {
            let gu = space.element_gradient(k, u);
            let gp = space.element_gradient(k, p);
            let share =
                (1.0 - fict.delta) * (gu[0] * gp[0] + gu[1] * gp[1]) * mesh.element_areas()[k]
                    / 3.0;
            for &a in t {
                g[a] += share;
            }
        }
        let um = midpoint_values(mesh, u);
        let pm = midpoint_values(mesh, p);
        let up: Vec<[f64; 3]> = um
            .iter()
            .zip(&pm)
            .map(|(uk, pk)| [0, 1, 2].map(|q| react * uk[q].powi(3) * pk[q]))
            .collect();
        for (gi, r) in g.iter_mut().zip(midpoint_moment(space, &up)?) {
            *gi += r;
        }
        Ok(g)
    })?;
    let n = disc.n_sources() as f64;
    let mut g = vec![0.0; space.n_dofs()];
    for gs in &per_source {
        for (a, b) in g.iter_mut().zip(gs) {
            *a -= b / n;
        }
    }
    let phase = &model.phase;
    let dwm: Vec<[f64; 3]> = midpoint_values(mesh, v)
        .into_iter()
        .map(|m| m.map(|s| phase.potential.dw(s)))
        .collect();
    let scale = phase.alpha * phase.gamma / phase.epsilon;
    for (a, b) in g.iter_mut().zip(midpoint_moment(space, &dwm)?) {
        *a += scale * b;
    }
    Ok(g)
}

/// The gradient term treated implicitly by the inner solve, `2αγε A v`.
pub fn implicit_gradient(space: &FemSpace, v: &[f64], phase: &PhaseFieldParams) -> Vec<f64> {
    let c = 2.0 * phase.alpha * phase.gamma * phase.epsilon;
    space
        .stiffness()
        .mul_vec(v)
        .into_iter()
        .map(|x| c * x)
        .collect()
}

/// Full derivative `∂J/∂v_i` at `v`, solving the forward and adjoint problems.
pub fn full_gradient(
    disc: &Discretization,
    v: &[f64],
    model: &ModelParams,
) -> Result<(Evaluation, Vec<f64>)> {
    let eval = eval_j(disc, v, model, None)?;
    let adj = adjoint_states(disc, v, model, &eval.states)?;
    let mut g = explicit_gradient(disc, v, &eval.states, &adj, model)?;
    for (a, b) in g
        .iter_mut()
        .zip(implicit_gradient(&disc.space, v, &model.phase))
    {
        *a += b;
    }
    Ok((eval, g))
}

/// `J'(v)[θ]` for a weak-form gradient.
pub fn directional_derivative(gradient: &[f64], theta: &[f64]) -> f64 {
    dot(gradient, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GaussianSource;
    use crate::mesh::generate_disk_mesh;
    use approx::assert_relative_eq;

    fn integrate(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        // composite midpoint rule; √W has integrable endpoint singularities in its derivative only
        let h = 1.0 / n as f64;
        (0..n).map(|i| f((i as f64 + 0.5) * h) * h).sum()
    }

    #[test]
    fn normalization_constants_match_quadrature() {
        for p in [Potential::Convex, Potential::DoubleWell] {
            let c = 2.0 * integrate(|s| p.w(s).sqrt(), 2_000_000);
            assert_relative_eq!(c, p.c_w(), max_relative = 1e-8);
        }
        assert_relative_eq!(Potential::Convex.default_gamma(), 4.0 / PI);
        assert_relative_eq!(Potential::DoubleWell.default_gamma(), 3.0);
    }

    #[test]
    fn potential_derivatives() {
        for p in [Potential::Convex, Potential::DoubleWell] {
            for s in [0.1, 0.37, 0.5, 0.9] {
                let fd = (p.w(s + 1e-6) - p.w(s - 1e-6)) / 2e-6;
                assert_relative_eq!(p.dw(s), fd, epsilon = 1e-9);
            }
            assert_eq!(p.w(0.0), 0.0);
            assert_eq!(p.w(1.0), 0.0);
        }
    }

    #[test]
    fn gl_energy_values() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.05).unwrap());
        let n = space.n_dofs();
        for pot in [Potential::Convex, Potential::DoubleWell] {
            let params = PhaseFieldParams::new(0.1, 1.0, pot);
            assert!(gl_energy(&space, &vec![0.0; n], &params).abs() < 1e-12);
            assert!(gl_energy(&space, &vec![1.0; n], &params).abs() < 1e-12);
        }
        let params = PhaseFieldParams::new(0.1, 1.0, Potential::Convex);
        let e = gl_energy(&space, &vec![0.5; n], &params);
        // (γ/ε)·¼·|Ω_h|, with |Ω_h| → π
        assert_relative_eq!(
            e,
            params.gamma / 0.1 * 0.25 * space.mesh().total_area(),
            max_relative = 1e-12
        );
        assert!((e - 10.0).abs() < 0.01);
    }

    #[test]
    fn misfit_values() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.02).unwrap());
        let n = space.n_dofs();
        let b = assemble_boundary_mass(&space, &Sigma::Full).unwrap();
        let u = vec![vec![0.4; n]];
        assert_eq!(misfit(&b, &u, &u).unwrap(), 0.0);
        let m = misfit(&b, &[vec![1.0; n]], &[vec![0.0; n]]).unwrap();
        assert!((m - PI).abs() < 1e-3);
        let two = misfit(
            &b,
            &[vec![1.0; n], vec![0.0; n]],
            &[vec![0.0; n], vec![0.0; n]],
        )
        .unwrap();
        assert_relative_eq!(two, m / 2.0);
        assert!(misfit(&b, &[vec![1.0; n]], &[]).is_err());
    }

    fn setup(h: f64) -> (Discretization, ModelParams) {
        let mesh = generate_disk_mesh(1.0, h).unwrap();
        let sources: Vec<GaussianSource> = (1..=2)
            .map(|i| GaussianSource::on_ring(0.9, i as f64 * PI / 2.0, 0.1, 1.0))
            .collect();
        let data: Vec<Vec<f64>> = (0..2)
            .map(|i| {
                mesh.vertices()
                    .iter()
                    .map(|p| 0.01 * (i as f64 + 1.0) * (1.0 + p[0]))
                    .collect()
            })
            .collect();
        let disc = Discretization::new(mesh, &sources, data, Sigma::Full).unwrap();
        let model = ModelParams {
            phase: PhaseFieldParams::new(0.1, 1e-3, Potential::Convex),
            fict: FictitiousParams {
                delta: 1e-2,
                d0_band: 0.3,
            },
            newton: NewtonParams::default(),
            weighting: AdjointWeighting::Exact,
        };
        (disc, model)
    }

    #[test]
    fn alpha_zero_total_is_misfit() {
        let (disc, mut model) = setup(0.1);
        model.phase.alpha = 0.0;
        let v = vec![0.7; disc.space().n_dofs()];
        let e = eval_j(&disc, &v, &model, None).unwrap();
        assert_eq!(e.total, e.misfit);
        assert_eq!(e.reg, 0.0);
    }

    #[test]
    fn explicit_gradient_of_regularizer_only() {
        let (disc, model) = setup(0.1);
        let n = disc.space().n_dofs();
        let zeros = vec![vec![0.0; n]; disc.n_sources()];
        let g = explicit_gradient(&disc, &vec![0.5; n], &zeros, &zeros, &model).unwrap();
        assert!(g.iter().all(|&x| x.abs() < 1e-15));
        let g = explicit_gradient(&disc, &vec![0.0; n], &zeros, &zeros, &model).unwrap();
        let scale = model.phase.alpha * model.phase.gamma / model.phase.epsilon;
        let weak_one = space_integrals(disc.space());
        for (a, b) in g.iter().zip(weak_one) {
            assert_relative_eq!(*a, scale * b, max_relative = 1e-12);
        }
    }

    fn space_integrals(space: &FemSpace) -> Vec<f64> {
        space.mass().mul_vec(&vec![1.0; space.n_dofs()])
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (disc, model) = setup(0.1);
        let mesh = disc.mesh();
        let v: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| {
                let r = p[0].hypot(p[1]);
                if r >= 0.7 {
                    1.0
                } else {
                    0.2 + 0.5 * r + 0.1 * p[1]
                }
            })
            .collect();
        let theta: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| {
                if p[0].hypot(p[1]) >= 0.7 {
                    0.0
                } else {
                    (3.0 * p[0]).sin() * (2.0 * p[1]).cos()
                }
            })
            .collect();
        let (_, g) = full_gradient(&disc, &v, &model).unwrap();
        let analytic = directional_derivative(&g, &theta);
        let j = |t: f64| {
            let vt: Vec<f64> = v.iter().zip(&theta).map(|(a, b)| a + t * b).collect();
            eval_j(&disc, &vt, &model, None).unwrap().total
        };
        let best = [1e-4, 1e-5, 1e-6, 1e-7]
            .iter()
            .map(|&t| ((j(t) - j(-t)) / (2.0 * t) - analytic).abs() / analytic.abs())
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-6, "relative error {best}");
    }
}
