//! Newton solver for `−div(a_δ(v)∇u) + v u³ = f` with homogeneous Neumann data.
//!
//! The coefficient is constant per element, `a_δ` of the mean of the three vertex
//! values of `v`. The reaction term is integrated with the edge-midpoint rule and
//! the Jacobian is the exact derivative of that discrete residual, so Newton
//! converges quadratically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, NewtonFailure, Result};
use crate::fem::{
    assemble_midpoint_mass, assemble_stiffness, element_means, midpoint_moment, midpoint_values,
    norm2, solve_sparse, CsrMatrix, FemSpace,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonParams {
    /// Absolute tolerance on the Euclidean norm of the residual vector.
    pub atol: f64,
    /// Tolerance relative to the norm of the load vector.
    pub rtol: f64,
    pub max_iterations: usize,
    /// Initial step factor; halved until the residual decreases.
    pub damping: f64,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams {
            atol: 1e-10,
            rtol: 1e-10,
            max_iterations: 50,
            damping: 1.0,
        }
    }
}

impl NewtonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.atol >= 0.0 && self.rtol >= 0.0 && self.atol + self.rtol > 0.0) {
            return Err(Error::validation(
                "newton tolerances must be nonnegative and not both zero",
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation(
                "newton.max_iterations must be at least 1",
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::validation(format!(
                "newton.damping = {} not in (0, 1]",
                self.damping
            )));
        }
        Ok(())
    }
}

/// Fictitious-material parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FictitiousParams {
    /// Conductivity assigned to the cavity, in (0, 1).
    pub delta: f64,
    /// Width of the boundary band where `v` is pinned to 1.
    pub d0_band: f64,
}

impl FictitiousParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::validation(format!(
                "delta = {} not in (0, 1)",
                self.delta
            )));
        }
        if !(self.d0_band > 0.0) {
            return Err(Error::validation(format!(
                "d0_band = {} must be positive",
                self.d0_band
            )));
        }
        Ok(())
    }

    pub fn a_delta(&self, v: f64) -> f64 {
        self.delta + (1.0 - self.delta) * v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Per-element conductivity `a_δ(mean v)`.
pub fn element_coefficient(space: &FemSpace, v: &[f64], fict: &FictitiousParams) -> Vec<f64> {
    element_means(space.mesh(), v)
        .into_iter()
        .map(|m| fict.a_delta(m))
        .collect()
}

struct Problem<'a> {
    space: &'a FemSpace,
    stiffness: CsrMatrix,
    /// Reaction weight `v` at the edge midpoints of every element.
    reaction: Vec<[f64; 3]>,
    load: &'a [f64],
}

impl Problem<'_> {
    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let um = midpoint_values(self.space.mesh(), u);
        let g: Vec<[f64; 3]> = um
            .iter()
            .zip(&self.reaction)
            .map(|(m, w)| [0, 1, 2].map(|q| w[q] * m[q].powi(3)))
            .collect();
        let nonlinear = midpoint_moment(self.space, &g).expect("one entry per element");
        let au = self.stiffness.mul_vec(u);
        au.iter()
            .zip(&nonlinear)
            .zip(self.load)
            .map(|((a, n), f)| a + n - f)
            .collect()
    }

    fn jacobian(&self, u: &[f64]) -> CsrMatrix {
        let um = midpoint_values(self.space.mesh(), u);
        let w: Vec<[f64; 3]> = um
            .iter()
            .zip(&self.reaction)
            .map(|(m, r)| [0, 1, 2].map(|q| 3.0 * r[q] * m[q] * m[q]))
            .collect();
        let mut j = assemble_midpoint_mass(self.space, &w).expect("one entry per element");
        j.add_scaled(1.0, &self.stiffness);
        j
    }

    fn solve(&self, initial: Option<&[f64]>, newton: &NewtonParams) -> Result<ForwardSolution> {
        newton.validate()?;
        let n = self.space.n_dofs();
        let mut u = match initial {
            Some(u0) => {
                self.space.check_nodal("initial guess", u0)?;
                u0.to_vec()
            }
            None => {
                let mean_f = self.load.iter().sum::<f64>() / self.space.mesh().total_area();
                vec![mean_f.max(0.0).cbrt(); n]
            }
        };
        let tol = newton.atol + newton.rtol * norm2(self.load);
        let mut r = self.residual(&u);
        let mut rnorm = norm2(&r);
        let mut history = vec![rnorm];
        let fail = |history: Vec<f64>, iterations| {
            Error::NonConvergence(NewtonFailure {
                residual_history: history,
                iterations,
            })
        };
        for it in 0..newton.max_iterations {
            if rnorm <= tol {
                return Ok(ForwardSolution {
                    u,
                    iterations: it,
                    residual_history: history,
                });
            }
            if !rnorm.is_finite() {
                return Err(fail(history, it));
            }
            let step = solve_sparse(&self.jacobian(&u), &r)?;
            let mut lambda = newton.damping;
            loop {
                let trial: Vec<f64> = u.iter().zip(&step).map(|(x, s)| x - lambda * s).collect();
                let rt = self.residual(&trial);
                let tnorm = norm2(&rt);
                if tnorm < rnorm || tnorm <= tol {
                    u = trial;
                    r = rt;
                    rnorm = tnorm;
                    break;
                }
                lambda *= 0.5;
                if lambda < 1e-10 {
                    return Err(fail(history, it + 1));
                }
            }
            history.push(rnorm);
        }
        if rnorm <= tol {
            Ok(ForwardSolution {
                u,
                iterations: newton.max_iterations,
                residual_history: history,
            })
        } else {
            Err(fail(history, newton.max_iterations))
        }
    }
}

fn check_unit_interval(v: &[f64]) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::validation(format!(
            "phase field value {} at vertex {i} outside [0, 1]",
            v[i]
        )));
    }
    Ok(())
}

/// Solves the fictitious-material problem for phase field `v` and load vector `load`
/// (`∫ f φ_i`). `initial` warm-starts Newton; otherwise the constant `(mean f)^{1/3}` is used.
pub fn solve_forward(
    space: &FemSpace,
    v: &[f64],
    fict: &FictitiousParams,
    load: &[f64],
    newton: &NewtonParams,
    initial: Option<&[f64]>,
) -> Result<ForwardSolution> {
    fict.validate()?;
    space.check_nodal("phase field", v)?;
    space.check_nodal("load vector", load)?;
    check_unit_interval(v)?;
    let problem = Problem {
        space,
        stiffness: assemble_stiffness(space, &element_coefficient(space, v, fict))?,
        reaction: midpoint_values(space.mesh(), v),
        load,
    };
    problem.solve(initial, newton)
}

/// Solves `−Δu + u³ = f` on a mesh with the cavity cut out. Both the outer and the
/// cavity boundaries carry the natural condition, so no boundary terms appear.
pub fn solve_cavity_reference(
    cavity_space: &FemSpace,
    load: &[f64],
    newton: &NewtonParams,
) -> Result<ForwardSolution> {
    cavity_space.check_nodal("load vector", load)?;
    let problem = Problem {
        space: cavity_space,
        stiffness: cavity_space.stiffness().clone(),
        reaction: vec![[1.0; 3]; cavity_space.mesh().n_triangles()],
        load,
    };
    problem.solve(None, newton)
}

/// Residual vector of the discrete forward equation.
pub fn forward_residual(
    space: &FemSpace,
    v: &[f64],
    fict: &FictitiousParams,
    load: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    let problem = Problem {
        space,
        stiffness: assemble_stiffness(space, &element_coefficient(space, v, fict))?,
        reaction: midpoint_values(space.mesh(), v),
        load,
    };
    Ok(problem.residual(u))
}

/// `∫ a_δ(v)|∇u|²`.
pub fn gradient_energy(
    space: &FemSpace,
    v: &[f64],
    fict: &FictitiousParams,
    u: &[f64],
) -> Result<f64> {
    let a = assemble_stiffness(space, &element_coefficient(space, v, fict))?;
    Ok(a.bilinear(u, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_load;
    use crate::mesh::boundary_trace_interpolate;
    use crate::mesh::{generate_cavity_mesh, generate_disk_mesh, CavitySpec, Mesh};

    fn fict(delta: f64) -> FictitiousParams {
        FictitiousParams {
            delta,
            d0_band: 0.3,
        }
    }

    fn bump(p: [f64; 2]) -> f64 {
        (-((p[0] - 0.9).powi(2) + p[1].powi(2)) / 0.07f64.powi(2)).exp()
    }

    #[test]
    fn constant_solutions() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.1).unwrap());
        let v = vec![1.0; space.n_dofs()];
        for (c, expect) in [(1.0, 1.0), (8.0, 2.0)] {
            for delta in [0.5, 1e-3] {
                let load = assemble_load(&space, |_| c);
                // start away from the answer so Newton has work to do
                let u0 = vec![0.3; space.n_dofs()];
                let sol = solve_forward(
                    &space,
                    &v,
                    &fict(delta),
                    &load,
                    &NewtonParams::default(),
                    Some(&u0),
                )
                .unwrap();
                assert!(sol.u.iter().all(|x| (x - expect).abs() < 1e-8));
                assert!(sol.iterations > 1);
            }
        }
    }

    #[test]
    fn zero_load_gives_zero() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.2).unwrap());
        let v = vec![1.0; space.n_dofs()];
        let load = vec![0.0; space.n_dofs()];
        let sol = solve_forward(
            &space,
            &v,
            &fict(0.1),
            &load,
            &NewtonParams::default(),
            None,
        )
        .unwrap();
        assert!(sol.u.iter().all(|&x| x == 0.0));
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn bump_solution_bounded_and_quadratic_tail() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.05).unwrap());
        let load = assemble_load(&space, bump);
        let v: Vec<f64> = space
            .mesh()
            .vertices()
            .iter()
            .map(|p| if p[0].hypot(p[1]) < 0.3 { 0.0 } else { 1.0 })
            .collect();
        let sol = solve_forward(
            &space,
            &v,
            &fict(1e-3),
            &load,
            &NewtonParams::default(),
            None,
        )
        .unwrap();
        let max = sol.u.iter().copied().fold(f64::MIN, f64::max);
        let min = sol.u.iter().copied().fold(f64::MAX, f64::min);
        assert!(max <= 1.05 && min >= -0.01, "u in [{min}, {max}]");
        // quadratic convergence once the residual is small
        let h = &sol.residual_history;
        let ratios: Vec<f64> = h
            .windows(2)
            .filter(|w| w[0] < 1e-3 && w[1] > 1e-14)
            .map(|w| w[1] / (w[0] * w[0]))
            .collect();
        assert!(!ratios.is_empty(), "history {h:?}");
        assert!(ratios.iter().all(|&c| c < 1e3), "history {h:?}");
    }

    #[test]
    fn rejects_invalid_input() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.3).unwrap());
        let n = space.n_dofs();
        let load = vec![0.1; n];
        let newton = NewtonParams::default();
        let mut v = vec![1.0; n];
        v[0] = 1.2;
        assert!(matches!(
            solve_forward(&space, &v, &fict(0.1), &load, &newton, None),
            Err(Error::Validation(_))
        ));
        let v = vec![1.0; n];
        assert!(solve_forward(&space, &v, &fict(0.0), &load, &newton, None).is_err());
        let bad = NewtonParams {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(solve_forward(&space, &v, &fict(0.1), &load, &bad, None).is_err());
    }

    #[test]
    fn newton_failure_carries_history() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.2).unwrap());
        let v = vec![1.0; space.n_dofs()];
        let load = assemble_load(&space, |_| 8.0);
        let one_step = NewtonParams {
            max_iterations: 1,
            ..Default::default()
        };
        match solve_forward(
            &space,
            &v,
            &fict(0.1),
            &load,
            &one_step,
            Some(&vec![0.1; space.n_dofs()]),
        ) {
            Err(Error::NonConvergence(f)) => {
                assert_eq!(f.iterations, 1);
                assert_eq!(f.residual_history.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cavity_reference_constant_and_nonnegative() {
        let mesh =
            generate_cavity_mesh(1.0, &CavitySpec::disk([0.0, 0.0], 0.3), 0.05, 0.3).unwrap();
        let space = FemSpace::new(mesh);
        let load = assemble_load(&space, |_| 1.0);
        let sol = solve_cavity_reference(&space, &load, &NewtonParams::default()).unwrap();
        assert!(sol.u.iter().all(|x| (x - 1.0).abs() < 1e-8));
        let load = assemble_load(&space, bump);
        let sol = solve_cavity_reference(&space, &load, &NewtonParams::default()).unwrap();
        assert!(sol.u.iter().all(|&x| x >= -1e-10));
    }

    #[test]
    fn shrinking_cavity_approaches_full_disk_trace() {
        let h = 0.025;
        let disk = FemSpace::new(generate_disk_mesh(1.0, h).unwrap());
        let full =
            solve_cavity_reference(&disk, &assemble_load(&disk, bump), &NewtonParams::default())
                .unwrap();
        let trace_error = |mesh: Mesh| {
            let space = FemSpace::new(mesh);
            let sol = solve_cavity_reference(
                &space,
                &assemble_load(&space, bump),
                &NewtonParams::default(),
            )
            .unwrap();
            let tr = boundary_trace_interpolate(space.mesh(), &sol.u, disk.mesh()).unwrap();
            tr.vertices
                .iter()
                .zip(&tr.values)
                .map(|(&i, &x)| (x - full.u[i]).abs())
                .fold(0.0, f64::max)
        };
        // cavities near the source so the effect is well above the discretization floor
        let errs: Vec<f64> = [0.3, 0.15, 0.075]
            .iter()
            .map(|&r| {
                trace_error(
                    generate_cavity_mesh(1.0, &CavitySpec::disk([0.3, 0.0], r), h, 0.1).unwrap(),
                )
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn energy_is_delta_robust() {
        let space = FemSpace::new(generate_disk_mesh(1.0, 0.05).unwrap());
        let load = assemble_load(&space, bump);
        let v: Vec<f64> = space
            .mesh()
            .vertices()
            .iter()
            .map(|p| ((p[0].hypot(p[1]) - 0.3) / 0.1).clamp(0.0, 1.0))
            .collect();
        let energies: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&d| {
                let sol =
                    solve_forward(&space, &v, &fict(d), &load, &NewtonParams::default(), None)
                        .unwrap();
                gradient_energy(&space, &v, &fict(d), &sol.u).unwrap()
            })
            .collect();
        let (lo, hi) = energies
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &e| (a.min(e), b.max(e)));
        assert!((hi - lo) / lo < 0.5, "{energies:?}");
    }
}
