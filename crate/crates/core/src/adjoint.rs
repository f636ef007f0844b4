//! Linear adjoint problem for the boundary misfit.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::{
    assemble_midpoint_mass, assemble_stiffness, midpoint_values, solve_sparse, CsrMatrix, FemSpace,
};
use crate::forward::{element_coefficient, FictitiousParams};

/// Weight of the zero-order adjoint term and the matching reaction term of the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointWeighting {
    /// `3 v u²`, the linearization of the forward reaction `v u³`. The gradient term is
    /// `u³ p`. This is the exact derivative of the discrete functional.
    #[default]
    Exact,
    /// `3 a_δ(v) u²` in the adjoint and `(1 − δ) u³ p` in the gradient.
    Conductivity,
}

impl AdjointWeighting {
    /// Adjoint reaction weight at a point where the phase field is `v`.
    pub fn reaction_weight(self, v: f64, fict: &FictitiousParams) -> f64 {
        match self {
            AdjointWeighting::Exact => v,
            AdjointWeighting::Conductivity => fict.a_delta(v),
        }
    }

    /// Factor in front of the `u³ p` term of the gradient.
    pub fn gradient_factor(self, fict: &FictitiousParams) -> f64 {
        match self {
            AdjointWeighting::Exact => 1.0,
            AdjointWeighting::Conductivity => 1.0 - fict.delta,
        }
    }
}

/// Adjoint operator `A[a_δ(v)] + M[3 w u²]`, with `w` chosen by `weighting`.
pub fn adjoint_operator(
    space: &FemSpace,
    v: &[f64],
    fict: &FictitiousParams,
    u: &[f64],
    weighting: AdjointWeighting,
) -> Result<CsrMatrix> {
    let mesh = space.mesh();
    let vm = midpoint_values(mesh, v);
    let um = midpoint_values(mesh, u);
    let w: Vec<[f64; 3]> = vm
        .iter()
        .zip(&um)
        .map(|(vk, uk)| {
            [0, 1, 2].map(|q| 3.0 * weighting.reaction_weight(vk[q], fict) * uk[q] * uk[q])
        })
        .collect();
    let mut a = assemble_stiffness(space, &element_coefficient(space, v, fict))?;
    a.add_scaled(1.0, &assemble_midpoint_mass(space, &w)?);
    Ok(a)
}

/// Solves for the adjoint state `p` given the nodal trace residual `u − u_meas`
/// (only its values on Σ matter) and the boundary mass matrix of Σ.
pub fn solve_adjoint(
    space: &FemSpace,
    v: &[f64],
    fict: &FictitiousParams,
    u: &[f64],
    trace_residual: &[f64],
    boundary_mass: &CsrMatrix,
    weighting: AdjointWeighting,
) -> Result<Vec<f64>> {
    space.check_nodal("phase field", v)?;
    space.check_nodal("forward state", u)?;
    space.check_nodal("trace residual", trace_residual)?;
    let rhs = boundary_mass.mul_vec(trace_residual);
    solve_sparse(&adjoint_operator(space, v, fict, u, weighting)?, &rhs)
}
