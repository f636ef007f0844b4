//! Phase-field reconstruction of insulating cavities from boundary measurements
//! of a semilinear elliptic Neumann problem.
// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod config;
pub mod continuation;
pub mod contour;
pub mod data;
pub mod error;
pub mod fem;
pub mod forward;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub(crate) mod par;
pub mod pipeline;

pub use error::{Error, Result};
