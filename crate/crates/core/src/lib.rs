//! Predictive model degrees of freedom for linear procedures under Random-X
//! evaluation, the associated out-of-sample risk estimators, subset selection
//! and gradient-descent interpolants.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision case.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dof;
pub mod error;
pub mod gd;
pub mod linalg;
pub mod model;
pub mod procedures;
pub mod risk;
pub mod sampling;
pub mod scalar;
pub mod selection;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset64 = model::Dataset<f64>;
pub type GenConfig64 = model::GenConfig<f64>;
pub type HatSystem64 = procedures::HatSystem<f64>;
pub type ProcedureSpec64 = procedures::ProcedureSpec<f64>;
pub type FMatrix64 = gd::FMatrix<f64>;
pub type DofReport64 = dof::DofReport<f64>;
