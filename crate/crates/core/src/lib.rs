//! Numerical laboratory for a family of nonlinear Schrödinger equations:
//! logarithmic, kinematic-pressure, hydrodynamic, cubic, and the
//! complex-diffusion (complex ħ) equation, on periodic 1-D grids.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod field;
pub mod fixtures;
pub mod fractal_motion;
pub mod models;
pub mod soliton;

pub use error::{LabError, Result};
pub use field::{Grid1D, Scheme, WaveField};
pub use models::{ModelOutput, ModelSpec, Variant};
