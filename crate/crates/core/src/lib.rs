//! Numerical laboratory for discrete rough-path recursions.
//!
//! The crate builds rough step functions from per-cell increments
//! `(ξ_j, Ξ_j)`, runs the associated second-order recursion, lifts the
//! discrete data to a continuous Hölder rough path, solves the resulting
//! rough and modified differential equations, and provides the statistical
//! machinery (moment scaling, tightness probes, area-correction
//! estimators) used to identify the limiting SDE by Monte Carlo.

pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod harness;
pub mod lift;
pub mod linalg;
pub mod noise;
pub mod rde;
pub mod recursion;
pub mod rough_step;
pub mod seeds;
pub mod tensor;

pub use error::{Error, Result};
