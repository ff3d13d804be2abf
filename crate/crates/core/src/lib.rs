//! Desk-scale workbench for RIS-aided mmWave positioning.
//!
//! The crate synthesizes frequency-domain channel responses for beam sweeps
//! performed by a base station and by reflective intelligent surfaces with
//! 1-bit phase control, extracts multipath components with SAGE, turns the
//! sweeps into angle/distance features and solves single-BS least-squares
//! positioning problems for the eleven scenario definitions in
//! [`positioning::ScenarioId`].
//!
//! Module map:
//!
//! - [`geometry`]: 2D deployment, angle conventions and exact path geometry.
//! - [`channel`]: frequency grids, 1-bit codebooks, array factors and the
//!   geometric channel synthesizer used as ground truth.
//! - [`sage`]: sub-band selection, overall gain and SAGE extraction.
//! - [`features`]: coarse/fine AoD candidates and genie-aided path isolation.
//! - [`positioning`]: scenario measurement sets and the LM solver.
//! - [`evaluation`]: RMSE, median and Wilcoxon rank-sum significance.
//! - [`io`]: configuration, the `RISC` channel container, CSV schemas and the
//!   staged pipeline driven by the `risbench` CLI.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod features;
pub mod geometry;
pub mod io;
pub mod positioning;
pub mod sage;

pub use error::{Error, Result};

/// Speed of light in vacuum [m/s].
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
