//! Homo-energetic kinetic theory toolkit.
//!
//! Objective molecular dynamics, the mean-field transport limit, homo-energetic
//! DSMC, and the Euler / Navier-Stokes moment ODEs, plus a harness that runs
//! and compares the levels.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boltzmann;
pub mod deformation;
pub mod harness;
pub mod hydro;
pub mod meanfield;
pub mod measure;
pub mod omd;
pub mod rng;
pub mod stats;
