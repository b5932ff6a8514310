//! Localized feedback stabilization of a Galerkin-truncated Navier-Stokes
//! model on the 2D torus.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod feedback;
pub mod io;
pub mod linalg;
pub mod nonlinear_loop;
pub mod null_control;
pub mod observability;
pub mod plot;
pub mod quadmin;
pub mod spectral;
pub mod stabilizer;

pub use error::{Error, Result};
