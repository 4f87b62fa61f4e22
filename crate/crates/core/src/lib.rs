//! Simulation and analysis of single-track vehicle models coupled with
//! distributed tire-friction PDEs.

// NaN-rejecting guards are written as `!(x <= bound)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod control;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod model;
pub mod pde;
pub mod reduced;
pub mod steady;

pub use error::{Error, Result};
