// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod io;
pub mod potential;
pub mod quadrature;
pub mod radial;
pub mod riesz;
pub mod solution;
pub mod solver;

pub use error::{Error, Result};
