#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accum;
pub mod cli;
pub mod error;
pub mod io;
pub mod lfunc;
pub mod model;
pub mod numbers;
pub mod orbits;
pub mod perron;
pub mod stats;
pub mod suite;
pub mod thermo;
pub mod tolerance;

pub use error::{Error, Result};
