#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod cli;
pub mod dataset;
pub mod earth;
pub mod ekf;
pub mod error;
pub mod io;
pub mod learning;
pub mod presets;
pub mod sim;
pub mod strapdown;

pub use error::{NavError, Result};
