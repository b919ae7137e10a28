pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod kernels;
pub mod models;
pub mod solver;
pub mod util;

pub use error::{Error, Result};
