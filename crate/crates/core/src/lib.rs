pub mod asymptotics;
pub mod closed_form;
pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod quadrature;
pub mod solver;
pub mod special;

pub use error::{FragError, Result};
