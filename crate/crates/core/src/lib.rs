pub mod angular;
pub mod asymptotic_kernels;
pub mod cli;
pub mod coefficients;
pub mod error;
pub mod evolution;
pub mod fitting;
pub mod geometry;
pub mod quadrature;
pub mod radiation;
pub mod tailfit;

pub use error::{Error, Result};
