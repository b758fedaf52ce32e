//! Kernel ridge regression, GP regression, Nyström and SVGP approximations,
//! and numerical checks of the bounds that relate them.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod nystrom;
pub mod report;
pub mod svgp;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
