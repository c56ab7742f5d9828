//! Exactly solvable model of harmonic molecules collectively coupled to a
//! single cavity mode, with closed-form electronic structure, Langevin
//! molecular dynamics, autocorrelation spectra, and a dense quadratic oracle
//! that cross-checks every analytic result.

pub mod cavity;
pub mod dynamics;
mod error;
pub mod model;
pub mod oracle;
pub mod polarizability;
pub mod spectra;
pub mod units;

pub use error::{Error, Result};
