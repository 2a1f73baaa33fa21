//! Finite-rate quenches of the transverse-field Ising chain with
//! range-truncated counterdiabatic driving.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coefficients;
pub mod error;
pub mod momentum;
pub mod numeric;
pub mod ode;
pub mod pauli;
pub mod quench;
pub mod scaling;
pub mod spin;
pub mod two_level;

pub use error::{Error, Result};
