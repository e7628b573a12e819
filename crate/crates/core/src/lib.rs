//! Numerical laboratory for two-dimensional Schrödinger operators with random
//! Aharonov–Bohm fluxes.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod gauge;
pub mod geometry;
pub mod hardy;
pub mod ids;
pub mod ledger;
pub mod lattice;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
