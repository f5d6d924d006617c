//! Exact computer algebra for genus zero mirror formulas of projective
//! complete intersections: closed two-point invariants and BPS counts,
//! equivariant structure coefficients, and the disk, annulus and Klein
//! bottle invariants of real Calabi-Yau threefolds.

pub mod arith;
pub mod cli;
pub mod closed_gw;
pub mod coeffs;
pub mod equivariant;
pub mod error;
pub mod hypergeom;
pub mod open_gw;
pub mod report;
pub mod series;

pub use error::{Error, Result};
