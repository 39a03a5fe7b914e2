//! Finite-volume scaling analysis for lattice Anderson Hamiltonians `H = -Δ + gV`.
//!
//! The crate builds random Hamiltonians on max-norm balls of `Z^d`, diagonalizes
//! them, classifies each ball by resonance, singularity, localization and
//! tunneling predicates, and estimates event probabilities by Monte Carlo.

pub mod correlators;
pub mod disorder;
pub mod edge_bounds;
pub mod error;
pub mod lattice;
pub mod montecarlo;
pub mod operator;
pub mod predicates;
pub mod records;
pub mod scaling;
pub mod spectral;
pub mod stats;
pub mod subharmonic;
pub mod wegner;

pub use error::{Error, Result};
