//! Constant-mean-curvature surfaces from meromorphic potentials.
//!
//! The pipeline integrates g₋′ = g₋ξ, splits g₋ = F·h₊ in the twisted loop
//! group, and evaluates Sym's formula on the unitary frame F. The symmetry
//! module verifies proposed domain automorphisms against the transformation
//! law F∘g = χ F k.

pub mod error;
pub mod export;
pub mod factorization;
pub mod geometry;
pub mod loops;
pub mod pipeline;
pub mod potentials;
pub mod symmetry;
pub mod tolerances;

pub use error::{Error, Result};
pub use tolerances::Tolerances;
