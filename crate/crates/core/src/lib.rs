//! Value functions of path-dependent Hamilton–Jacobi–Bellman equations,
//! computed through their stochastic-control representation
//! `v(t, ω) = sup_P E^P[ψ]` over laws whose drift and covariance stay in the
//! attainable set `{(b, σσ*)(f) : f ∈ F}`.
//!
//! The crate is organized bottom-up:
//!
//! * [`path`]: sampled continuous paths, stopping, concatenation, pseudometrics.
//! * [`coefficients`]: coefficient families, the random-G construction, validators.
//! * [`hamiltonian`]: the operator `G` and functional derivatives of test functions.
//! * [`solver`]: dynamic programming on controlled path trees and lattices.
//! * [`lab`]: stability and Lipschitz experiments, finite-difference oracle.

pub mod coefficients;
pub mod error;
pub mod hamiltonian;
pub mod lab;
pub mod path;
pub mod solver;

pub use error::{Condition, Error, Result};
