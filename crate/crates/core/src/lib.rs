//! Empiric stochastic stability of invariant measures on one-dimensional
//! manifolds: maps, ball-uniform noise kernels, transfer operators,
//! Wasserstein distances, stability verdicts and the entropy formula check.

pub mod dynamics;
pub mod error;
pub mod measures;
pub mod montecarlo;
pub mod pesin;
pub mod phase_space;
pub mod stability;
pub mod transfer;

pub use error::{Error, Result};
