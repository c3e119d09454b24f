//! Rigorous Rayleigh–Ritz bounds on multi-interval quantum backflow.
//!
//! The crate compresses the M-fold backflow operator onto the almost-polynomial
//! basis `ψ_{n,a,δ}(q) = E_n q^{n+δ} e^{-aq}`, solves the resulting generalized
//! eigenproblem at high precision, certifies the extreme eigenvalues, and
//! accelerates the resulting sequences.
//!
//! Modules:
//! - [`mpcore`]: ball arithmetic, Γ/beta, ₂F₁, incomplete beta.
//! - [`operators`]: time grids, basis, Gram matrix, exact matrix elements, cache.
//! - [`eigensolver`]: Cholesky–Jacobi generalized eigensolver and certificates.
//! - [`accel`]: Richardson, generalized Richardson, KZ, Raabe–Duhamel, exponent fits.
//! - [`analysis`]: sweeps, eigenvector diagnostics, trial states, classical check.

pub mod accel;
pub mod analysis;
pub mod mpcore;
pub mod eigensolver;
pub mod operators;
pub mod quad;

mod error;
pub use error::Error;

#[cfg(doctest)]
mod book;
