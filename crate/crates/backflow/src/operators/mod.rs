//! Time grids, the almost-polynomial basis, the Gram matrix, exact
//! matrix elements of the M-fold backflow operator, and the element cache.

pub mod cache;
mod basis;
mod element;
mod grid;
mod jint;
mod oracle;
mod pair;

pub use basis::{basis_eval, gram_element, log_basis_eval, BasisSpec};
pub use cache::{CacheKey, CacheRecord, ElementCache, Store, StoreHeader, VerifyReport};
pub use element::mfold_element;
pub use grid::{equal_spacing_grid, srsd, TimeGrid};
pub use jint::{j_ball, j_eval};
pub use oracle::{quadrature_oracle, OracleResult, ORACLE_TOL};
pub use pair::{build_pair, MatrixPair};
