//! Reconstruction and certification of 2-local derivations on finite models of
//! direct sums `Σ_j C(X) ⊗ M_{n_j}(C)` with `X` finite.
//!
//! Given a black-box map that is promised to agree with some inner derivation on
//! every pair of inputs, [`reconstruct::reconstruct`] recovers a single element `ā`
//! with `Δ(x) = āx − xā` from the values at matrix units, and produces certificates
//! that either confirm the result or expose a broken promise. [`oracle`] recovers
//! the same element by brute-force least squares for cross-checking.

pub mod algebra;
pub mod derivation;
pub mod error;
pub mod format;
mod linalg;
pub mod oracle;
pub mod reconstruct;
pub mod scenario;
pub mod twolocal;

pub use algebra::{AlgebraShape, BlockMatrix, CFunction, FnMatrix};
pub use derivation::AlgebraMap;
pub use error::{Error, Result};
pub use linalg::RANK_TOL;
pub use num_complex::Complex64;
pub use reconstruct::{reconstruct, Certificate, CertificateKind, ImplementingElement, ReconstructOptions};
pub use twolocal::{BrokenKind, Generator, TwoLocalMap};
