//! Spectra, Lyapunov exponents and duality checks for one-dimensional
//! non-Hermitian quasiperiodic lattices with finite-range hopping.

mod banded;
pub mod error;
pub mod model;
pub mod analysis;
pub mod duality;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};
pub use model::{build_matrix, BoundaryCondition, LatticeMatrix, ModelKind, ModelSpec, Tau, TauMode};
pub use spectral::{eig, eigenvalues, fractal_dimension, match_spectra, nearest_eigenpair, EigenSet, Eigenpair};
