//! Numerical laboratory for an integrable hierarchy of Hermitian matrix
//! flows: complex matrix algebra over the unitary/Hermitian splitting, the
//! dynamical r-matrix operators, a gauge-invariant observable DSL with exact
//! forward-mode gradients, the compatible Poisson brackets with property
//! checkers, and the hierarchy flows with a projection-method exact solver.

pub mod brackets;
pub mod cli;
pub mod error;
pub mod hierarchy;
pub mod linalg;
pub mod observables;
pub mod rmatrix;
pub mod sampling;

pub use brackets::{BracketKind, ExtendedStatePoint, StatePoint, TripleStatePoint};
pub use error::{Error, Result};
pub use linalg::{
    AntiHermitianMatrix, CMat, ComplexDiagonal, HermitianMatrix, RealDiagonal, RegularRealDiagonal,
};
pub use observables::Observable;
