//! Regularized softmax regression with an approximate Newton solver.
//!
//! The objective is
//!
//! ```text
//! L(x) = 0.5 * || <exp(Ax), 1>^-1 exp(Ax) - b ||^2 + 0.5 * || diag(w) A x ||^2
//! ```
//!
//! The crate provides the exact calculus for `L` (gradient and a Hessian
//! held as rank-one plus diagonal terms), spectral certificates for the
//! bounds the convergence argument relies on, leverage-score sparsification
//! of the diagonal Hessian, and Newton iterations using either the exact or
//! the sketched Hessian.

pub mod error;
pub mod finite_diff;
pub mod io;
pub mod linalg;
pub mod problem;
pub mod sketch;
pub mod softmax;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
pub use problem::{AssumptionReport, Bundle, Generated, ProblemInstance, ValidationMode};
pub use sketch::{SketchConfig, SparseDiagonal};
pub use softmax::{HessianDecomposition, HessianMode, SoftmaxState};
pub use solver::{SolveOutcome, SolverConfig, SolverMode, SolverTrace, StopRule};
pub use spectral::{LogBound, SpectralCertificate};
