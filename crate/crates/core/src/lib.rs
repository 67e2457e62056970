//! Orthogonally projected implicit null-space solver (OPINS) for saddle-point systems
//!
//! ```text
//! [ A  Bᵀ ] [x]   [f]
//! [ B  0  ] [y] = [g]
//! ```
//!
//! The solver factors `Bᵀ` with Householder QR and column pivoting, keeps the
//! orthonormal range basis `U` implicit as reflectors, and solves the
//! projected null-space equation `Π⊥AΠ⊥w = Π⊥(f − A·x_p)` with a Krylov method
//! for compatible singular systems. Nonsingular systems get their unique `x`;
//! compatible singular systems get the minimum-norm `x`.
//!
//! Module map:
//! - [`matrix`]: dense/sparse storage, QRCP with rank estimation, triangular solves.
//! - [`projection`]: the projector `Π⊥ = I − UUᵀ`, particular solution, multipliers.
//! - [`krylov`]: MINRES, restarted GMRES and CG with preconditioning hooks.
//! - [`opins`]: the driver, projected preconditioner and `G` builders.
//! - [`oracles`]: dense reference solvers and projected-Krylov baselines.
//! - [`harness`]: Matrix Market I/O, problem generators, metrics, experiment runs.

pub mod error;
pub mod harness;
pub mod krylov;
pub mod matrix;
pub mod opins;
pub mod oracles;
pub mod projection;

pub use error::{OpinsError, Result};
pub use krylov::{IterationRecord, LinearOperator, SolveOutcome, SolveStatus};
pub use matrix::{qrcp_factor, DenseMatrix, RangeBasisFactorization, SparseMatrix};
pub use opins::{opins_solve, OpinsOptions, OpinsReport, SaddleSystem};
pub use projection::Projector;
