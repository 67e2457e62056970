//! Krylov solvers for compatible, possibly singular systems.
//!
//! All solvers start from the zero vector. With a left preconditioner the
//! recurrence works on the preconditioned residual; every iteration also
//! records the true relative residual `‖b − A·x_k‖/‖b‖`, and convergence is
//! only declared once both are below the tolerance.

mod cg;
mod gmres;
mod minres;

pub use cg::{cg, cg_with_residual};
pub use gmres::{gmres, gmres_with_residual};
pub use minres::{minres, minres_with_residual};

use crate::matrix::{DenseMatrix, MatVec, SparseMatrix};
use serde::Serialize;

/// Matrix-free "apply to a vector" contract.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = Op·x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Caller-declared symmetry.
    fn is_symmetric(&self) -> bool {
        false
    }

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y, false);
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y, false);
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn is_symmetric(&self) -> bool {
        (**self).is_symmetric()
    }
}

/// Operator from a closure.
pub struct FnOperator<F> {
    dim: usize,
    symmetric: bool,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, symmetric: bool, f: F) -> Self {
        Self { dim, symmetric, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// Declares an operator symmetric without changing what it computes.
pub struct Symmetric<T>(pub T);

impl<T: LinearOperator> LinearOperator for Symmetric<T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply(x, y)
    }
    fn is_symmetric(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Breakdown,
    Stagnation,
}

impl SolveStatus {
    pub fn is_converged(self) -> bool {
        self == SolveStatus::Converged
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::Breakdown => "breakdown",
            SolveStatus::Stagnation => "stagnation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Residual the recurrence works with (preconditioned when a
    /// preconditioner is present), relative to its initial value.
    pub relres: f64,
    /// `‖b − A·x_k‖ / ‖b‖`.
    pub true_relres: f64,
    /// Extra named norms supplied by the iteration hook.
    pub aux: Vec<(String, f64)>,
}

impl IterationRecord {
    pub fn aux(&self, name: &str) -> Option<f64> {
        self.aux.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutcome {
    pub solution: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    /// True relative residual of `solution`.
    pub final_relres: f64,
    pub history: Vec<IterationRecord>,
}

impl SolveOutcome {
    pub(crate) fn trivial(n: usize) -> Self {
        Self {
            solution: vec![0.0; n],
            status: SolveStatus::Converged,
            iterations: 0,
            final_relres: 0.0,
            history: Vec::new(),
        }
    }
}

/// Per-iteration hook: `(iter, candidate solution, relres) -> extra named norms`.
pub type IterationHook<'a> = dyn FnMut(usize, &[f64], f64) -> Vec<(String, f64)> + 'a;

/// Caller-supplied true relative residual of a candidate solution.
pub type ResidualFn<'a> = dyn Fn(&[f64]) -> f64 + 'a;

pub(crate) fn true_relres(op: &dyn LinearOperator, b: &[f64], bnorm: f64, x: &[f64]) -> f64 {
    let ax = op.apply_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    crate::matrix::vector::norm2(&r) / bnorm
}

pub(crate) fn check_dims(
    op: &dyn LinearOperator,
    b: &[f64],
    precond: Option<&dyn LinearOperator>,
) -> crate::Result<()> {
    if b.len() != op.dim() {
        return Err(crate::OpinsError::dims(format!(
            "rhs has length {}, operator dimension is {}",
            b.len(),
            op.dim()
        )));
    }
    if let Some(m) = precond {
        if m.dim() != op.dim() {
            return Err(crate::OpinsError::dims("preconditioner dimension differs from operator"));
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    pub fn diag(d: &[f64]) -> DenseMatrix {
        DenseMatrix::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    pub fn normal(rng: &mut impl rand::Rng) -> f64 {
        rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng)
    }
}
