//! Orthogonal projector onto `null(B)`, the particular solution `x_p = B⁺g`
//! and Lagrange-multiplier recovery, all through the implicit QRCP factor.

use crate::error::{OpinsError, Result};
use crate::krylov::LinearOperator;
use crate::matrix::{RangeBasisFactorization, TriangularMode};

/// `Π⊥ = I − UUᵀ` with `U` the range basis of `Bᵀ`; never formed densely.
#[derive(Debug, Clone, Copy)]
pub struct Projector<'a> {
    basis: &'a RangeBasisFactorization,
}

impl<'a> Projector<'a> {
    pub fn new(basis: &'a RangeBasisFactorization) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> &'a RangeBasisFactorization {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.n()
    }

    fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.basis.n() {
            return Err(OpinsError::dims(format!(
                "{what} expects length {}, got {}",
                self.basis.n(),
                v.len()
            )));
        }
        Ok(())
    }

    /// `v − U(Uᵀv)`.
    pub fn project_complement(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v, "project_complement")?;
        Ok(self.complement(v))
    }

    /// Unchecked `Π⊥v` for hot loops.
    pub(crate) fn complement(&self, v: &[f64]) -> Vec<f64> {
        if self.basis.rank() == 0 {
            return v.to_vec();
        }
        let uu = self.basis.u_apply(&self.basis.ut_apply(v));
        v.iter().zip(&uu).map(|(a, b)| a - b).collect()
    }

    /// `U(Uᵀv)`, the component in `range(Bᵀ)`.
    pub fn project_range(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v, "project_range")?;
        Ok(self.basis.u_apply(&self.basis.ut_apply(v)))
    }

    /// Minimum-norm least-squares solution of `Bx = g`:
    /// `x_p = U R⁻ᵀ (Pᵀg)_{1:q}`.
    pub fn particular_solution(&self, g: &[f64]) -> Result<Vec<f64>> {
        let b = self.basis;
        if g.len() != b.m() {
            return Err(OpinsError::dims(format!(
                "particular_solution expects length {}, got {}",
                b.m(),
                g.len()
            )));
        }
        let q = b.rank();
        let pg: Vec<f64> = b.permutation()[..q].iter().map(|&p| g[p]).collect();
        let z = b.solve_r(&pg, TriangularMode::ForwardTranspose)?;
        Ok(b.u_apply(&z))
    }

    /// Least-squares `y` of `Bᵀy = f − A·x`: `y = P_{:,1:q} R⁻¹ Uᵀ(f − Ax)`.
    /// Entries pivoted out beyond the rank are zero.
    pub fn recover_multipliers(
        &self,
        a_op: &dyn LinearOperator,
        f: &[f64],
        x: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_len(f, "recover_multipliers (f)")?;
        self.check_len(x, "recover_multipliers (x)")?;
        if a_op.dim() != self.basis.n() {
            return Err(OpinsError::dims("operator size differs from the factorization"));
        }
        let mut ax = vec![0.0; x.len()];
        a_op.apply(x, &mut ax);
        let resid: Vec<f64> = f.iter().zip(&ax).map(|(fi, ai)| fi - ai).collect();
        Ok(self.multipliers_from_residual(&resid))
    }

    /// `y` from a precomputed stationarity residual `f − Ax`.
    pub(crate) fn multipliers_from_residual(&self, resid: &[f64]) -> Vec<f64> {
        let b = self.basis;
        let q = b.rank();
        let t = b.ut_apply(resid);
        let z = b.solve_r(&t, TriangularMode::Back).expect("lengths match rank");
        let mut y = vec![0.0; b.m()];
        for (i, &p) in b.permutation()[..q].iter().enumerate() {
            y[p] = z[i];
        }
        y
    }
}
