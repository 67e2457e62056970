//! Residual metrics reported by every run.

use serde::Serialize;

use crate::error::{OpinsError, Result};
use crate::krylov::LinearOperator;
use crate::matrix::vector::{concat, norm2, sub};
use crate::matrix::RangeBasisFactorization;
use crate::opins::SaddleSystem;
use crate::projection::Projector;

/// `‖[f; g] − K[x; y]‖`, divided by `‖[f; g]‖` unless that is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FullResidual {
    pub value: f64,
    /// False when the rhs is zero and `value` is the absolute norm.
    pub normalized: bool,
}

/// Null-space residual `‖Π⊥(f − A·x_p) − Π⊥A·x_n‖ / ‖Π⊥(f − A·x_p)‖`.
///
/// `0/0` gives 0 and `r/0` with `r > 0` gives infinity.
pub fn relres_x(
    sys: &SaddleSystem,
    fact: &RangeBasisFactorization,
    x_p: &[f64],
    x_n: &[f64],
) -> Result<f64> {
    let n = sys.n();
    if x_p.len() != n || x_n.len() != n || fact.n() != n {
        return Err(OpinsError::dims("relres_x: vector lengths differ from n"));
    }
    let proj = Projector::new(fact);
    let rhs = proj.complement(&sub(&sys.f, &sys.a.apply_vec(x_p)));
    let lhs = proj.complement(&sys.a.apply_vec(x_n));
    let num = norm2(&sub(&rhs, &lhs));
    let den = norm2(&rhs);
    Ok(if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    })
}

pub fn relres_full(sys: &SaddleSystem, x: &[f64], y: &[f64]) -> Result<FullResidual> {
    let (top, bottom) = sys.kkt_apply(x, y)?;
    let rhs = sys.rhs();
    let r = sub(&rhs, &concat(&top, &bottom));
    let den = norm2(&rhs);
    Ok(if den == 0.0 {
        FullResidual {
            value: norm2(&r),
            normalized: false,
        }
    } else {
        FullResidual {
            value: norm2(&r) / den,
            normalized: true,
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRecord {
    pub relres_x: f64,
    pub relres_full: f64,
    pub relres_full_normalized: bool,
    pub constraint_residual: f64,
    pub norm_x: f64,
    pub norm_y: f64,
    pub iterations: usize,
    pub wall_time: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SparseMatrix;

    fn trivial() -> SaddleSystem {
        SaddleSystem::new(
            SparseMatrix::identity(3),
            SparseMatrix::from_triplets(1, 3, &[(0, 0, 1.0)]).unwrap(),
            vec![5.0, 1.0, 0.0],
            vec![2.0],
        )
        .unwrap()
    }

    #[test]
    fn exact_solution_has_zero_residuals() {
        let sys = trivial();
        let fact = sys.factor_constraints(1e-12).unwrap();
        let x_p = [2.0, 0.0, 0.0];
        let x_n = [0.0, 1.0, 0.0];
        assert!(relres_x(&sys, &fact, &x_p, &x_n).unwrap() <= 1e-13);
        let full = relres_full(&sys, &[2.0, 1.0, 0.0], &[3.0]).unwrap();
        assert!(full.value <= 1e-13 && full.normalized);
    }

    #[test]
    fn zero_null_component_gives_one() {
        let sys = trivial();
        let fact = sys.factor_constraints(1e-12).unwrap();
        assert_eq!(relres_x(&sys, &fact, &[2.0, 0.0, 0.0], &[0.0; 3]).unwrap(), 1.0);
        assert_eq!(relres_full(&sys, &[0.0; 3], &[0.0]).unwrap().value, 1.0);
    }

    #[test]
    fn zero_denominator_cases() {
        let mut sys = trivial();
        sys.f = vec![5.0, 0.0, 0.0];
        let fact = sys.factor_constraints(1e-12).unwrap();
        assert_eq!(relres_x(&sys, &fact, &[2.0, 0.0, 0.0], &[0.0; 3]).unwrap(), 0.0);
        assert_eq!(relres_x(&sys, &fact, &[2.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), f64::INFINITY);
        sys.f = vec![0.0; 3];
        sys.g = vec![0.0];
        let full = relres_full(&sys, &[1.0, 0.0, 0.0], &[0.0]).unwrap();
        assert!(!full.normalized && full.value > 0.0);
    }
}
