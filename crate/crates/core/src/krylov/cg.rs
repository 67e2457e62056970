//! Preconditioned conjugate gradients, used as the baseline that breaks on
//! indefinite operators.

use super::{check_dims, true_relres, IterationHook, ResidualFn, IterationRecord, LinearOperator, SolveOutcome, SolveStatus};
use crate::error::{OpinsError, Result};
use crate::matrix::vector::{axpy, dot, norm2};

/// Residual growth over its running minimum treated as divergence.
const DIVERGENCE_FACTOR: f64 = 1e3;

/// Solve `op·x = b` with (preconditioned) CG.
///
/// A nonpositive curvature `pᵀ·op·p`, a nonpositive `rᵀM⁻¹r`, or a residual
/// that grows far above its best value so far ends the run with
/// [`SolveStatus::Breakdown`].
pub fn cg(
    op: &dyn LinearOperator,
    b: &[f64],
    tol: f64,
    maxit: usize,
    precond: Option<&dyn LinearOperator>,
    hook: Option<&mut IterationHook<'_>>,
) -> Result<SolveOutcome> {
    cg_with_residual(op, b, tol, maxit, precond, hook, None)
}

/// As [`cg`], with `residual` replacing `‖b − op·x‖/‖b‖` as the
/// true relative residual used for reporting and convergence.
pub fn cg_with_residual(
    op: &dyn LinearOperator,
    b: &[f64],
    tol: f64,
    maxit: usize,
    precond: Option<&dyn LinearOperator>,
    mut hook: Option<&mut IterationHook<'_>>,
    residual: Option<&ResidualFn<'_>>,
) -> Result<SolveOutcome> {
    check_dims(op, b, precond)?;
    if !op.is_symmetric() {
        return Err(OpinsError::InvalidOption("CG needs an operator declared symmetric".into()));
    }
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(SolveOutcome::trivial(n));
    }
    let apply_m = |r: &[f64]| match precond {
        Some(m) => m.apply_vec(r),
        None => r.to_vec(),
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = apply_m(&r);
    let mut rz = dot(&r, &z);
    let mut p = z.clone();
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut best = 1.0_f64;
    let mut last_true = 1.0;
    let mut iterations = 0;

    if rz <= 0.0 {
        return Ok(SolveOutcome {
            solution: x,
            status: SolveStatus::Breakdown,
            iterations: 0,
            final_relres: 1.0,
            history,
        });
    }

    for it in 1..=maxit {
        let q = op.apply_vec(&p);
        let curvature = dot(&p, &q);
        if curvature <= 0.0 {
            status = SolveStatus::Breakdown;
            break;
        }
        iterations = it;
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);

        let est = norm2(&r) / bnorm;
        last_true = match residual {
            Some(f) => f(&x),
            None => true_relres(op, b, bnorm, &x),
        };
        let aux = match hook.as_mut() {
            Some(h) => h(it, &x, est),
            None => Vec::new(),
        };
        history.push(IterationRecord {
            iter: it,
            relres: est,
            true_relres: last_true,
            aux,
        });
        if est <= tol && last_true <= tol {
            status = SolveStatus::Converged;
            break;
        }
        best = best.min(est);
        if est > DIVERGENCE_FACTOR * best {
            status = SolveStatus::Breakdown;
            break;
        }

        z = apply_m(&r);
        let rz_new = dot(&r, &z);
        if rz_new <= 0.0 {
            status = SolveStatus::Breakdown;
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }

    Ok(SolveOutcome {
        solution: x,
        status,
        iterations,
        final_relres: last_true,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::testing::{diag, normal};
    use crate::krylov::Symmetric;
    use crate::matrix::DenseMatrix;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    
    #[test]
    fn diagonal_spd() {
        let a = Symmetric(diag(&[1.0, 2.0, 3.0]));
        let out = cg(&a, &[1.0, 2.0, 3.0], 1e-12, 10, None, None).unwrap();
        assert!(out.status.is_converged());
        for v in &out.solution {
            assert!((v - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_direction_breaks_down() {
        let a = Symmetric(diag(&[1.0, -1.0]));
        let out = cg(&a, &[1.0, 1.0], 1e-10, 10, None, None).unwrap();
        assert_eq!(out.status, SolveStatus::Breakdown);
    }

    #[test]
    fn random_spd_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = DenseMatrix::from_fn(20, 20, |_, _| normal(&mut rng));
        let mut a = c.matmul(&c.transpose()).unwrap();
        for i in 0..20 {
            a[(i, i)] += 20.0;
        }
        let b: Vec<f64> = (0..20).map(|_| normal(&mut rng)).collect();
        let out = cg(&Symmetric(&a), &b, 1e-13, 200, None, None).unwrap();
        assert!(out.status.is_converged());
        let oracle = DMatrix::from_row_slice(20, 20, a.values()).lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err: f64 = out.solution.iter().zip(oracle.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-9 * oracle.norm());
    }
}
