//! Restarted GMRES with optional left preconditioning.

use super::{check_dims, true_relres, IterationHook, ResidualFn, IterationRecord, LinearOperator, SolveOutcome, SolveStatus};
use crate::error::{OpinsError, Result};
use crate::matrix::vector::{axpy, dot, norm2};

/// A cycle whose true residual improves by less than this fraction of its
/// starting value counts as stagnated.
const STAGNATION_FRACTION: f64 = 1e-3;
/// Reorthogonalize when MGS shrinks the new vector below this fraction.
const REORTH_THRESHOLD: f64 = 0.7;

/// Solve `op·x = b` with GMRES(`restart`).
///
/// With `precond = Some(M)` the Arnoldi process runs on `M·op` and the
/// residual estimate is `‖M(b − op·x)‖/‖M·b‖`. `maxit` counts inner
/// iterations across all cycles.
pub fn gmres(
    op: &dyn LinearOperator,
    b: &[f64],
    restart: usize,
    tol: f64,
    maxit: usize,
    precond: Option<&dyn LinearOperator>,
    hook: Option<&mut IterationHook<'_>>,
) -> Result<SolveOutcome> {
    gmres_with_residual(op, b, restart, tol, maxit, precond, hook, None)
}

/// As [`gmres`], with `residual` replacing `‖b − op·x‖/‖b‖` as the true
/// relative residual used for reporting, convergence and stagnation.
#[allow(clippy::too_many_arguments)]
pub fn gmres_with_residual(
    op: &dyn LinearOperator,
    b: &[f64],
    restart: usize,
    tol: f64,
    maxit: usize,
    precond: Option<&dyn LinearOperator>,
    mut hook: Option<&mut IterationHook<'_>>,
    residual: Option<&ResidualFn<'_>>,
) -> Result<SolveOutcome> {
    check_dims(op, b, precond)?;
    if restart == 0 {
        return Err(OpinsError::InvalidOption("GMRES restart length must be positive".into()));
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
    let reference = norm2(&apply_m(b));
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    if reference == 0.0 {
        return Ok(SolveOutcome {
            solution: x,
            status: SolveStatus::Breakdown,
            iterations: 0,
            final_relres: 1.0,
            history,
        });
    }

    let mut total = 0;
    let mut last_true = 1.0;
    let status = 'outer: loop {
        let ax = op.apply_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let cycle_start = match residual {
            Some(f) => f(&x),
            None => norm2(&r) / bnorm,
        };
        let z = apply_m(&r);
        let beta = norm2(&z);
        if beta == 0.0 {
            break if cycle_start <= tol { SolveStatus::Converged } else { SolveStatus::Breakdown };
        }

        let mut basis: Vec<Vec<f64>> = vec![z.iter().map(|v| v / beta).collect()];
        // Columns of the rotated Hessenberg matrix, i.e. of R.
        let mut rcols: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut rotations: Vec<(f64, f64)> = Vec::with_capacity(restart);
        let mut g = vec![beta];
        let mut candidate = x.clone();
        let mut exhausted = false;

        for j in 0..restart {
            total += 1;
            let mut w = apply_m(&op.apply_vec(&basis[j]));
            let mut h = vec![0.0; j + 2];
            let before = norm2(&w);
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[i] = hij;
                axpy(-hij, v, &mut w);
            }
            if norm2(&w) < REORTH_THRESHOLD * before {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[i] += c;
                    axpy(-c, v, &mut w);
                }
            }
            let hnext = norm2(&w);
            h[j + 1] = hnext;

            for (i, &(c, s)) in rotations.iter().enumerate() {
                let (a, bb) = (h[i], h[i + 1]);
                h[i] = c * a + s * bb;
                h[i + 1] = -s * a + c * bb;
            }
            let denom = h[j].hypot(h[j + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[j] / denom, h[j + 1] / denom) };
            h[j] = denom;
            h[j + 1] = 0.0;
            rotations.push((c, s));
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s * gj);
            h.truncate(j + 1);
            rcols.push(h);

            let est = g[j + 1].abs() / reference;
            candidate = x.clone();
            for (k, yk) in back_substitute(&rcols, &g).into_iter().enumerate() {
                axpy(yk, &basis[k], &mut candidate);
            }
            last_true = match residual {
                Some(f) => f(&candidate),
                None => true_relres(op, b, bnorm, &candidate),
            };
            let aux = match hook.as_mut() {
                Some(hk) => hk(total, &candidate, est),
                None => Vec::new(),
            };
            history.push(IterationRecord {
                iter: total,
                relres: est,
                true_relres: last_true,
                aux,
            });

            if est <= tol && last_true <= tol {
                x = candidate;
                break 'outer SolveStatus::Converged;
            }
            if total >= maxit {
                x = candidate;
                break 'outer SolveStatus::MaxIterations;
            }
            // Estimate says done but the true residual disagrees: refresh it.
            if est <= tol {
                break;
            }
            if hnext <= f64::EPSILON * before.max(f64::MIN_POSITIVE) {
                exhausted = true;
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        x = candidate;
        if cycle_start - last_true < STAGNATION_FRACTION * cycle_start {
            break if exhausted { SolveStatus::Breakdown } else { SolveStatus::Stagnation };
        }
    };

    Ok(SolveOutcome {
        solution: x,
        status,
        iterations: total,
        final_relres: last_true,
        history,
    })
}

/// Solve the upper-triangular system held column-wise in `rcols`; a zero
/// diagonal (singular Hessenberg block) contributes nothing.
fn back_substitute(rcols: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let k = rcols.len();
    let mut y = g[..k].to_vec();
    for j in (0..k).rev() {
        let d = rcols[j][j];
        let yj = if d == 0.0 { 0.0 } else { y[j] / d };
        y[j] = yj;
        for (yi, rij) in y.iter_mut().zip(&rcols[j]).take(j) {
            *yi -= rij * yj;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::testing::{diag, normal};
    use crate::matrix::DenseMatrix;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    
    #[test]
    fn identity_converges_in_one_step() {
        let a = DenseMatrix::identity(4);
        let out = gmres(&a, &[1.0, -2.0, 3.0, 0.5], 10, 1e-12, 10, None, None).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.status.is_converged());
    }

    #[test]
    fn small_nonsymmetric() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let out = gmres(&a, &[1.0, 2.0], 5, 1e-12, 10, None, None).unwrap();
        assert!(out.status.is_converged());
        assert!((out.solution[0] - 1.0).abs() < 1e-12 && (out.solution[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_nonsymmetric_with_restarts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let mut a = DenseMatrix::from_fn(n, n, |_, _| 0.3 * normal(&mut rng));
        for i in 0..n {
            a[(i, i)] += 4.0;
        }
        let b: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let out = gmres(&a, &b, 5, 1e-11, 500, None, None).unwrap();
        assert!(out.status.is_converged(), "{:?}", out.status);
        let oracle = DMatrix::from_row_slice(n, n, a.values()).lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err: f64 = out.solution.iter().zip(oracle.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-9 * oracle.norm());
        for rec in &out.history {
            assert!(rec.true_relres.is_finite());
        }
    }

    #[test]
    fn singular_compatible_keeps_null_component_zero() {
        let a = diag(&[2.0, -3.0, 0.0]);
        let m = diag(&[0.5, 0.25, 9.0]);
        let out = gmres(&a, &[2.0, 3.0, 0.0], 10, 1e-12, 20, Some(&m), None).unwrap();
        assert!(out.status.is_converged());
        assert!((out.solution[0] - 1.0).abs() < 1e-13);
        assert!((out.solution[1] + 1.0).abs() < 1e-13);
        assert_eq!(out.solution[2], 0.0);
    }

    #[test]
    fn left_preconditioner_reduces_iterations() {
        let d: Vec<f64> = (1..=40).map(|i| i as f64 * i as f64).collect();
        let a = diag(&d);
        let inv = diag(&d.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
        let b = vec![1.0; 40];
        let plain = gmres(&a, &b, 50, 1e-10, 100, None, None).unwrap();
        let pre = gmres(&a, &b, 50, 1e-10, 100, Some(&inv), None).unwrap();
        assert!(pre.status.is_converged() && plain.status.is_converged());
        assert!(pre.iterations < plain.iterations);
    }

    #[test]
    fn zero_restart_rejected() {
        let a = DenseMatrix::identity(2);
        assert!(gmres(&a, &[1.0, 1.0], 0, 1e-10, 5, None, None).is_err());
    }

    #[test]
    fn incompatible_singular_system_stops() {
        let a = diag(&[1.0, 0.0]);
        let out = gmres(&a, &[1.0, 1.0], 5, 1e-10, 100, None, None).unwrap();
        assert!(!out.status.is_converged());
        assert!(out.iterations < 100);
    }
}
