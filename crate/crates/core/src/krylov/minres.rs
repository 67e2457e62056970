//! Preconditioned MINRES (Paige–Saunders recurrence).
//!
//! From a zero start on a compatible singular symmetric system the iterates
//! stay in `range(A)`, so the unpreconditioned solve returns the
//! minimum-norm solution.

use super::{check_dims, true_relres, IterationHook, ResidualFn, IterationRecord, LinearOperator, SolveOutcome, SolveStatus};
use crate::error::{OpinsError, Result};
use crate::matrix::vector::{dot, norm2};

/// Solve `op·x = b` with MINRES.
///
/// `precond` applies `M⁻¹` and must be symmetric positive semidefinite on the
/// Krylov space; a negative `rᵀM⁻¹r` ends the solve with
/// [`SolveStatus::Breakdown`].
pub fn minres(
    op: &dyn LinearOperator,
    b: &[f64],
    tol: f64,
    maxit: usize,
    precond: Option<&dyn LinearOperator>,
    hook: Option<&mut IterationHook<'_>>,
) -> Result<SolveOutcome> {
    minres_with_residual(op, b, tol, maxit, precond, hook, None)
}

/// As [`minres`], with `residual` replacing `‖b − op·x‖/‖b‖` as the
/// true relative residual used for reporting and convergence.
pub fn minres_with_residual(
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
        return Err(OpinsError::InvalidOption("MINRES needs an operator declared symmetric".into()));
    }
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(SolveOutcome::trivial(n));
    }
    let apply_m = |r: &[f64]| -> Vec<f64> {
        match precond {
            Some(m) => m.apply_vec(r),
            None => r.to_vec(),
        }
    };

    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y = apply_m(&r1);
    let rty = dot(&r1, &y);
    if rty < 0.0 {
        return Ok(SolveOutcome {
            solution: x,
            status: SolveStatus::Breakdown,
            iterations: 0,
            final_relres: 1.0,
            history: Vec::new(),
        });
    }
    let beta1 = rty.sqrt();
    if beta1 == 0.0 {
        // M⁻¹ annihilates b: nothing the recurrence can do
        return Ok(SolveOutcome {
            solution: x,
            status: SolveStatus::Breakdown,
            iterations: 0,
            final_relres: 1.0,
            history: Vec::new(),
        });
    }

    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut tnorm2 = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut last_true = 1.0;
    let mut iterations = 0;

    for itn in 1..=maxit {
        iterations = itn;
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|yi| s * yi).collect();
        y = op.apply_vec(&v);
        if itn >= 2 {
            let c = beta / oldb;
            for (yi, ri) in y.iter_mut().zip(&r1) {
                *yi -= c * ri;
            }
        }
        let alfa = dot(&v, &y);
        let c = alfa / beta;
        for (yi, ri) in y.iter_mut().zip(&r2) {
            *yi -= c * ri;
        }
        r1 = std::mem::replace(&mut r2, y.clone());
        y = apply_m(&r2);
        oldb = beta;
        let rty = dot(&r2, &y);
        let indefinite = rty < 0.0 && rty.abs() > f64::EPSILON * norm2(&r2) * norm2(&y);
        beta = rty.max(0.0).sqrt();
        tnorm2 += alfa * alfa + oldb * oldb + beta * beta;

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        let w1 = std::mem::replace(&mut w2, w);
        w = v
            .iter()
            .zip(&w1)
            .zip(&w2)
            .map(|((vi, a), b)| (vi - oldeps * a - delta * b) * denom)
            .collect();
        for (xi, wi) in x.iter_mut().zip(&w) {
            *xi += phi * wi;
        }

        let est = phibar / beta1;
        last_true = match residual {
            Some(f) => f(&x),
            None => true_relres(op, b, bnorm, &x),
        };
        let aux = match hook.as_mut() {
            Some(h) => h(itn, &x, est),
            None => Vec::new(),
        };
        history.push(IterationRecord {
            iter: itn,
            relres: est,
            true_relres: last_true,
            aux,
        });

        if est <= tol && last_true <= tol {
            status = SolveStatus::Converged;
            break;
        }
        if indefinite {
            status = SolveStatus::Breakdown;
            break;
        }
        // Lanczos has terminated: no further directions to add
        if beta <= f64::EPSILON * tnorm2.sqrt() {
            status = if last_true <= tol {
                SolveStatus::Converged
            } else {
                SolveStatus::Breakdown
            };
            break;
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
