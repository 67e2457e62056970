//! The OPINS driver: particular solution from the QRCP of `Bᵀ`, Krylov solve
//! of the projected null-space equation `Π⊥AΠ⊥w = Π⊥(f − A·x_p)`, and
//! `x = x_p + Π⊥w`.

mod precond;

pub use precond::{
    build_g, projected_precond_apply, DenseG, DiagonalG, GKind, GOperator, IdentityG, Ilu0, InverseG,
    ProjectedPreconditioner,
};

use crate::error::{OpinsError, Result};
use crate::harness::metrics::{relres_full, relres_x, FullResidual};
use crate::krylov::{gmres, minres, FnOperator, LinearOperator, SolveOutcome};
use crate::matrix::vector::{add, norm2, sub};
use crate::matrix::{matvec, qrcp_factor, DenseMatrix, RangeBasisFactorization, SparseMatrix};
use crate::projection::Projector;

/// `[[A, Bᵀ], [B, 0]]·[x; y] = [f; g]`.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// Selects MINRES over GMRES; detected exactly by [`SaddleSystem::new`].
    pub a_symmetric: bool,
}

impl SaddleSystem {
    pub fn new(a: SparseMatrix, b: SparseMatrix, f: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(OpinsError::dims(format!("A is {}x{}, expected square", n, a.ncols())));
        }
        if b.ncols() != n {
            return Err(OpinsError::dims(format!("B has {} columns, A has {n}", b.ncols())));
        }
        if f.len() != n || g.len() != b.nrows() {
            return Err(OpinsError::dims(format!(
                "rhs lengths ({}, {}) do not match (n, m) = ({n}, {})",
                f.len(),
                g.len(),
                b.nrows()
            )));
        }
        if let Some(i) = f.iter().chain(&g).position(|v| !v.is_finite()) {
            return Err(OpinsError::NonFinite { row: i, col: 0 });
        }
        let a_symmetric = a.is_symmetric(0.0);
        Ok(Self {
            a,
            b,
            f,
            g,
            a_symmetric,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.nrows()
    }

    /// `(A·x + Bᵀ·y, B·x)`.
    pub fn kkt_apply(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let top = add(&matvec(&self.a, x, false)?, &matvec(&self.b, y, true)?);
        Ok((top, matvec(&self.b, x, false)?))
    }

    /// Dense `K`, for oracles on small instances.
    pub fn kkt_dense(&self) -> DenseMatrix {
        let (n, m) = (self.n(), self.m());
        let mut k = DenseMatrix::zeros(n + m, n + m);
        for (i, j, v) in self.a.triplets() {
            k[(i, j)] = v;
        }
        for (i, j, v) in self.b.triplets() {
            k[(n + i, j)] = v;
            k[(j, n + i)] = v;
        }
        k
    }

    /// `[f; g]`.
    pub fn rhs(&self) -> Vec<f64> {
        crate::matrix::vector::concat(&self.f, &self.g)
    }

    /// `(σA, σf)` with `B`, `g` unchanged.
    pub fn scaled(&self, sigma: f64) -> Self {
        Self {
            a: self.a.scaled(sigma),
            b: self.b.clone(),
            f: self.f.iter().map(|v| v * sigma).collect(),
            g: self.g.clone(),
            a_symmetric: self.a_symmetric,
        }
    }

    /// QRCP of `Bᵀ` (empty when `m = 0`).
    pub fn factor_constraints(&self, rank_tol: f64) -> Result<RangeBasisFactorization> {
        if self.m() == 0 {
            return Ok(RangeBasisFactorization::empty(self.n()));
        }
        qrcp_factor(&self.b.to_dense().transpose(), rank_tol)
    }
}

#[derive(Debug, Clone)]
pub enum Preconditioning {
    None,
    /// `M⁺ = G⁻¹`.
    Simple(GKind),
    /// `M⁺ = P_G = Z(ZᵀGZ)⁻¹Zᵀ`.
    Projected(GKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondSide {
    /// Symmetric application for symmetric, nonsingular problems with a
    /// symmetric preconditioner; left otherwise.
    Auto,
    Left,
    Symmetric,
}

#[derive(Debug, Clone)]
pub struct OpinsOptions {
    pub rank_tol: f64,
    pub solve_tol: f64,
    /// Inner iterations, summed over GMRES restarts.
    pub maxit: usize,
    pub restart: usize,
    pub precond: Preconditioning,
    pub side: PrecondSide,
    /// Caller's statement that the null-space equation is singular.
    pub declared_singular: bool,
    pub compute_y: bool,
}

impl Default for OpinsOptions {
    fn default() -> Self {
        Self {
            rank_tol: 1e-12,
            solve_tol: 1e-10,
            maxit: 2000,
            restart: 50,
            precond: Preconditioning::None,
            side: PrecondSide::Auto,
            declared_singular: false,
            compute_y: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OpinsMetrics {
    pub relres_x: f64,
    pub relres_full: FullResidual,
    /// `‖g − B·x‖`.
    pub constraint_residual: f64,
}

#[derive(Debug, Clone)]
pub struct OpinsReport {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub x_p: Vec<f64>,
    pub x_n: Vec<f64>,
    pub rank_b: usize,
    /// Inner solve; its history carries `norm_Bxn`, `norm_w` and
    /// `relres_full` as aux values.
    pub inner: SolveOutcome,
    pub metrics: OpinsMetrics,
}

impl OpinsReport {
    pub fn converged(&self) -> bool {
        self.inner.status.is_converged()
    }
}

/// Per-iteration observer: `(iter, x_p, x_n)`.
pub type OpinsHook<'a> = dyn FnMut(usize, &[f64], &[f64]) + 'a;

pub fn opins_solve(sys: &SaddleSystem, opts: &OpinsOptions) -> Result<OpinsReport> {
    opins_solve_with_hook(sys, opts, None)
}

enum Inner {
    Minres,
    Gmres,
}

pub fn opins_solve_with_hook(
    sys: &SaddleSystem,
    opts: &OpinsOptions,
    mut user_hook: Option<&mut OpinsHook<'_>>,
) -> Result<OpinsReport> {
    if !(opts.rank_tol > 0.0 && opts.solve_tol > 0.0) {
        return Err(OpinsError::InvalidOption("tolerances must be positive".into()));
    }
    if opts.restart == 0 {
        return Err(OpinsError::InvalidOption("restart must be positive".into()));
    }
    let fact = sys.factor_constraints(opts.rank_tol)?;
    let proj = Projector::new(&fact);
    let n = sys.n();

    let x_p = proj.particular_solution(&sys.g)?;
    let resid_p = sub(&sys.f, &sys.a.apply_vec(&x_p));
    let rhs = proj.complement(&resid_p);

    let a = &sys.a;
    let pns = FnOperator::new(n, sys.a_symmetric, |w: &[f64], out: &mut [f64]| {
        let aw = a.apply_vec(&proj.complement(w));
        out.copy_from_slice(&proj.complement(&aw));
    });

    let (precond, inner_kind): (Option<Box<dyn LinearOperator + '_>>, Inner) = match &opts.precond {
        Preconditioning::None => (None, if sys.a_symmetric { Inner::Minres } else { Inner::Gmres }),
        Preconditioning::Simple(kind) => {
            if opts.declared_singular {
                return Err(OpinsError::InvalidOption(
                    "a simple G preconditioner would change the null-space component of a singular system; use projected(G) or none".into(),
                ));
            }
            let g = build_g(&sys.a, kind)?;
            let symmetric = g.is_symmetric();
            (Some(Box::new(InverseG(g))), resolve_side(opts, sys.a_symmetric, symmetric)?)
        }
        Preconditioning::Projected(kind) => {
            let g = build_g(&sys.a, kind)?;
            let symmetric = g.is_symmetric();
            let pg = ProjectedPreconditioner::new(g, &fact)?;
            (Some(Box::new(pg)), resolve_side(opts, sys.a_symmetric, symmetric)?)
        }
    };

    let mut hook = |it: usize, w: &[f64], _r: f64| -> Vec<(String, f64)> {
        let x_n = proj.complement(w);
        let x: Vec<f64> = x_p.iter().zip(&x_n).map(|(p, q)| p + q).collect();
        let y = proj.multipliers_from_residual(&sub(&sys.f, &sys.a.apply_vec(&x)));
        let full = relres_full(sys, &x, &y).map(|r| r.value).unwrap_or(f64::NAN);
        if let Some(h) = user_hook.as_mut() {
            h(it, &x_p, &x_n);
        }
        vec![
            ("norm_Bxn".to_string(), norm2(&sys.b.apply_vec_rect(&x_n))),
            ("norm_w".to_string(), norm2(w)),
            ("relres_full".to_string(), full),
        ]
    };

    let inner = if norm2(&rhs) == 0.0 {
        SolveOutcome::trivial(n)
    } else {
        let m = precond.as_deref();
        match inner_kind {
            Inner::Minres => minres(&pns, &rhs, opts.solve_tol, opts.maxit, m, Some(&mut hook))?,
            Inner::Gmres => gmres(&pns, &rhs, opts.restart, opts.solve_tol, opts.maxit, m, Some(&mut hook))?,
        }
    };

    let x_n = proj.complement(&inner.solution);
    let x = add(&x_p, &x_n);
    let y = proj.multipliers_from_residual(&sub(&sys.f, &sys.a.apply_vec(&x)));
    let metrics = OpinsMetrics {
        relres_x: relres_x(sys, &fact, &x_p, &x_n)?,
        relres_full: relres_full(sys, &x, &y)?,
        constraint_residual: norm2(&sub(&sys.g, &sys.b.apply_vec_rect(&x))),
    };
    Ok(OpinsReport {
        x,
        y: opts.compute_y.then_some(y),
        x_p,
        x_n,
        rank_b: fact.rank(),
        inner,
        metrics,
    })
}

fn resolve_side(opts: &OpinsOptions, a_symmetric: bool, precond_symmetric: bool) -> Result<Inner> {
    let symmetric_ok = a_symmetric && precond_symmetric && !opts.declared_singular;
    match opts.side {
        PrecondSide::Auto if symmetric_ok => Ok(Inner::Minres),
        PrecondSide::Auto | PrecondSide::Left => Ok(Inner::Gmres),
        PrecondSide::Symmetric if symmetric_ok => Ok(Inner::Minres),
        PrecondSide::Symmetric if opts.declared_singular => Err(OpinsError::InvalidOption(
            "symmetric preconditioning may alter the null-space component of a singular system; use left".into(),
        )),
        PrecondSide::Symmetric => Err(OpinsError::InvalidOption(
            "symmetric preconditioning needs symmetric A and a symmetric G".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn trivial_system() -> SaddleSystem {
        SaddleSystem::new(
            SparseMatrix::identity(3),
            SparseMatrix::from_triplets(1, 3, &[(0, 0, 1.0)]).unwrap(),
            vec![5.0, 0.0, 0.0],
            vec![2.0],
        )
        .unwrap()
    }

    #[test]
    fn trivial_kkt_needs_no_iterations() {
        let rep = opins_solve(&trivial_system(), &OpinsOptions::default()).unwrap();
        assert!(rep.converged());
        assert_eq!(rep.inner.iterations, 0);
        assert_eq!(rep.x, vec![2.0, 0.0, 0.0]);
        assert!((rep.y.unwrap()[0] - 3.0).abs() < 1e-15);
        assert!(rep.metrics.relres_full.value <= 1e-13);
    }

    #[test]
    fn unconstrained_system_solves_directly() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 4.0)]).unwrap();
        let sys = SaddleSystem::new(a, SparseMatrix::zeros(0, 2), vec![2.0, 8.0], vec![]).unwrap();
        let rep = opins_solve(&sys, &OpinsOptions::default()).unwrap();
        assert!(rep.converged());
        assert!((rep.x[0] - 1.0).abs() < 1e-12 && (rep.x[1] - 2.0).abs() < 1e-12);
        assert_eq!(rep.y.unwrap().len(), 0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let r = SaddleSystem::new(
            SparseMatrix::identity(3),
            SparseMatrix::identity(2),
            vec![0.0; 3],
            vec![0.0; 2],
        );
        assert!(matches!(r, Err(OpinsError::DimensionMismatch(_))));
    }

    #[test]
    fn singular_guard() {
        let sys = trivial_system();
        let mut opts = OpinsOptions {
            declared_singular: true,
            precond: Preconditioning::Simple(GKind::Jacobi),
            ..Default::default()
        };
        assert!(matches!(opins_solve(&sys, &opts), Err(OpinsError::InvalidOption(_))));
        opts.precond = Preconditioning::Projected(GKind::Jacobi);
        opts.side = PrecondSide::Symmetric;
        assert!(matches!(opins_solve(&sys, &opts), Err(OpinsError::InvalidOption(_))));
        opts.side = PrecondSide::Left;
        assert!(opins_solve(&sys, &opts).unwrap().converged());
    }

    #[test]
    fn bad_tolerance_rejected() {
        let opts = OpinsOptions {
            solve_tol: 0.0,
            ..Default::default()
        };
        assert!(opins_solve(&trivial_system(), &opts).is_err());
    }

    #[test]
    fn symmetric_side_rejected_for_ilu() {
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, 3.0), (2, 2, 4.0), (1, 2, 1.0), (2, 1, 1.0)])
            .unwrap();
        let sys = SaddleSystem::new(a, SparseMatrix::from_triplets(1, 3, &[(0, 0, 1.0)]).unwrap(), vec![1.0; 3], vec![1.0])
            .unwrap();
        let opts = OpinsOptions {
            precond: Preconditioning::Simple(GKind::Ilu0),
            side: PrecondSide::Symmetric,
            ..Default::default()
        };
        assert!(opins_solve(&sys, &opts).is_err());
        let auto = OpinsOptions {
            precond: Preconditioning::Simple(GKind::Ilu0),
            ..Default::default()
        };
        let rep = opins_solve(&sys, &auto).unwrap();
        assert!(rep.converged() && rep.metrics.relres_full.value < 1e-10);
    }

    #[test]
    fn hook_receives_null_space_iterates() {
        let a = SparseMatrix::from_triplets(4, 4, &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, -3.0), (3, 3, 4.0), (1, 2, 0.5), (2, 1, 0.5)])
            .unwrap();
        let b = SparseMatrix::from_triplets(1, 4, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let sys = SaddleSystem::new(a, b, vec![1.0, 2.0, 3.0, 4.0], vec![1.0]).unwrap();
        let mut seen = 0;
        let mut hook = |_: usize, _: &[f64], x_n: &[f64]| {
            seen += 1;
            assert!((x_n[0] + x_n[1]).abs() < 1e-14);
        };
        let rep = opins_solve_with_hook(&sys, &OpinsOptions::default(), Some(&mut hook)).unwrap();
        assert!(rep.converged());
        assert_eq!(seen, rep.inner.iterations);
        assert!(rep.inner.history.iter().all(|r| r.aux("norm_Bxn").unwrap() < 1e-14));
    }
}
