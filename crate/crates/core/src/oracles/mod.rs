//! Dense reference solvers and full-system Krylov baselines.
//!
//! Everything here goes through nalgebra's dense factorizations so that it
//! shares no numerical code with the implicit QRCP path, apart from the rank
//! `q`, which is taken from the shared QRCP to keep both sides consistent.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{OpinsError, Result};
use crate::harness::metrics::{relres_full, relres_x};
use crate::krylov::{
    cg_with_residual, gmres_with_residual, minres_with_residual, IterationHook, LinearOperator, SolveOutcome, Symmetric,
};
use crate::matrix::vector::{norm2, sub};
use crate::matrix::{DenseMatrix, RangeBasisFactorization};
use crate::opins::SaddleSystem;

pub(crate) fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.nrows(), m.ncols(), m.values())
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Orthonormal basis of `null(B)`, as dense columns.
#[derive(Debug, Clone)]
pub struct NullBasis {
    pub z: DenseMatrix,
}

impl NullBasis {
    /// Trailing `n − q` columns of the full orthogonal factor of `B ᵀP`, with
    /// `q` and `P` from `fact`.
    pub fn from_factorization(sys: &SaddleSystem, fact: &RangeBasisFactorization) -> Self {
        let n = sys.n();
        let q = fact.rank();
        if sys.m() == 0 {
            return Self {
                z: DenseMatrix::identity(n),
            };
        }
        let bt = sys.b.to_dense().transpose();
        let perm = fact.permutation();
        let btp = DMatrix::from_fn(n, sys.m(), |i, j| bt[(i, perm[j])]);
        let mut q_full = DMatrix::<f64>::identity(n, n);
        btp.qr().q_tr_mul(&mut q_full);
        let q_full = q_full.transpose();
        Self {
            z: from_na(&q_full.columns(q, n - q).into_owned()),
        }
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// `ZᵀMZ` for a dense `n × n` matrix `M`.
    pub fn reduce(&self, m: &DenseMatrix) -> DenseMatrix {
        let z = to_na(&self.z);
        from_na(&(z.transpose() * to_na(m) * &z))
    }
}

/// Minimum-norm least-squares solution with singular values at or below
/// `trunc_tol·σ_max` discarded.
pub fn tsvd_solve(k: &DenseMatrix, rhs: &[f64], trunc_tol: f64) -> Result<Vec<f64>> {
    if rhs.len() != k.nrows() {
        return Err(OpinsError::dims("tsvd_solve: rhs length differs from row count"));
    }
    Ok(tsvd_na(&to_na(k), &DVector::from_column_slice(rhs), trunc_tol)
        .as_slice()
        .to_vec())
}

fn tsvd_na(k: &DMatrix<f64>, rhs: &DVector<f64>, trunc_tol: f64) -> DVector<f64> {
    let svd = k.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let mut x = DVector::zeros(k.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > trunc_tol * smax && s > 0.0 {
            let c = u.column(i).dot(rhs) / s;
            x += vt.row(i).transpose() * c;
        }
    }
    x
}

fn singular_lu_check(lu_u_diag: impl Iterator<Item = f64>, n: usize, scale: f64) -> bool {
    let threshold = n as f64 * f64::EPSILON * scale;
    lu_u_diag.into_iter().any(|d| d.abs() <= threshold)
}

/// Dense null-space method: `x_p = B⁺g`, `ZᵀAZ·v = Zᵀ(f − A·x_p)` solved by
/// dense LU, `x = x_p + Zv`, `y = (Bᵀ)⁺(f − A·x)`.
pub fn explicit_nullspace_solve(sys: &SaddleSystem, rank_tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let fact = sys.factor_constraints(rank_tol)?;
    let basis = NullBasis::from_factorization(sys, &fact);
    let a = to_na(&sys.a.to_dense());
    let b = to_na(&sys.b.to_dense());
    let f = DVector::from_column_slice(&sys.f);
    let g = DVector::from_column_slice(&sys.g);

    let x_p = if sys.m() == 0 {
        DVector::zeros(sys.n())
    } else {
        tsvd_na(&b, &g, rank_tol)
    };
    let z = to_na(&basis.z);
    let x = if z.ncols() == 0 {
        x_p
    } else {
        let nhat = z.transpose() * &a * &z;
        let rhs = z.transpose() * (&f - &a * &x_p);
        let lu = nhat.clone().full_piv_lu();
        let scale = nhat.amax();
        if singular_lu_check(lu.u().diagonal().iter().copied(), nhat.nrows(), scale) {
            return Err(OpinsError::Singular("ZᵀAZ is singular".into()));
        }
        let v = lu
            .solve(&rhs)
            .ok_or_else(|| OpinsError::Singular("ZᵀAZ is singular".into()))?;
        x_p + &z * v
    };
    let y = if sys.m() == 0 {
        DVector::zeros(0)
    } else {
        tsvd_na(&b.transpose(), &(&f - &a * &x), rank_tol)
    };
    Ok((x.as_slice().to_vec(), y.as_slice().to_vec()))
}

/// Dense LU with partial pivoting on the assembled `K`.
pub fn dense_kkt_solve(sys: &SaddleSystem) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = to_na(&sys.kkt_dense());
    let dim = k.nrows();
    let lu = k.clone().lu();
    if singular_lu_check(lu.u().diagonal().iter().copied(), dim, k.amax()) {
        return Err(OpinsError::Singular("K is singular to working precision".into()));
    }
    let sol = lu
        .solve(&DVector::from_vec(sys.rhs()))
        .ok_or_else(|| OpinsError::Singular("K is singular".into()))?;
    let n = sys.n();
    Ok((sol.rows(0, n).as_slice().to_vec(), sol.rows(n, dim - n).as_slice().to_vec()))
}

/// Eigenvalues of a symmetric matrix with `|λ| > zero_tol·max|λ|`, ascending.
pub fn nonzero_spectrum(op_dense: &DenseMatrix, zero_tol: f64) -> Result<Vec<f64>> {
    if op_dense.nrows() != op_dense.ncols() {
        return Err(OpinsError::dims("nonzero_spectrum needs a square matrix"));
    }
    if op_dense.nrows() == 0 {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::new(to_na(op_dense));
    let lmax = eig.eigenvalues.amax();
    let mut vals: Vec<f64> = eig
        .eigenvalues
        .iter()
        .copied()
        .filter(|l| l.abs() > zero_tol * lmax)
        .collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Constraint preconditioner `C = [[G, Bᵀ], [B, 0]]` applied as `C⁻¹` by a
/// cached LU, followed by `ir_steps` rounds of iterative refinement with the
/// residual computed in working precision.
pub struct ConstraintPreconditioner {
    c: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    ir_steps: usize,
    n: usize,
}

impl ConstraintPreconditioner {
    pub fn new(sys: &SaddleSystem, g_matrix: &DenseMatrix, ir_steps: usize) -> Result<Self> {
        let n = sys.n();
        if g_matrix.nrows() != n || g_matrix.ncols() != n {
            return Err(OpinsError::dims("G must be n×n"));
        }
        let mut c = to_na(&sys.kkt_dense());
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] = g_matrix[(i, j)];
            }
        }
        let lu = c.clone().lu();
        if singular_lu_check(lu.u().diagonal().iter().copied(), c.nrows(), c.amax()) {
            return Err(OpinsError::Singular("constraint preconditioner is singular".into()));
        }
        Ok(Self { c, lu, ir_steps, n })
    }

    /// `C⁻¹·rhs` over the full `n + m` space.
    pub fn solve_full(&self, rhs: &[f64]) -> Vec<f64> {
        let r = DVector::from_column_slice(rhs);
        let mut z = self.lu.solve(&r).expect("factor checked at construction");
        for _ in 0..self.ir_steps {
            let resid = &r - &self.c * &z;
            z += self.lu.solve(&resid).expect("factor checked at construction");
        }
        z.as_slice().to_vec()
    }
}

/// The projection step of the constraint preconditioner:
/// `r ↦ top block of C⁻¹[r; 0]`, which is `Z(ZᵀGZ)⁻¹Zᵀr` in exact arithmetic.
impl LinearOperator for ConstraintPreconditioner {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut rhs = x.to_vec();
        rhs.resize(self.c.nrows(), 0.0);
        y.copy_from_slice(&self.solve_full(&rhs)[..self.n]);
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// Krylov method used by the constraint-preconditioned baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullSystemMethod {
    Minres,
    Cg,
    Gmres { restart: usize },
}

/// A projected-Krylov baseline run.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub x_p: Vec<f64>,
    pub x_n: Vec<f64>,
    /// Least-squares multipliers `(Bᵀ)⁺(f − A·x)`.
    pub y: Vec<f64>,
    /// Krylov record over `x_n`; history aux carries `norm_Bxn` and
    /// `relres_full`, and `true_relres` is `relres_x`.
    pub outcome: SolveOutcome,
}

impl BaselineRun {
    pub fn x(&self) -> Vec<f64> {
        self.x_p.iter().zip(&self.x_n).map(|(a, b)| a + b).collect()
    }
}

/// Projected Krylov solve of `[[A, Bᵀ], [B, 0]]·[x_n; y] = [f − A·x_p; 0]`:
/// the iteration runs on `A` over `x_n` only, and every preconditioner
/// application solves with the constraint preconditioner, which keeps the
/// iterates in `null(B)` up to rounding.
pub fn constraint_preconditioned_solve(
    sys: &SaddleSystem,
    g_matrix: &DenseMatrix,
    ir_steps: usize,
    method: FullSystemMethod,
    tol: f64,
    maxit: usize,
    rank_tol: f64,
) -> Result<BaselineRun> {
    let n = sys.n();
    let fact = sys.factor_constraints(rank_tol)?;
    let b_dense = to_na(&sys.b.to_dense());
    let (x_p, bt_pinv) = if sys.m() == 0 {
        (vec![0.0; n], DMatrix::zeros(0, n))
    } else {
        let x_p = tsvd_na(&b_dense, &DVector::from_column_slice(&sys.g), rank_tol);
        let pinv = b_dense
            .transpose()
            .pseudo_inverse(rank_tol * b_dense.norm())
            .map_err(|e| OpinsError::Singular(e.to_string()))?;
        (x_p.as_slice().to_vec(), pinv)
    };
    let multipliers = |x: &[f64]| -> Vec<f64> {
        let r = DVector::from_vec(sub(&sys.f, &sys.a.apply_vec(x)));
        (&bt_pinv * r).as_slice().to_vec()
    };
    let rhs = sub(&sys.f, &sys.a.apply_vec(&x_p));
    let precond = ConstraintPreconditioner::new(sys, g_matrix, ir_steps)?;

    let residual = |x_n: &[f64]| relres_x(sys, &fact, &x_p, x_n).unwrap_or(f64::NAN);
    let mut hook = |_: usize, x_n: &[f64], _: f64| -> Vec<(String, f64)> {
        let x: Vec<f64> = x_p.iter().zip(x_n).map(|(a, b)| a + b).collect();
        let y = multipliers(&x);
        vec![
            ("norm_Bxn".to_string(), norm2(&sys.b.apply_vec_rect(x_n))),
            (
                "relres_full".to_string(),
                relres_full(sys, &x, &y).map(|r| r.value).unwrap_or(f64::NAN),
            ),
        ]
    };
    let hook: &mut IterationHook<'_> = &mut hook;
    let a = &sys.a;
    let outcome = match method {
        FullSystemMethod::Minres => {
            minres_with_residual(&Symmetric(a), &rhs, tol, maxit, Some(&precond), Some(hook), Some(&residual))?
        }
        FullSystemMethod::Cg => {
            cg_with_residual(&Symmetric(a), &rhs, tol, maxit, Some(&precond), Some(hook), Some(&residual))?
        }
        FullSystemMethod::Gmres { restart } => {
            gmres_with_residual(a, &rhs, restart, tol, maxit, Some(&precond), Some(hook), Some(&residual))?
        }
    };
    let x_n = outcome.solution.clone();
    let x: Vec<f64> = x_p.iter().zip(&x_n).map(|(a, b)| a + b).collect();
    let y = multipliers(&x);
    Ok(BaselineRun { x_p, x_n, y, outcome })
}

/// PMINRES with the constraint preconditioner and `ir_steps` refinement
/// rounds per application.
pub fn pminres_constraint(
    sys: &SaddleSystem,
    g_matrix: &DenseMatrix,
    ir_steps: usize,
    tol: f64,
    maxit: usize,
) -> Result<BaselineRun> {
    constraint_preconditioned_solve(sys, g_matrix, ir_steps, FullSystemMethod::Minres, tol, maxit, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::testing::normal;
    use crate::matrix::SparseMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trivial() -> SaddleSystem {
        SaddleSystem::new(
            SparseMatrix::identity(3),
            SparseMatrix::from_triplets(1, 3, &[(0, 0, 1.0)]).unwrap(),
            vec![5.0, 0.0, 0.0],
            vec![2.0],
        )
        .unwrap()
    }

    fn random(n: usize, m: usize, seed: u64) -> SaddleSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DenseMatrix::from_fn(n, n, |_, _| normal(&mut rng));
        a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        let b = DenseMatrix::from_fn(m, n, |_, _| normal(&mut rng));
        let f = (0..n).map(|_| normal(&mut rng)).collect();
        let g = (0..m).map(|_| normal(&mut rng)).collect();
        SaddleSystem::new(SparseMatrix::from_dense(&a), SparseMatrix::from_dense(&b), f, g).unwrap()
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        norm2(&sub(a, b)) / norm2(b)
    }

    #[test]
    fn trivial_system_all_oracles() {
        let sys = trivial();
        let (x, y) = explicit_nullspace_solve(&sys, 1e-12).unwrap();
        assert!(rel(&x, &[2.0, 0.0, 0.0]) < 1e-15 && (y[0] - 3.0).abs() < 1e-14);
        let (x, y) = dense_kkt_solve(&sys).unwrap();
        assert!(rel(&x, &[2.0, 0.0, 0.0]) < 1e-15 && (y[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn nullspace_matches_kkt_on_random() {
        let sys = random(10, 3, 2);
        let (x1, y1) = explicit_nullspace_solve(&sys, 1e-12).unwrap();
        let (x2, y2) = dense_kkt_solve(&sys).unwrap();
        assert!(rel(&x1, &x2) < 1e-10 && rel(&y1, &y2) < 1e-10);
    }

    #[test]
    fn square_full_rank_b() {
        let mut sys = random(5, 5, 9);
        sys.g = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let (x, _) = explicit_nullspace_solve(&sys, 1e-12).unwrap();
        assert!(rel(&sys.b.apply_vec_rect(&x), &sys.g) < 1e-12);
        let fact = sys.factor_constraints(1e-12).unwrap();
        assert_eq!(NullBasis::from_factorization(&sys, &fact).dim(), 0);
    }

    #[test]
    fn null_basis_is_orthonormal_and_complementary() {
        let sys = random(12, 4, 3);
        let fact = sys.factor_constraints(1e-12).unwrap();
        let nb = NullBasis::from_factorization(&sys, &fact);
        let z = to_na(&nb.z);
        let u = to_na(&fact.explicit_u());
        let bz = to_na(&sys.b.to_dense()) * &z;
        assert!(bz.amax() <= 1e-12 * sys.b.frobenius_norm());
        let mut uz = DMatrix::zeros(12, 12);
        uz.columns_mut(0, 4).copy_from(&u);
        uz.columns_mut(4, 8).copy_from(&z);
        assert!((uz.transpose() * &uz - DMatrix::identity(12, 12)).amax() < 1e-12);
    }

    #[test]
    fn tsvd_examples() {
        let d = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(tsvd_solve(&d, &[2.0, 0.0], 1e-12).unwrap(), vec![2.0, 0.0]);
        let i = DenseMatrix::identity(3);
        let x = tsvd_solve(&i, &[1.0, -2.0, 3.0], 1e-12).unwrap();
        assert!(rel(&x, &[1.0, -2.0, 3.0]) < 1e-15);
    }

    #[test]
    fn tsvd_rank_deficient_matches_pseudoinverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = DenseMatrix::from_fn(8, 5, |_, _| normal(&mut rng));
        let d = DenseMatrix::from_fn(5, 8, |_, _| normal(&mut rng));
        let k = c.matmul(&d).unwrap();
        let rhs: Vec<f64> = (0..8).map(|_| normal(&mut rng)).collect();
        let x = tsvd_solve(&k, &rhs, 1e-12).unwrap();
        let pinv = to_na(&k).pseudo_inverse(1e-10).unwrap();
        let oracle = pinv * DVector::from_column_slice(&rhs);
        assert!(rel(&x, oracle.as_slice()) < 1e-10);
    }

    #[test]
    fn spectrum_examples() {
        let d = DenseMatrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(nonzero_spectrum(&d, 1e-12).unwrap().len(), 2);

        let mut sys = random(10, 3, 4);
        sys.a = SparseMatrix::identity(10);
        let fact = sys.factor_constraints(1e-12).unwrap();
        let u = to_na(&fact.explicit_u());
        let pi = DMatrix::identity(10, 10) - &u * u.transpose();
        let spec = nonzero_spectrum(&from_na(&pi), 1e-10).unwrap();
        assert_eq!(spec.len(), 7);
        assert!(spec.iter().all(|l| (l - 1.0).abs() < 1e-12));
    }

    #[test]
    fn singular_kkt_reported() {
        let mut sys = trivial();
        sys.a = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(dense_kkt_solve(&sys), Err(OpinsError::Singular(_))));
        assert!(matches!(explicit_nullspace_solve(&sys, 1e-12), Err(OpinsError::Singular(_))));
    }

    #[test]
    fn exact_constraint_preconditioner_converges_fast() {
        // MINRES needs the preconditioner positive on null(B), so A is SPD here
        let mut sys = random(30, 6, 5);
        let c = sys.a.to_dense();
        let mut spd = c.matmul(&c).unwrap();
        for i in 0..30 {
            spd[(i, i)] += 1.0;
        }
        sys.a = SparseMatrix::from_dense(&spd);
        // one refinement step removes the rounding that otherwise costs
        // a few extra iterations
        let unrefined = pminres_constraint(&sys, &sys.a.to_dense(), 0, 1e-10, 50).unwrap();
        assert!(unrefined.outcome.status.is_converged());
        let run = pminres_constraint(&sys, &sys.a.to_dense(), 1, 1e-10, 50).unwrap();
        assert!(run.outcome.status.is_converged());
        assert!(run.outcome.iterations <= 2, "{}", run.outcome.iterations);
        assert!(run.outcome.iterations <= unrefined.outcome.iterations);
        let (x, _) = dense_kkt_solve(&sys).unwrap();
        assert!(rel(&run.x(), &x) < 1e-8);
    }

    #[test]
    fn baseline_records_drift() {
        let sys = random(40, 8, 6);
        let g = DenseMatrix::from_fn(40, 40, |i, j| if i == j { sys.a.get(i, i).abs().max(1e-3) } else { 0.0 });
        let run = pminres_constraint(&sys, &g, 1, 1e-10, 200).unwrap();
        assert!(run.outcome.history.iter().all(|r| r.aux("norm_Bxn").is_some()));
    }
}
