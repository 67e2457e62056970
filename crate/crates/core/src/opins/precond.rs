//! `G` approximations of `A` and the projected preconditioner
//! `P_G = Z(ZᵀGZ)⁻¹Zᵀ`, applied through a range-space solve so `Z` is never
//! formed.

use std::sync::Arc;

use crate::error::{OpinsError, Result};
use crate::krylov::LinearOperator;
use crate::matrix::{DenseLu, DenseMatrix, RangeBasisFactorization, SparseMatrix};

/// An invertible approximation `G ≈ A` that can both apply and solve.
pub trait GOperator: Send + Sync {
    fn dim(&self) -> usize;
    /// `G·v`.
    fn apply(&self, v: &[f64]) -> Vec<f64>;
    /// `G⁻¹·v`.
    fn solve(&self, v: &[f64]) -> Vec<f64>;
    fn is_symmetric(&self) -> bool;
}

/// Which `G` to build from `A`.
#[derive(Clone)]
pub enum GKind {
    Identity,
    /// `diag(|a_ii|)`, zero entries replaced by one.
    Jacobi,
    Ilu0,
    User(Arc<dyn GOperator>),
}

impl std::fmt::Debug for GKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GKind::Identity => f.write_str("Identity"),
            GKind::Jacobi => f.write_str("Jacobi"),
            GKind::Ilu0 => f.write_str("Ilu0"),
            GKind::User(g) => write!(f, "User(dim = {})", g.dim()),
        }
    }
}

pub struct IdentityG(pub usize);

impl GOperator for IdentityG {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
    fn solve(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
    fn is_symmetric(&self) -> bool {
        true
    }
}

/// Diagonal `G`.
pub struct DiagonalG {
    diag: Vec<f64>,
}

impl DiagonalG {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if let Some(i) = diag.iter().position(|&d| d == 0.0 || !d.is_finite()) {
            return Err(OpinsError::ZeroPivot(i));
        }
        Ok(Self { diag })
    }

    /// Jacobi choice from `A`: magnitudes of the diagonal, so the result is
    /// positive definite even for indefinite `A`; zeros become one.
    pub fn jacobi(a: &SparseMatrix) -> Self {
        let diag = a
            .diagonal()
            .into_iter()
            .map(|d| if d == 0.0 { 1.0 } else { d.abs() })
            .collect();
        Self { diag }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

impl GOperator for DiagonalG {
    fn dim(&self) -> usize {
        self.diag.len()
    }
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.diag).map(|(x, d)| x * d).collect()
    }
    fn solve(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.diag).map(|(x, d)| x / d).collect()
    }
    fn is_symmetric(&self) -> bool {
        true
    }
}

/// Dense `G` solved through a cached LU factorization.
pub struct DenseG {
    g: DenseMatrix,
    lu: DenseLu,
    symmetric: bool,
}

impl DenseG {
    pub fn new(g: DenseMatrix) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(OpinsError::dims("G must be square"));
        }
        let lu = DenseLu::factor(&g)?;
        let symmetric = g.is_symmetric(0.0);
        Ok(Self { g, lu, symmetric })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.g
    }
}

impl GOperator for DenseG {
    fn dim(&self) -> usize {
        self.g.nrows()
    }
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.g.apply_vec(v)
    }
    fn solve(&self, v: &[f64]) -> Vec<f64> {
        self.lu.solve(v)
    }
    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// ILU(0): `L` (unit lower) and `U` share the sparsity pattern of `A`.
pub struct Ilu0 {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(OpinsError::dims("ILU(0) needs a square matrix"));
        }
        let n = a.nrows();
        let row_ptr = a.row_ptr().to_vec();
        let col_idx = a.col_idx().to_vec();
        let mut values = a.values().to_vec();
        let mut diag_pos = vec![0; n];
        for i in 0..n {
            diag_pos[i] = (row_ptr[i]..row_ptr[i + 1])
                .find(|&p| col_idx[p] == i)
                .ok_or(OpinsError::ZeroPivot(i))?;
        }

        // position of column j within the current row, or usize::MAX
        let mut slot = vec![usize::MAX; n];
        for i in 0..n {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            for p in lo..hi {
                slot[col_idx[p]] = p;
            }
            for p in lo..hi {
                let k = col_idx[p];
                if k >= i {
                    break;
                }
                let pivot = values[diag_pos[k]];
                let lik = values[p] / pivot;
                values[p] = lik;
                for q in diag_pos[k] + 1..row_ptr[k + 1] {
                    let s = slot[col_idx[q]];
                    if s != usize::MAX {
                        values[s] -= lik * values[q];
                    }
                }
            }
            for p in lo..hi {
                slot[col_idx[p]] = usize::MAX;
            }
            let d = values[diag_pos[i]];
            if d == 0.0 || !d.is_finite() {
                return Err(OpinsError::ZeroPivot(i));
            }
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
            diag_pos,
        })
    }
}

impl GOperator for Ilu0 {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut uv = vec![0.0; self.n];
        for (i, out) in uv.iter_mut().enumerate() {
            *out = (self.diag_pos[i]..self.row_ptr[i + 1])
                .map(|p| self.values[p] * v[self.col_idx[p]])
                .sum();
        }
        (0..self.n)
            .map(|i| {
                let lower: f64 = (self.row_ptr[i]..self.diag_pos[i])
                    .map(|p| self.values[p] * uv[self.col_idx[p]])
                    .sum();
                uv[i] + lower
            })
            .collect()
    }

    fn solve(&self, v: &[f64]) -> Vec<f64> {
        let mut x = v.to_vec();
        for i in 0..self.n {
            let s: f64 = (self.row_ptr[i]..self.diag_pos[i])
                .map(|p| self.values[p] * x[self.col_idx[p]])
                .sum();
            x[i] -= s;
        }
        for i in (0..self.n).rev() {
            let s: f64 = (self.diag_pos[i] + 1..self.row_ptr[i + 1])
                .map(|p| self.values[p] * x[self.col_idx[p]])
                .sum();
            x[i] = (x[i] - s) / self.values[self.diag_pos[i]];
        }
        x
    }

    fn is_symmetric(&self) -> bool {
        false
    }
}

/// Build `G` from `A`.
pub fn build_g(a: &SparseMatrix, kind: &GKind) -> Result<Arc<dyn GOperator>> {
    if a.nrows() != a.ncols() {
        return Err(OpinsError::dims("A must be square"));
    }
    let g: Arc<dyn GOperator> = match kind {
        GKind::Identity => Arc::new(IdentityG(a.nrows())),
        GKind::Jacobi => Arc::new(DiagonalG::jacobi(a)),
        GKind::Ilu0 => Arc::new(Ilu0::factor(a)?),
        GKind::User(g) => {
            if g.dim() != a.nrows() {
                return Err(OpinsError::dims("user G has the wrong dimension"));
            }
            Arc::clone(g)
        }
    };
    Ok(g)
}

/// `G⁻¹` as a [`LinearOperator`] (the simple preconditioner).
pub struct InverseG(pub Arc<dyn GOperator>);

impl LinearOperator for InverseG {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.0.solve(x));
    }
    fn is_symmetric(&self) -> bool {
        self.0.is_symmetric()
    }
}

/// `P_G` with the `q×q` block `UᵀG⁻¹U` factored once.
pub struct ProjectedPreconditioner<'a> {
    g: Arc<dyn GOperator>,
    basis: &'a RangeBasisFactorization,
    schur: Option<DenseLu>,
}

impl<'a> ProjectedPreconditioner<'a> {
    pub fn new(g: Arc<dyn GOperator>, basis: &'a RangeBasisFactorization) -> Result<Self> {
        if g.dim() != basis.n() {
            return Err(OpinsError::dims("G and the factorization disagree on n"));
        }
        let q = basis.rank();
        let schur = if q == 0 {
            None
        } else {
            let mut s = DenseMatrix::zeros(q, q);
            let mut e = vec![0.0; q];
            for j in 0..q {
                e[j] = 1.0;
                let col = basis.ut_apply(&g.solve(&basis.u_apply(&e)));
                e[j] = 0.0;
                for i in 0..q {
                    s[(i, j)] = col[i];
                }
            }
            let lu = DenseLu::factor(&s)
                .map_err(|_| OpinsError::Singular("range-space block UᵀG⁻¹U is singular".into()))?;
            Some(lu)
        };
        Ok(Self { g, basis, schur })
    }

    /// `s = P_G·b`.
    pub fn apply_vec(&self, b: &[f64]) -> Vec<f64> {
        let r = self.g.solve(b);
        let Some(schur) = &self.schur else {
            return r;
        };
        let t = schur.solve(&self.basis.ut_apply(&r));
        let ut = self.basis.u_apply(&t);
        let rhs: Vec<f64> = b.iter().zip(&ut).map(|(bi, ui)| bi - ui).collect();
        self.g.solve(&rhs)
    }
}

impl LinearOperator for ProjectedPreconditioner<'_> {
    fn dim(&self) -> usize {
        self.basis.n()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&ProjectedPreconditioner::apply_vec(self, x));
    }
    fn is_symmetric(&self) -> bool {
        self.g.is_symmetric()
    }
}

/// One-shot `P_G·b`; builds and discards the preconditioner.
pub fn projected_precond_apply(
    g_op: Arc<dyn GOperator>,
    fact: &RangeBasisFactorization,
    b: &[f64],
) -> Result<Vec<f64>> {
    if b.len() != fact.n() {
        return Err(OpinsError::dims(format!("expected length {}, got {}", fact.n(), b.len())));
    }
    Ok(ProjectedPreconditioner::new(g_op, fact)?.apply_vec(b))
}
