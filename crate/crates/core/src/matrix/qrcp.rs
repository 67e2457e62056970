//! Householder QR with greedy column pivoting on the tall-skinny `Bᵀ`.
//!
//! The orthogonal factor is kept implicit as a sequence of reflectors
//! `H_k = I − τ_k v_k v_kᵀ`; the leading `q` columns of `Q = H_0 H_1 ⋯`
//! form the orthonormal range basis `U` of `Bᵀ`.

use super::vector::{dot, norm2};
use super::DenseMatrix;
use crate::error::{OpinsError, Result};

/// Which triangular system `solve_r` handles on the leading `q×q` block of `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangularMode {
    /// Forward substitution with `Rᵀ`.
    ForwardTranspose,
    /// Back substitution with `R`.
    Back,
}

#[derive(Debug, Clone)]
pub struct RangeBasisFactorization {
    n: usize,
    m: usize,
    /// Reflector `k` acts on rows `k..n`; `reflectors[k][0] == 1`.
    reflectors: Vec<Vec<f64>>,
    taus: Vec<f64>,
    /// Upper-trapezoidal `min(n,m) × m` factor.
    r_factor: DenseMatrix,
    /// `permutation[i]` is the original column of `Bᵀ` placed at position `i`.
    permutation: Vec<usize>,
    rank: usize,
    tol_used: f64,
}

/// Factor `bt = Bᵀ` (`n×m`) as `Bᵀ P = Q R` and estimate the rank as the
/// largest `k` with `|R_kk| > rank_tol·|R_11|`.
///
/// Pivoting picks the remaining column of largest norm (lowest index on ties).
/// Column norms are downdated after each step and recomputed once the
/// downdate has cancelled about half the digits.
pub fn qrcp_factor(bt: &DenseMatrix, rank_tol: f64) -> Result<RangeBasisFactorization> {
    let (n, m) = (bt.nrows(), bt.ncols());
    if n == 0 || m == 0 {
        return Err(OpinsError::dims(format!("QRCP needs a nonempty matrix, got {n}x{m}")));
    }
    if rank_tol.is_nan() || rank_tol <= 0.0 {
        return Err(OpinsError::InvalidOption(format!("rank tolerance must be positive, got {rank_tol}")));
    }
    if let Some((row, col)) = bt.find_non_finite() {
        return Err(OpinsError::NonFinite { row, col });
    }

    let mut cols: Vec<Vec<f64>> = (0..m).map(|j| bt.column(j)).collect();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut vn1: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let mut vn2 = vn1.clone();
    let tol3z = f64::EPSILON.sqrt();

    let kmax = n.min(m);
    let mut reflectors = Vec::with_capacity(kmax);
    let mut taus = Vec::with_capacity(kmax);

    for k in 0..kmax {
        let mut p = k;
        for j in k + 1..m {
            if vn1[j] > vn1[p] {
                p = j;
            }
        }
        if p != k {
            cols.swap(k, p);
            perm.swap(k, p);
            vn1.swap(k, p);
            vn2.swap(k, p);
        }

        let (v, tau, beta) = householder(&cols[k][k..]);
        cols[k][k] = beta;
        for x in cols[k][k + 1..].iter_mut() {
            *x = 0.0;
        }
        if tau != 0.0 {
            for col in cols.iter_mut().skip(k + 1) {
                let seg = &mut col[k..];
                let s = tau * dot(&v, seg);
                for (x, vi) in seg.iter_mut().zip(&v) {
                    *x -= s * vi;
                }
            }
        }
        reflectors.push(v);
        taus.push(tau);

        for j in k + 1..m {
            if vn1[j] == 0.0 {
                continue;
            }
            let ratio = cols[j][k].abs() / vn1[j];
            let temp = (1.0 - ratio * ratio).max(0.0);
            let temp2 = temp * (vn1[j] / vn2[j]).powi(2);
            if temp2 <= tol3z {
                vn1[j] = norm2(&cols[j][k + 1..]);
                vn2[j] = vn1[j];
            } else {
                vn1[j] *= temp.sqrt();
            }
        }
    }

    let r_factor = DenseMatrix::from_fn(kmax, m, |i, j| if i <= j { cols[j][i] } else { 0.0 });
    let r11 = r_factor[(0, 0)].abs();
    let rank = if r11 == 0.0 {
        0
    } else {
        (0..kmax)
            .take_while(|&k| r_factor[(k, k)].abs() > rank_tol * r11)
            .count()
    };

    Ok(RangeBasisFactorization {
        n,
        m,
        reflectors,
        taus,
        r_factor,
        permutation: perm,
        rank,
        tol_used: rank_tol,
    })
}

/// Reflector mapping `x` onto `beta·e_1`; returns `(v, tau, beta)` with `v[0] = 1`.
fn householder(x: &[f64]) -> (Vec<f64>, f64, f64) {
    let alpha = x[0];
    let xnorm = norm2(&x[1..]);
    let mut v = vec![0.0; x.len()];
    v[0] = 1.0;
    if xnorm == 0.0 {
        return (v, 0.0, alpha);
    }
    let beta = -alpha.signum() * alpha.hypot(xnorm);
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for (vi, xi) in v[1..].iter_mut().zip(&x[1..]) {
        *vi = xi * scale;
    }
    (v, tau, beta)
}

impl RangeBasisFactorization {
    /// Factorization of an `m = 0` constraint block: empty range, `Π⊥ = I`.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            m: 0,
            reflectors: Vec::new(),
            taus: Vec::new(),
            r_factor: DenseMatrix::zeros(0, 0),
            permutation: Vec::new(),
            rank: 0,
            tol_used: 0.0,
        }
    }

    /// Number of unknowns (rows of `Bᵀ`).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of constraints (columns of `Bᵀ`).
    pub fn m(&self) -> usize {
        self.m
    }

    /// Estimated numerical rank `q` of `B`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn tol_used(&self) -> f64 {
        self.tol_used
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn r_factor(&self) -> &DenseMatrix {
        &self.r_factor
    }

    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.r_factor.nrows()).map(|k| self.r_factor[(k, k)]).collect()
    }

    #[inline]
    fn reflect(&self, k: usize, x: &mut [f64]) {
        let tau = self.taus[k];
        if tau == 0.0 {
            return;
        }
        let v = &self.reflectors[k];
        let seg = &mut x[k..];
        let s = tau * dot(v, seg);
        for (xi, vi) in seg.iter_mut().zip(v) {
            *xi -= s * vi;
        }
    }

    /// `Uᵀv` (length `q`) without bounds reporting.
    pub(crate) fn ut_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        for k in 0..self.rank {
            self.reflect(k, &mut w);
        }
        w.truncate(self.rank);
        w
    }

    /// `U·t` (length `n`) for `t` of length `q`.
    pub(crate) fn u_apply(&self, t: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        w[..self.rank].copy_from_slice(t);
        for k in (0..self.rank).rev() {
            self.reflect(k, &mut w);
        }
        w
    }

    /// Apply `Uᵀ` (`transpose = true`, length-`n` input) or `U`
    /// (length-`q` input) through the reflector sequence.
    pub fn apply_q_block(&self, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let expect = if transpose { self.n } else { self.rank };
        if v.len() != expect {
            return Err(OpinsError::dims(format!(
                "apply_q_block expects length {expect}, got {}",
                v.len()
            )));
        }
        Ok(if transpose { self.ut_apply(v) } else { self.u_apply(v) })
    }

    /// `Qᵀv` over all `min(n, m)` reflectors, length `n`.
    pub fn apply_qt_full(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        for k in 0..self.reflectors.len() {
            self.reflect(k, &mut w);
        }
        w
    }

    /// `Q·v` over all `min(n, m)` reflectors, length `n`.
    pub fn apply_q_full(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        for k in (0..self.reflectors.len()).rev() {
            self.reflect(k, &mut w);
        }
        w
    }

    /// Dense `n × cols` leading block of `Q`, for checks on small instances.
    pub fn explicit_q(&self, cols: usize) -> DenseMatrix {
        let cols = cols.min(self.n);
        let columns: Vec<Vec<f64>> = (0..cols)
            .map(|j| {
                let mut e = vec![0.0; self.n];
                e[j] = 1.0;
                self.apply_q_full(&e)
            })
            .collect();
        DenseMatrix::from_columns(&columns).unwrap_or_else(|_| DenseMatrix::zeros(self.n, 0))
    }

    /// Dense `U = Q_{:,1:q}`.
    pub fn explicit_u(&self) -> DenseMatrix {
        let columns: Vec<Vec<f64>> = (0..self.rank)
            .map(|j| {
                let mut e = vec![0.0; self.rank];
                e[j] = 1.0;
                self.u_apply(&e)
            })
            .collect();
        if columns.is_empty() {
            return DenseMatrix::zeros(self.n, 0);
        }
        DenseMatrix::from_columns(&columns).expect("columns share length n")
    }

    /// Substitution on the leading `q×q` block of `R`. With `q = 0` the
    /// result is the empty vector.
    pub fn solve_r(&self, rhs: &[f64], mode: TriangularMode) -> Result<Vec<f64>> {
        let q = self.rank;
        if rhs.len() != q {
            return Err(OpinsError::dims(format!("solve_r expects length {q}, got {}", rhs.len())));
        }
        let r = &self.r_factor;
        let mut x = rhs.to_vec();
        match mode {
            TriangularMode::Back => {
                for i in (0..q).rev() {
                    let s: f64 = (i + 1..q).map(|j| r[(i, j)] * x[j]).sum();
                    x[i] = (x[i] - s) / r[(i, i)];
                }
            }
            TriangularMode::ForwardTranspose => {
                for i in 0..q {
                    let s: f64 = (0..i).map(|j| r[(j, i)] * x[j]).sum();
                    x[i] = (x[i] - s) / r[(i, i)];
                }
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn r_from_rows(rows: &[Vec<f64>]) -> RangeBasisFactorization {
        let r = DenseMatrix::from_rows(rows).unwrap();
        let q = r.nrows();
        RangeBasisFactorization {
            n: q,
            m: q,
            reflectors: vec![],
            taus: vec![],
            r_factor: r,
            permutation: (0..q).collect(),
            rank: q,
            tol_used: 1e-12,
        }
    }

    #[test]
    fn rank_one_pair_pivots_to_second_column() {
        // B = [[1,2],[2,4]]: Bᵀ has columns (1,2)ᵀ and (2,4)ᵀ.
        let bt = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let f = qrcp_factor(&bt, 1e-12).unwrap();
        assert_eq!(f.rank(), 1);
        assert_eq!(f.permutation()[0], 1);
        // σ_max of B is 5 and rank 1; the pivot column (2,4) has norm 2√5.
        assert!((f.r_factor()[(0, 0)].abs() - 2.0 * 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn identity_columns() {
        let bt = DenseMatrix::from_fn(3, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let f = qrcp_factor(&bt, 1e-12).unwrap();
        assert_eq!(f.rank(), 2);
        let d = f.r_diagonal();
        assert!((d[0].abs() - 1.0).abs() < 1e-15 && (d[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let f = qrcp_factor(&DenseMatrix::zeros(4, 2), 1e-12).unwrap();
        assert_eq!(f.rank(), 0);
        assert_eq!(f.apply_q_block(&[1.0, 2.0, 3.0, 4.0], true).unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            qrcp_factor(&DenseMatrix::zeros(0, 2), 1e-12),
            Err(OpinsError::DimensionMismatch(_))
        ));
        let mut bt = DenseMatrix::identity(2);
        bt[(1, 0)] = f64::NAN;
        assert!(matches!(qrcp_factor(&bt, 1e-12), Err(OpinsError::NonFinite { row: 1, col: 0 })));
        assert!(qrcp_factor(&DenseMatrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let bt = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let f = qrcp_factor(&bt, 1e-12).unwrap();
        assert_eq!(f.permutation(), &[0, 1]);
    }

    #[test]
    fn axis_aligned_range_block() {
        let bt = DenseMatrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap();
        let f = qrcp_factor(&bt, 1e-12).unwrap();
        let utv = f.apply_q_block(&[3.0, 4.0, 5.0], true).unwrap();
        assert_eq!(utv.len(), 1);
        assert!((utv[0].abs() - 3.0).abs() < 1e-15);
        let back = f.apply_q_block(&utv, false).unwrap();
        assert!((back[0] - 3.0).abs() < 1e-15 && back[1].abs() < 1e-15 && back[2].abs() < 1e-15);
        assert!(f.apply_q_block(&[1.0, 2.0], true).is_err());
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        let f = qrcp_factor(&gaussian(8, 3, 1), 1e-12).unwrap();
        assert!(f.apply_q_block(&[0.0; 8], true).unwrap().iter().all(|&x| x == 0.0));
        assert!(f.apply_q_block(&[0.0; 3], false).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn implicit_block_matches_dense_reconstruction() {
        let f = qrcp_factor(&gaussian(8, 2, 2), 1e-12).unwrap();
        let u = f.explicit_u();
        let v: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let implicit = f.apply_q_block(&f.apply_q_block(&v, true).unwrap(), false).unwrap();
        let utv = crate::matrix::matvec(&u, &v, true).unwrap();
        let dense = crate::matrix::matvec(&u, &utv, false).unwrap();
        for (a, b) in implicit.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-13);
        }
    }

    #[test]
    fn full_rank_gaussian_columns() {
        let f = qrcp_factor(&gaussian(50, 5, 3), 1e-12).unwrap();
        assert_eq!(f.rank(), 5);
    }

    #[test]
    fn back_and_forward_substitution() {
        let f = r_from_rows(&[vec![2.0]]);
        assert_eq!(f.solve_r(&[4.0], TriangularMode::Back).unwrap(), vec![2.0]);
        let f = r_from_rows(&[vec![2.0, 1.0], vec![0.0, 3.0]]);
        let x = f.solve_r(&[2.0, 3.0], TriangularMode::Back).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_triangular_residuals() {
        let g = gaussian(4, 4, 9);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if j < i { 0.0 } else if i == j { 3.0 + g[(i, j)].abs() } else { g[(i, j)] }).collect())
            .collect();
        let f = r_from_rows(&rows);
        let r = f.r_factor().clone();
        let rhs = [1.0, -2.0, 0.5, 3.0];
        let xb = f.solve_r(&rhs, TriangularMode::Back).unwrap();
        let rb = crate::matrix::matvec(&r, &xb, false).unwrap();
        let xf = f.solve_r(&rhs, TriangularMode::ForwardTranspose).unwrap();
        let rf = crate::matrix::matvec(&r, &xf, true).unwrap();
        for i in 0..4 {
            assert!((rb[i] - rhs[i]).abs() <= 1e-13);
            assert!((rf[i] - rhs[i]).abs() <= 1e-13);
        }
    }

    #[test]
    fn empty_rank_solve_returns_empty() {
        let f = qrcp_factor(&DenseMatrix::zeros(3, 1), 1e-12).unwrap();
        assert!(f.solve_r(&[], TriangularMode::Back).unwrap().is_empty());
    }
}
