use super::DenseMatrix;
use crate::error::{OpinsError, Result};

/// LU factorization with partial pivoting of a small square dense matrix.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    // L (unit, strictly lower) and U packed row-major
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factor `a`. A pivot that is exactly zero, or smaller than
    /// `n·ε` times the largest entry, is reported as singular.
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(OpinsError::dims("LU needs a square matrix"));
        }
        let mut lu = a.values().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let floor = a.max_abs() * f64::EPSILON * n.max(1) as f64;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pmax == 0.0 || pmax <= floor {
                return Err(OpinsError::Singular(format!("zero pivot in column {k}")));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let l = lu[i * n + k] / pivot;
                lu[i * n + k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= l * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "rhs length must match the factored matrix");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }
}
