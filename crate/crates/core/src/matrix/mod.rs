//! Dense and sparse storage, matrix-vector products, Householder QR with
//! column pivoting and the triangular solves built on it.

mod dense;
mod lu;
mod qrcp;
mod sparse;
pub mod vector;

pub use dense::DenseMatrix;
pub use lu::DenseLu;
pub use qrcp::{qrcp_factor, RangeBasisFactorization, TriangularMode};
pub use sparse::SparseMatrix;

use crate::error::{OpinsError, Result};

/// Anything that can be multiplied with a vector, optionally transposed.
pub trait MatVec {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `out = M·v`, or `out = Mᵀ·v` when `transpose` is set. `out` is overwritten.
    fn matvec_into(&self, v: &[f64], out: &mut [f64], transpose: bool);
}

/// `M·v` (or `Mᵀ·v`) with length checks.
pub fn matvec<M: MatVec + ?Sized>(mat: &M, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
    let (inner, outer) = if transpose {
        (mat.nrows(), mat.ncols())
    } else {
        (mat.ncols(), mat.nrows())
    };
    if v.len() != inner {
        return Err(OpinsError::dims(format!(
            "matvec expects a vector of length {inner}, got {}",
            v.len()
        )));
    }
    let mut out = vec![0.0; outer];
    mat.matvec_into(v, &mut out, transpose);
    Ok(out)
}
