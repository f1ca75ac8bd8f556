//! Dense LU solves with partial pivoting.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot ratio {pivot_ratio:.3e})")]
    Singular { pivot_ratio: f64 },
    #[error("dimension mismatch: matrix {rows}x{cols}, right-hand side {rhs}")]
    Dimension { rows: usize, cols: usize, rhs: usize },
}

/// Smallest |U_ii| / largest |U_ii| accepted before declaring singularity.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// Solves `a x = b`, or `aᵀ x = b` when `transpose` is set.
pub fn solve(a: &DMatrix<f64>, b: &[f64], transpose: bool) -> Result<Vec<f64>, LinalgError> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(LinalgError::Dimension {
            rows: a.nrows(),
            cols: a.ncols(),
            rhs: b.len(),
        });
    }
    let lu = if transpose { a.transpose().lu() } else { a.clone().lu() };
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let pivot_ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(pivot_ratio > SINGULAR_PIVOT_RATIO) {
        return Err(LinalgError::Singular { pivot_ratio });
    }
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.iter().copied().collect())
        .ok_or(LinalgError::Singular { pivot_ratio })
}
