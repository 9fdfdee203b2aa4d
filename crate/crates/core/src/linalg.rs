//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff below which a matrix counts as rank
/// deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Numerical rank via singular values.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Least squares with a rank check.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, y has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    if numerical_rank(x) < x.ncols() {
        return Err(Error::RankDeficient(format!(
            "design with {} columns is not of full column rank",
            x.ncols()
        )));
    }
    x.clone()
        .svd(true, true)
        .solve(y, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))
}

/// Solves a symmetric positive definite system by Cholesky.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let ch = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(ch.solve(b))
}

/// Inverse of a symmetric matrix after checking its conditioning.
pub fn inverse_checked(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if numerical_rank(a) < a.nrows() {
        return Err(Error::RankDeficient(format!("{what} is singular")));
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(format!("{what} is singular")))
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square()
        && (0..a.nrows()).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol))
}

/// Rows `idx` of `x`.
pub fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |r, c| x[(idx[r], c)])
}

pub fn select_cols(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |r, c| x[(r, idx[c])])
}

pub fn select_entries(y: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]))
}
