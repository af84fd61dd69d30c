//! Evaluation metrics for the simulation studies.

use crate::error::{invalid, Result};
use crate::linalg::{svd, DenseMatrix};

/// `‖μ̂ − μ‖²_F / ‖μ‖²_F`.
pub fn relative_mse(estimate: &DenseMatrix, truth: &DenseMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return invalid(format!(
            "shape mismatch {:?} vs {:?}",
            estimate.shape(),
            truth.shape()
        ));
    }
    let signal = truth.norm_squared();
    if signal <= 0.0 {
        return invalid("relative MSE is undefined for a zero signal");
    }
    Ok((estimate - truth).norm_squared() / signal)
}

/// RV coefficient `tr(UᵀÛÛᵀU) / √(tr((UᵀU)²) tr((ÛᵀÛ)²))`, a [0, 1]
/// similarity between the column spaces (with weights) of `u` and `u_hat`.
pub fn rv_coefficient(u: &DenseMatrix, u_hat: &DenseMatrix) -> Result<f64> {
    if u.nrows() != u_hat.nrows() {
        return invalid(format!(
            "RV needs equal row counts, got {} and {}",
            u.nrows(),
            u_hat.nrows()
        ));
    }
    let cross = u.tr_mul(u_hat);
    let num = cross.norm_squared();
    let self_u = u.tr_mul(u).norm_squared();
    let self_hat = u_hat.tr_mul(u_hat).norm_squared();
    if self_u <= 0.0 || self_hat <= 0.0 {
        return invalid("RV coefficient is undefined for a zero matrix");
    }
    Ok((num / (self_u * self_hat).sqrt()).clamp(0.0, 1.0))
}

/// Number of singular values strictly above `rel_tol · d₁`; zero for the zero
/// matrix.
pub fn numerical_rank(a: &DenseMatrix, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0) {
        return invalid(format!("rel_tol must be positive, got {rel_tol}"));
    }
    let d = svd(a)?.d;
    Ok(count_above(d.as_slice(), rel_tol))
}

pub(crate) fn count_above(d: &[f64], rel_tol: f64) -> usize {
    match d.first() {
        Some(&d1) if d1 > 0.0 => d.iter().filter(|&&x| x > rel_tol * d1).count(),
        _ => 0,
    }
}
