//! Correspondence analysis (CA) and its stable-autoencoder regularization.
//!
//! CA takes the SVD of the standardized residual table
//! `M = R^{-1/2} (X − rcᵀ/N) C^{-1/2}`. The regularized variants estimate `M`
//! with the same reduced-rank machinery as the matrix estimators, using the
//! Poisson bootstrap variances pushed through the CA standardization, and map
//! the result back to the count scale.

use nalgebra::DVector;

use crate::error::{invalid, Result, SaeError};
use crate::estimators::{iterate_with_penalty, stable_autoencoder_with_penalty, EstimateResult, IsaConfig};
use crate::linalg::{ensure_finite, svd, DenseMatrix, PenaltyDiagonal};

/// Standardized residuals of a table together with its margins.
#[derive(Debug, Clone, PartialEq)]
pub struct CaDecomposition {
    pub m: DenseMatrix,
    pub row_sums: DVector<f64>,
    pub col_sums: DVector<f64>,
    pub total: f64,
}

impl CaDecomposition {
    /// Independence table `rcᵀ / N`.
    pub fn expected(&self) -> DenseMatrix {
        &self.row_sums * self.col_sums.transpose() / self.total
    }

    pub fn shape(&self) -> (usize, usize) {
        self.m.shape()
    }
}

fn check_table(x: &DenseMatrix) -> Result<()> {
    ensure_finite(x, "table")?;
    if let Some(bad) = x.iter().find(|v| **v < 0.0) {
        return invalid(format!("contingency tables must be nonnegative, found {bad}"));
    }
    Ok(())
}

/// Rows and columns whose sum is zero, as `(rows, cols)`.
pub fn empty_margins(x: &DenseMatrix) -> (Vec<usize>, Vec<usize>) {
    let rows = (0..x.nrows()).filter(|&i| x.row(i).sum() <= 0.0).collect();
    let cols = (0..x.ncols()).filter(|&j| x.column(j).sum() <= 0.0).collect();
    (rows, cols)
}

/// Removes empty rows and columns, returning the kept row and column indices.
pub fn drop_empty(x: &DenseMatrix) -> (DenseMatrix, Vec<usize>, Vec<usize>) {
    let (er, ec) = empty_margins(x);
    let rows: Vec<usize> = (0..x.nrows()).filter(|i| !er.contains(i)).collect();
    let cols: Vec<usize> = (0..x.ncols()).filter(|j| !ec.contains(j)).collect();
    let out = DenseMatrix::from_fn(rows.len(), cols.len(), |i, j| x[(rows[i], cols[j])]);
    (out, rows, cols)
}

pub fn ca_transform(x: &DenseMatrix) -> Result<CaDecomposition> {
    check_table(x)?;
    let (er, ec) = empty_margins(x);
    if !er.is_empty() || !ec.is_empty() {
        return Err(SaeError::DegenerateMargin(format!(
            "empty rows {er:?} and columns {ec:?}; drop or merge them first"
        )));
    }
    let row_sums = x.column_sum();
    let col_sums = x.row_sum().transpose();
    let total = row_sums.sum();
    let expected = &row_sums * col_sums.transpose() / total;
    let mut m = x - expected;
    for i in 0..m.nrows() {
        m.row_mut(i).scale_mut(1.0 / row_sums[i].sqrt());
    }
    for j in 0..m.ncols() {
        m.column_mut(j).scale_mut(1.0 / col_sums[j].sqrt());
    }
    Ok(CaDecomposition {
        m,
        row_sums,
        col_sums,
        total,
    })
}

/// Pearson's statistic `N ‖M‖²_F`.
pub fn chi_square_stat(x: &DenseMatrix) -> Result<f64> {
    let ca = ca_transform(x)?;
    Ok(ca.total * ca.m.norm_squared())
}

/// `R^{1/2} M̂ C^{1/2} + rcᵀ/N`.
pub fn ca_restore(m_hat: &DenseMatrix, margins: &CaDecomposition) -> Result<DenseMatrix> {
    if m_hat.shape() != margins.shape() {
        return invalid(format!(
            "estimate is {:?} but the table is {:?}",
            m_hat.shape(),
            margins.shape()
        ));
    }
    let mut out = m_hat.clone();
    for i in 0..out.nrows() {
        out.row_mut(i).scale_mut(margins.row_sums[i].sqrt());
    }
    for j in 0..out.ncols() {
        out.column_mut(j).scale_mut(margins.col_sums[j].sqrt());
    }
    Ok(out + margins.expected())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok(())
}

/// `(S_M)_jj = c_j⁻¹ Σ_i Var[X̃_ij] / r_i` under the Poisson bootstrap,
/// `Var[X̃_ij] = δ/(1 − δ) X_ij`.
pub fn ca_penalty(x: &DenseMatrix, delta: f64) -> Result<PenaltyDiagonal> {
    check_delta(delta)?;
    let ca = ca_transform(x)?;
    let odds = delta / (1.0 - delta);
    let values = DVector::from_fn(x.ncols(), |j, _| {
        let weighted: f64 = (0..x.nrows()).map(|i| x[(i, j)] / ca.row_sums[i]).sum();
        odds * weighted / ca.col_sums[j]
    });
    PenaltyDiagonal::new(values)
}

/// Penalty obtained when bootstrap tables are drawn around the independence
/// table with `Var = δ/(1 − δ) r_i c_j / N`: the constant `n δ / (N (1 − δ))`.
pub fn ca_penalty_independent(margins: &CaDecomposition, delta: f64) -> Result<PenaltyDiagonal> {
    check_delta(delta)?;
    let n = margins.row_sums.len() as f64;
    let value = n * delta / (margins.total * (1.0 - delta));
    PenaltyDiagonal::new(DVector::from_element(margins.col_sums.len(), value))
}

/// A CA fit: the restored table, the estimated `M̂` and the margins.
#[derive(Debug, Clone, PartialEq)]
pub struct CaFit {
    /// Restored estimate of the table in `mu_hat`, diagnostics for `M̂`.
    pub result: EstimateResult,
    pub m_hat: DenseMatrix,
    pub margins: CaDecomposition,
}

impl CaFit {
    fn from_m_hat(estimate: EstimateResult, margins: CaDecomposition) -> Result<Self> {
        let m_hat = estimate.mu_hat;
        let mu_hat = ca_restore(&m_hat, &margins)?;
        Ok(Self {
            result: EstimateResult { mu_hat, ..estimate },
            m_hat,
            margins,
        })
    }

    /// Row and column principal coordinates of the top `k` axes of `M̂`.
    pub fn coordinates(&self, k: usize) -> Result<(DenseMatrix, DenseMatrix)> {
        principal_coordinates(&self.m_hat, &self.margins, k)
    }
}

/// Classical CA coordinates: `F = D_r^{-1/2} U Σ`, `G = D_c^{-1/2} V Σ`
/// with `D_r = R/N`, `D_c = C/N`, truncated to `k` axes.
pub fn principal_coordinates(
    m: &DenseMatrix,
    margins: &CaDecomposition,
    k: usize,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let f = svd(m)?;
    let k = k.min(f.d.len());
    let n = margins.total;
    let rows = DenseMatrix::from_fn(m.nrows(), k, |i, l| {
        f.u[(i, l)] * f.d[l] * (n / margins.row_sums[i]).sqrt()
    });
    let cols = DenseMatrix::from_fn(m.ncols(), k, |j, l| {
        f.v[(j, l)] * f.d[l] * (n / margins.col_sums[j]).sqrt()
    });
    Ok((rows, cols))
}

/// Plain rank-`k` CA: truncated SVD of `M`.
pub fn ca_classic(x: &DenseMatrix, k: usize) -> Result<CaFit> {
    let margins = ca_transform(x)?;
    let est = truncated(&margins.m, k)?;
    CaFit::from_m_hat(est, margins)
}

fn truncated(m: &DenseMatrix, k: usize) -> Result<EstimateResult> {
    let r = m.nrows().min(m.ncols());
    if k == 0 || k > r {
        return invalid(format!("rank {k} outside 1..={r}"));
    }
    let f = svd(m)?;
    let psi: Vec<f64> = f
        .d
        .iter()
        .enumerate()
        .map(|(l, &d)| if l < k { d } else { 0.0 })
        .collect();
    let d1 = f.d[0];
    let effective_rank = psi.iter().filter(|&&v| d1 > 0.0 && v > 1e-7 * d1).count();
    Ok(EstimateResult {
        mu_hat: crate::linalg::shrink_and_rebuild(&f, &psi)?,
        effective_rank,
        iterations: 1,
        final_residual: 0.0,
    })
}

/// Runs `fit` on the orientation with at least as many rows as columns, as
/// the matrix estimators do, and transposes the result back. CA commutes
/// with transposition, so only the penalty (a sum over rows) is affected.
fn oriented<F>(x: &DenseMatrix, fit: F) -> Result<CaFit>
where
    F: FnOnce(&DenseMatrix) -> Result<CaFit>,
{
    if x.ncols() <= x.nrows() {
        return fit(x);
    }
    let t = fit(&x.transpose())?;
    Ok(CaFit {
        result: EstimateResult {
            mu_hat: t.result.mu_hat.transpose(),
            ..t.result
        },
        m_hat: t.m_hat.transpose(),
        margins: CaDecomposition {
            m: t.margins.m.transpose(),
            row_sums: t.margins.col_sums,
            col_sums: t.margins.row_sums,
            total: t.margins.total,
        },
    })
}

/// Rank-`k` stable-autoencoder CA: `M̂ = M B_k`, `B_k` minimizing
/// `‖M − MB‖² + ‖S_M^{1/2} B‖²` on the orientation with `n ≥ p`.
pub fn ca_stable(x: &DenseMatrix, k: usize, delta: f64) -> Result<CaFit> {
    oriented(x, |xo| {
        let s = ca_penalty(xo, delta)?;
        ca_stable_with_penalty(xo, k, &s)
    })
}

/// As [`ca_stable`] with an explicit penalty indexed by the columns of `x`;
/// no reorientation.
pub fn ca_stable_with_penalty(x: &DenseMatrix, k: usize, s: &PenaltyDiagonal) -> Result<CaFit> {
    let margins = ca_transform(x)?;
    let est = stable_autoencoder_with_penalty(&margins.m, s, k)?;
    CaFit::from_m_hat(est, margins)
}

/// Iterated stable-autoencoder CA with `S_M` fixed from the observed table.
pub fn ca_isa(x: &DenseMatrix, delta: f64, cfg: &IsaConfig) -> Result<CaFit> {
    ca_isa_observed(x, delta, cfg, |_| {})
}

/// As [`ca_isa`], reporting each iterate of `M̂` (in the oriented frame) to
/// `observe`.
pub fn ca_isa_observed<F>(x: &DenseMatrix, delta: f64, cfg: &IsaConfig, observe: F) -> Result<CaFit>
where
    F: FnMut(&DenseMatrix),
{
    oriented(x, |xo| {
        let s = ca_penalty(xo, delta)?;
        let margins = ca_transform(xo)?;
        let est = iterate_with_penalty(&margins.m, &s, cfg, observe)?;
        CaFit::from_m_hat(est, margins)
    })
}
