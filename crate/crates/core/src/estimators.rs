//! Stable autoencoder (SA) and iterated stable autoencoder (ISA).
//!
//! Both estimators work on the orientation of `X` with at least as many rows
//! as columns, so the encoder `B` is the smaller `p × p` matrix, and transpose
//! the estimate back before returning it. Columns of `X` that are identically
//! zero carry zero bootstrap variance under the Poisson model; their column
//! of the estimate is zero at the optimum, so they are removed before the
//! solve and restored afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{
    ensure_finite, shrink_and_rebuild, solve_reduced_rank, svd, DenseMatrix, PenaltyDiagonal,
};
use crate::noise::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsaConfig {
    pub max_iterations: usize,
    /// Stop once `‖μ̂_t − μ̂_{t−1}‖_F / max(‖X‖_F, 1)` drops below this.
    pub convergence_tolerance: f64,
    /// Singular values of `μ̂` above `rank_tolerance · d₁(X)` count toward
    /// the effective rank.
    pub rank_tolerance: f64,
}

impl Default for IsaConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            convergence_tolerance: 1e-9,
            rank_tolerance: 1e-7,
        }
    }
}

impl IsaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return invalid("max_iterations must be at least 1");
        }
        if !(self.convergence_tolerance > 0.0) || !(self.rank_tolerance > 0.0) {
            return invalid("ISA tolerances must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub mu_hat: DenseMatrix,
    pub effective_rank: usize,
    pub iterations: usize,
    /// Last relative step size; `0` for the one-shot estimators.
    pub final_residual: f64,
}

impl EstimateResult {
    fn transposed(self, flag: bool) -> Self {
        if flag {
            Self {
                mu_hat: self.mu_hat.transpose(),
                ..self
            }
        } else {
            self
        }
    }
}

/// Returns `Xᵀ` and `true` when `X` has more columns than rows, else a copy
/// of `X` and `false`.
pub fn orient(x: &DenseMatrix) -> (DenseMatrix, bool) {
    if x.ncols() > x.nrows() {
        (x.transpose(), true)
    } else {
        (x.clone(), false)
    }
}

const DEFAULT_RANK_TOLERANCE: f64 = 1e-7;

fn rank_of(mu: &DenseMatrix, reference_d1: f64, rel_tol: f64) -> Result<usize> {
    let d = svd(mu)?.d;
    if reference_d1 <= 0.0 {
        return Ok(0);
    }
    Ok(d.iter().filter(|&&x| x > rel_tol * reference_d1).count())
}

fn check_rank(x: &DenseMatrix, k: usize) -> Result<()> {
    let r = x.nrows().min(x.ncols());
    if k == 0 || k > r {
        return invalid(format!("rank {k} outside 1..={r}"));
    }
    Ok(())
}

/// Indices of columns that are not entirely zero together with a zero
/// penalty; the remaining columns are structurally inert.
fn active_columns(x: &DenseMatrix, s: &PenaltyDiagonal) -> Vec<usize> {
    (0..x.ncols())
        .filter(|&j| s.values()[j] > 0.0 || x.column(j).iter().any(|v| *v != 0.0))
        .collect()
}

fn select_columns(x: &DenseMatrix, keep: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(x.nrows(), keep.len(), |i, j| x[(i, keep[j])])
}

fn scatter_columns(reduced: &DenseMatrix, keep: &[usize], ncols: usize) -> DenseMatrix {
    let mut full = DenseMatrix::zeros(reduced.nrows(), ncols);
    for (j, &dst) in keep.iter().enumerate() {
        full.set_column(dst, &reduced.column(j));
    }
    full
}

/// Rank-`k` stable autoencoder `μ̂ = X B_k` for an explicit penalty, without
/// reorientation. Shared by the matrix and correspondence-analysis front ends.
pub fn stable_autoencoder_with_penalty(
    x: &DenseMatrix,
    s: &PenaltyDiagonal,
    k: usize,
) -> Result<EstimateResult> {
    ensure_finite(x, "X")?;
    check_rank(x, k)?;
    let keep = active_columns(x, s);
    let mu_hat = if keep.len() == x.ncols() {
        x * solve_reduced_rank(x, s, k)?
    } else {
        let xr = select_columns(x, &keep);
        let kr = k.min(xr.nrows().min(xr.ncols()));
        if kr == 0 {
            DenseMatrix::zeros(x.nrows(), x.ncols())
        } else {
            let mu = &xr * solve_reduced_rank(&xr, &s.select(&keep), kr)?;
            scatter_columns(&mu, &keep, x.ncols())
        }
    };
    let d1 = svd(x)?.d[0];
    let effective_rank = rank_of(&mu_hat, d1, DEFAULT_RANK_TOLERANCE)?;
    Ok(EstimateResult {
        mu_hat,
        effective_rank,
        iterations: 1,
        final_residual: 0.0,
    })
}

/// Rank-`k` stable autoencoder of `x` under the bootstrap `model`.
pub fn stable_autoencoder(x: &DenseMatrix, model: &NoiseModel, k: usize) -> Result<EstimateResult> {
    let (xo, flipped) = orient(x);
    let s = model.penalty(&xo)?;
    Ok(stable_autoencoder_with_penalty(&xo, &s, k)?.transposed(flipped))
}

/// Ridge shrinkage `d / (1 + λ/d²)` of the top `k` singular values with
/// `λ = δ/(1 − δ) · n σ²`.
pub fn gaussian_sa_closed_form(
    x: &DenseMatrix,
    sigma2: f64,
    delta: f64,
    k: usize,
) -> Result<EstimateResult> {
    let model = NoiseModel::gaussian(sigma2, delta)?;
    let (xo, flipped) = orient(x);
    check_rank(&xo, k)?;
    let lambda = model.odds() * xo.nrows() as f64 * sigma2;
    let f = svd(&xo)?;
    let psi: Vec<f64> = f
        .d
        .iter()
        .enumerate()
        .map(|(l, &d)| if l < k && d > 0.0 { d / (1.0 + lambda / (d * d)) } else { 0.0 })
        .collect();
    let mu_hat = shrink_and_rebuild(&f, &psi)?;
    let effective_rank = psi
        .iter()
        .filter(|&&v| v > 0.0 && v > DEFAULT_RANK_TOLERANCE * f.d[0])
        .count();
    Ok(EstimateResult {
        mu_hat,
        effective_rank,
        iterations: 1,
        final_residual: 0.0,
    }
    .transposed(flipped))
}

/// One step of the fixed-point map: `μ ↦ X (μᵀμ + S)⁻¹ μᵀμ`.
fn isa_step(x: &DenseMatrix, s: &PenaltyDiagonal, mu: &DenseMatrix) -> Result<DenseMatrix> {
    let gram = mu.tr_mul(mu);
    let mut g = gram.clone();
    for (j, sj) in s.values().iter().enumerate() {
        g[(j, j)] += sj;
    }
    let b = match g.clone().cholesky() {
        Some(chol) => chol.solve(&gram),
        None => crate::linalg::ridge_encoder(mu, s)?,
    };
    Ok(x * b)
}

/// Iterated stable autoencoder on `x` with fixed penalty `s`, without
/// reorientation. `observe` sees every iterate, starting with `μ̂₀ = X`.
pub fn iterate_with_penalty<F>(
    x: &DenseMatrix,
    s: &PenaltyDiagonal,
    cfg: &IsaConfig,
    mut observe: F,
) -> Result<EstimateResult>
where
    F: FnMut(&DenseMatrix),
{
    cfg.validate()?;
    ensure_finite(x, "X")?;
    if s.len() != x.ncols() {
        return invalid(format!(
            "penalty has {} entries but X has {} columns",
            s.len(),
            x.ncols()
        ));
    }
    let keep = active_columns(x, s);
    let reduced = keep.len() != x.ncols();
    let (xr, sr) = if reduced {
        (select_columns(x, &keep), s.select(&keep))
    } else {
        (x.clone(), s.clone())
    };
    let scale = x.norm().max(1.0);

    let mut mu = xr.clone();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    if keep.is_empty() {
        residual = 0.0;
    }
    observe(&expand(&mu, &keep, x.ncols(), reduced));
    while !keep.is_empty() && iterations < cfg.max_iterations {
        let next = isa_step(&xr, &sr, &mu)?;
        residual = (&next - &mu).norm() / scale;
        mu = next;
        iterations += 1;
        observe(&expand(&mu, &keep, x.ncols(), reduced));
        if residual < cfg.convergence_tolerance {
            break;
        }
    }
    let mu_hat = expand(&mu, &keep, x.ncols(), reduced);
    let d1 = svd(x)?.d[0];
    let effective_rank = rank_of(&mu_hat, d1, cfg.rank_tolerance)?;
    Ok(EstimateResult {
        mu_hat,
        effective_rank,
        iterations,
        final_residual: residual,
    })
}

fn expand(mu: &DenseMatrix, keep: &[usize], ncols: usize, reduced: bool) -> DenseMatrix {
    if reduced {
        scatter_columns(mu, keep, ncols)
    } else {
        mu.clone()
    }
}

/// Iterated stable autoencoder: the rank is selected by the fixed point.
pub fn iterated_stable_autoencoder(
    x: &DenseMatrix,
    model: &NoiseModel,
    cfg: &IsaConfig,
) -> Result<EstimateResult> {
    iterated_stable_autoencoder_observed(x, model, cfg, |_| {})
}

/// As [`iterated_stable_autoencoder`], reporting each iterate (in the
/// oriented frame) to `observe`.
pub fn iterated_stable_autoencoder_observed<F>(
    x: &DenseMatrix,
    model: &NoiseModel,
    cfg: &IsaConfig,
    observe: F,
) -> Result<EstimateResult>
where
    F: FnMut(&DenseMatrix),
{
    let (xo, flipped) = orient(x);
    let s = model.penalty(&xo)?;
    Ok(iterate_with_penalty(&xo, &s, cfg, observe)?.transposed(flipped))
}

/// Limit of the isotropic iteration at `δ = 1/2`:
/// `ψ(d) = (d + √(d² − 4nσ²)) / 2` when `d² ≥ 4nσ²`, else `0`.
pub fn isa_gaussian_shrinker(d: f64, n: usize, sigma2: f64) -> f64 {
    let threshold = 4.0 * n as f64 * sigma2;
    let d2 = d * d;
    if d2 >= threshold {
        0.5 * (d + (d2 - threshold).sqrt())
    } else {
        0.0
    }
}

pub fn gaussian_isa_closed_form(x: &DenseMatrix, sigma2: f64) -> Result<EstimateResult> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return invalid(format!("sigma2 must be positive, got {sigma2}"));
    }
    let (xo, flipped) = orient(x);
    let f = svd(&xo)?;
    let psi: Vec<f64> = f
        .d
        .iter()
        .map(|&d| isa_gaussian_shrinker(d, xo.nrows(), sigma2))
        .collect();
    let mu_hat = shrink_and_rebuild(&f, &psi)?;
    let effective_rank = psi.iter().filter(|&&v| v > 0.0).count();
    Ok(EstimateResult {
        mu_hat,
        effective_rank,
        iterations: 0,
        final_residual: 0.0,
    }
    .transposed(flipped))
}
