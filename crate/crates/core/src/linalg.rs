//! Dense decompositions and the rank-constrained weighted solve shared by
//! every estimator.
//!
//! Matrices are plain [`nalgebra::DMatrix<f64>`]; the domain-level checks
//! (finiteness, nonnegativity, rank ranges) live in this module.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Result, SaeError};

/// Real dense matrix carrying data, signals, encoders and penalties.
pub type DenseMatrix = DMatrix<f64>;

/// Numerical thresholds used by the solvers. `Default` gives the documented
/// values; callers needing stricter or looser behavior construct their own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinalgConfig {
    /// Eigenvalues of `XᵀX + S` below `eigen_floor · λ_max` are treated as
    /// singular and rejected.
    pub eigen_floor: f64,
}

impl Default for LinalgConfig {
    fn default() -> Self {
        Self { eigen_floor: 1e-12 }
    }
}

pub fn ensure_finite(x: &DenseMatrix, what: &str) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return invalid(format!("{what} is empty ({}x{})", x.nrows(), x.ncols()));
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{what} contains non-finite entries"))
    }
}

/// Thin SVD `X = U diag(d) Vᵀ` with `d` sorted descending.
///
/// Each column of `V` is oriented so that its first component of
/// non-negligible magnitude is positive; `U` is flipped to match.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub d: DVector<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn rank_capacity(&self) -> usize {
        self.d.len()
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    /// `U diag(d) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        rebuild(self, self.d.as_slice())
    }
}

pub fn svd(x: &DenseMatrix) -> Result<SvdFactors> {
    ensure_finite(x, "matrix")?;
    let (n, p) = x.shape();
    let r = n.min(p);
    // nalgebra's SVD can lose whole singular triplets on exactly
    // rank-deficient input (shrunk estimates, ISA iterates), so the
    // factorization goes through faer.
    let raw = faer::Mat::<f64>::from_fn(n, p, |i, j| x[(i, j)])
        .thin_svd()
        .map_err(|e| SaeError::InvalidInput(format!("SVD did not converge: {e:?}")))?;
    let (u_raw, s_raw, v_raw) = (raw.U(), raw.S().column_vector(), raw.V());

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s_raw[b].total_cmp(&s_raw[a]));

    let mut u = DenseMatrix::zeros(n, r);
    let mut v = DenseMatrix::zeros(p, r);
    let mut d = DVector::zeros(r);
    for (dst, &src) in order.iter().enumerate() {
        d[dst] = s_raw[src].max(0.0);
        for i in 0..n {
            u[(i, dst)] = u_raw[(i, src)];
        }
        for j in 0..p {
            v[(j, dst)] = v_raw[(j, src)];
        }
    }
    fix_signs(&mut u, &mut v);
    Ok(SvdFactors { u, d, v })
}

fn fix_signs(u: &mut DenseMatrix, v: &mut DenseMatrix) {
    for l in 0..v.ncols() {
        let col = v.column(l);
        let scale = col.amax();
        let pivot = col.iter().copied().find(|c| c.abs() > 1e-8 * scale);
        if matches!(pivot, Some(c) if c < 0.0) {
            v.column_mut(l).neg_mut();
            u.column_mut(l).neg_mut();
        }
    }
}

fn rebuild(factors: &SvdFactors, values: &[f64]) -> DenseMatrix {
    let (n, p) = (factors.nrows(), factors.ncols());
    let active: Vec<usize> = (0..values.len()).filter(|&l| values[l] != 0.0).collect();
    if active.is_empty() {
        return DenseMatrix::zeros(n, p);
    }
    let mut scaled_u = DenseMatrix::zeros(n, active.len());
    let mut v = DenseMatrix::zeros(p, active.len());
    for (j, &l) in active.iter().enumerate() {
        scaled_u.set_column(j, &(factors.u.column(l) * values[l]));
        v.set_column(j, &factors.v.column(l));
    }
    scaled_u * v.transpose()
}

/// `Σ_l u_l ψ_l v_lᵀ` for a vector of shrunk singular values `ψ`.
pub fn shrink_and_rebuild(factors: &SvdFactors, shrunk: &[f64]) -> Result<DenseMatrix> {
    if shrunk.len() != factors.rank_capacity() {
        return invalid(format!(
            "expected {} shrunk singular values, got {}",
            factors.rank_capacity(),
            shrunk.len()
        ));
    }
    if let Some(bad) = shrunk.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return invalid(format!("shrunk singular values must be finite and >= 0, got {bad}"));
    }
    Ok(rebuild(factors, shrunk))
}

/// Diagonal of the ridge-like penalty `S` (one entry per column of `X`).
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyDiagonal(DVector<f64>);

impl PenaltyDiagonal {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return invalid(format!("penalty entries must be finite and >= 0, got {bad}"));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn zeros(p: usize) -> Self {
        Self(DVector::zeros(p))
    }

    /// `c · S` for `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.0 * c)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_diagonal(&self.0)
    }

    /// Keep only the listed entries, in order.
    pub fn select(&self, keep: &[usize]) -> Self {
        Self(DVector::from_iterator(keep.len(), keep.iter().map(|&j| self.0[j])))
    }
}

/// Inverse symmetric square root of a positive definite matrix, via its
/// eigendecomposition.
fn inv_sqrt_spd(g: &DenseMatrix, cfg: &LinalgConfig) -> Result<DenseMatrix> {
    let eig = SymmetricEigen::new(g.clone());
    let lambda_max = eig.eigenvalues.max();
    let lambda_min = eig.eigenvalues.min();
    if !(lambda_max > 0.0) || lambda_min < cfg.eigen_floor * lambda_max {
        return Err(SaeError::IllPosedPenalty(format!(
            "XᵀX + S has eigenvalue range [{lambda_min:e}, {lambda_max:e}]"
        )));
    }
    let q = &eig.eigenvectors;
    let root = eig.eigenvalues.map(f64::sqrt);
    let mut q_inv_root = q.clone();
    for (j, r) in root.iter().enumerate() {
        q_inv_root.column_mut(j).scale_mut(1.0 / r);
    }
    Ok(&q_inv_root * q.transpose())
}

fn check_penalty(x: &DenseMatrix, s: &PenaltyDiagonal) -> Result<()> {
    ensure_finite(x, "X")?;
    if s.len() != x.ncols() {
        return invalid(format!(
            "penalty has {} entries but X has {} columns",
            s.len(),
            x.ncols()
        ));
    }
    Ok(())
}

/// Unconstrained minimizer `B̂ = (XᵀX + S)⁻¹ XᵀX` of `‖X − XB‖² + ‖S^{1/2}B‖²`.
pub fn ridge_encoder(x: &DenseMatrix, s: &PenaltyDiagonal) -> Result<DenseMatrix> {
    check_penalty(x, s)?;
    let gram = x.tr_mul(x);
    let g_inv_sqrt = inv_sqrt_spd(&(&gram + s.as_matrix()), &LinalgConfig::default())?;
    Ok(&g_inv_sqrt * (&g_inv_sqrt * gram))
}

/// Rank-`k` minimizer of `‖X − XB‖² + ‖S^{1/2}B‖²`.
pub fn solve_reduced_rank(x: &DenseMatrix, s: &PenaltyDiagonal, k: usize) -> Result<DenseMatrix> {
    solve_reduced_rank_with(x, s, k, &LinalgConfig::default())
}

pub fn solve_reduced_rank_with(
    x: &DenseMatrix,
    s: &PenaltyDiagonal,
    k: usize,
    cfg: &LinalgConfig,
) -> Result<DenseMatrix> {
    check_penalty(x, s)?;
    let r = x.nrows().min(x.ncols());
    if k == 0 || k > r {
        return invalid(format!("rank {k} outside 1..={r}"));
    }
    // With G = XᵀX + S the objective equals ‖G^{1/2}(B − B̂)‖² up to a
    // constant, so the rank-k optimum is G^{-1/2} [G^{1/2} B̂]_k.
    let gram = x.tr_mul(x);
    let g_inv_sqrt = inv_sqrt_spd(&(&gram + s.as_matrix()), cfg)?;
    let whitened = &g_inv_sqrt * gram; // G^{1/2} B̂
    let mut factors = svd(&whitened)?;
    for l in k..factors.d.len() {
        factors.d[l] = 0.0;
    }
    Ok(&g_inv_sqrt * factors.reconstruct())
}

/// Objective `‖X − XB‖² + ‖S^{1/2}B‖²`.
pub fn reduced_rank_objective(x: &DenseMatrix, s: &PenaltyDiagonal, b: &DenseMatrix) -> f64 {
    let fit = (x - x * b).norm_squared();
    let penalty: f64 = b
        .row_iter()
        .zip(s.values().iter())
        .map(|(row, sj)| sj * row.norm_squared())
        .sum();
    fit + penalty
}

fn symmetric_part(a: &DenseMatrix, tol: f64, what: &str) -> Result<DenseMatrix> {
    if !a.is_square() {
        return invalid(format!("{what} is not square"));
    }
    ensure_finite(a, what)?;
    let asym = (a - a.transpose()).amax();
    if asym > tol {
        return invalid(format!("{what} is not symmetric (max asymmetry {asym:e})"));
    }
    Ok((a + a.transpose()) * 0.5)
}

/// Loewner order test `A ⪯ B`: the smallest eigenvalue of `B − A` is at
/// least `−tol`.
pub fn psd_leq(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> Result<bool> {
    if a.shape() != b.shape() {
        return invalid(format!("shape mismatch {:?} vs {:?}", a.shape(), b.shape()));
    }
    let a = symmetric_part(a, tol, "A")?;
    let b = symmetric_part(b, tol, "B")?;
    Ok(min_eigenvalue(&(b - a)) >= -tol)
}

pub fn min_eigenvalue(sym: &DenseMatrix) -> f64 {
    SymmetricEigen::new(sym.clone()).eigenvalues.min()
}
