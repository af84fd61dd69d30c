//! Bootstrap noise models.
//!
//! A [`NoiseModel`] describes how pseudo-datasets `X̃` are drawn around an
//! observed matrix `X`. The estimators only need the cell variances
//! ([`NoiseModel::variance_matrix`]) and their column sums
//! ([`penalty_diagonal`]); [`NoiseModel::sample`] draws actual pseudo-datasets
//! for Monte-Carlo checks and cross-validation.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{ensure_finite, DenseMatrix, PenaltyDiagonal};

/// Below this count the binomial thinning is sampled by CDF inversion.
const INVERSION_LIMIT: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Additive isotropic noise with known variance `σ²`.
    Gaussian { sigma2: f64 },
    /// Count data; the bootstrap keeps each unit count with probability
    /// `1 − δ` and rescales by `1/(1 − δ)`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    kind: NoiseKind,
    delta: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return invalid(format!("delta must lie in (0, 1), got {delta}"));
        }
        if let NoiseKind::Gaussian { sigma2 } = kind {
            if !(sigma2 > 0.0 && sigma2.is_finite()) {
                return invalid(format!("sigma2 must be positive, got {sigma2}"));
            }
        }
        Ok(Self { kind, delta })
    }

    pub fn gaussian(sigma2: f64, delta: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian { sigma2 }, delta)
    }

    pub fn poisson(delta: f64) -> Result<Self> {
        Self::new(NoiseKind::Poisson, delta)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `δ / (1 − δ)`, the multiplier on every bootstrap variance.
    pub fn odds(&self) -> f64 {
        self.delta / (1.0 - self.delta)
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<()> {
        ensure_finite(x, "X")?;
        if self.kind == NoiseKind::Poisson {
            if let Some(bad) = x.iter().find(|v| **v < 0.0) {
                return invalid(format!("Poisson model needs nonnegative counts, found {bad}"));
            }
        }
        Ok(())
    }

    /// Cell variances `Var[X̃_ij]` of the bootstrap distribution around `x`.
    pub fn variance_matrix(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(x)?;
        let odds = self.odds();
        Ok(match self.kind {
            NoiseKind::Gaussian { sigma2 } => {
                DenseMatrix::from_element(x.nrows(), x.ncols(), odds * sigma2)
            }
            NoiseKind::Poisson => x * odds,
        })
    }

    /// Penalty `S` of the stable autoencoder for data `x`.
    pub fn penalty(&self, x: &DenseMatrix) -> Result<PenaltyDiagonal> {
        penalty_diagonal(&self.variance_matrix(x)?)
    }

    /// Draw one pseudo-dataset `X̃`.
    pub fn sample<R: Rng + ?Sized>(&self, x: &DenseMatrix, rng: &mut R) -> Result<DenseMatrix> {
        self.check_input(x)?;
        match self.kind {
            NoiseKind::Gaussian { sigma2 } => {
                let normal = Normal::new(0.0, (self.odds() * sigma2).sqrt())
                    .map_err(|e| crate::SaeError::InvalidInput(e.to_string()))?;
                Ok(x.map(|v| v + normal.sample(rng)))
            }
            NoiseKind::Poisson => {
                let keep = 1.0 - self.delta;
                let mut out = DenseMatrix::zeros(x.nrows(), x.ncols());
                // Column-major walk keeps the draw order fixed for a given seed.
                for (dst, &count) in out.iter_mut().zip(x.iter()) {
                    let n = as_count(count)?;
                    *dst = binomial(n, keep, rng)? as f64 / keep;
                }
                Ok(out)
            }
        }
    }
}

fn as_count(v: f64) -> Result<u64> {
    let r = v.round();
    if (v - r).abs() > 1e-9 || r < 0.0 {
        return invalid(format!("Poisson sampling needs integer counts, found {v}"));
    }
    Ok(r as u64)
}

/// Exact `Binomial(n, q)` draw.
pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, q: f64, rng: &mut R) -> Result<u64> {
    if n == 0 || q <= 0.0 {
        return Ok(0);
    }
    if q >= 1.0 {
        return Ok(n);
    }
    if n >= INVERSION_LIMIT {
        let dist = Binomial::new(n, q).map_err(|e| crate::SaeError::InvalidInput(e.to_string()))?;
        return Ok(dist.sample(rng));
    }
    // Invert on the rarer outcome so (1 − q)^n cannot underflow.
    if q > 0.5 {
        return Ok(n - invert_binomial(n, 1.0 - q, rng));
    }
    Ok(invert_binomial(n, q, rng))
}

fn invert_binomial<R: Rng + ?Sized>(n: u64, q: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let ratio = q / (1.0 - q);
    let mut pk = (1.0 - q).powi(n as i32);
    let mut cdf = pk;
    let mut k = 0;
    while u > cdf && k < n {
        pk *= ratio * (n - k) as f64 / (k + 1) as f64;
        k += 1;
        cdf += pk;
    }
    k
}

/// Column sums of a cell-variance matrix: `S_jj = Σ_i V_ij`.
pub fn penalty_diagonal(v: &DenseMatrix) -> Result<PenaltyDiagonal> {
    ensure_finite(v, "variance matrix")?;
    if let Some(bad) = v.iter().find(|x| **x < 0.0) {
        return invalid(format!("variances must be nonnegative, found {bad}"));
    }
    PenaltyDiagonal::new(v.row_sum().transpose())
}
