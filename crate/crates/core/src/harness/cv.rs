//! Cell-wise cross-validation of the bootstrap parameter `δ`.
//!
//! Each fold hides a random subset of cells. Hidden cells start from the
//! additive row + column fit of the visible ones and are then imputed by
//! alternating between fitting the estimator and refilling the hidden cells
//! with its prediction. The score is the squared error of the final
//! prediction on the hidden cells.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::{iterated_stable_autoencoder, stable_autoencoder, IsaConfig};
use crate::linalg::{ensure_finite, DenseMatrix};
use crate::noise::{NoiseKind, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CvEstimator {
    Sa { k: usize },
    Isa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub delta_grid: Vec<f64>,
    pub holdout_fraction: f64,
    pub folds: usize,
    pub seed: u64,
    pub estimator: CvEstimator,
    #[serde(default = "default_impute_iterations")]
    pub impute_iterations: usize,
    #[serde(default = "default_impute_tolerance")]
    pub impute_tolerance: f64,
    #[serde(default)]
    pub isa: IsaConfig,
}

fn default_impute_iterations() -> usize {
    100
}

fn default_impute_tolerance() -> f64 {
    1e-6
}

impl CvConfig {
    pub fn new(delta_grid: Vec<f64>, holdout_fraction: f64, folds: usize, seed: u64, estimator: CvEstimator) -> Self {
        Self {
            delta_grid,
            holdout_fraction,
            folds,
            seed,
            estimator,
            impute_iterations: default_impute_iterations(),
            impute_tolerance: default_impute_tolerance(),
            isa: IsaConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_grid.is_empty() {
            return invalid("delta grid is empty");
        }
        if let Some(d) = self.delta_grid.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            return invalid(format!("grid values must lie in (0, 1), got {d}"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 0.5) {
            return invalid(format!(
                "holdout fraction must lie in (0, 0.5), got {}",
                self.holdout_fraction
            ));
        }
        if self.folds == 0 {
            return invalid("need at least one fold");
        }
        if self.impute_iterations == 0 {
            return invalid("need at least one imputation pass");
        }
        if let CvEstimator::Sa { k: 0 } = self.estimator {
            return invalid("rank must be at least 1");
        }
        self.isa.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub delta: f64,
    /// `(δ, mean holdout squared error)` in ascending `δ` order.
    pub errors: Vec<(f64, f64)>,
}

const MAX_MASK_DRAWS: usize = 1000;

fn draw_mask<R: Rng + ?Sized>(n: usize, p: usize, count: usize, rng: &mut R) -> Result<Vec<bool>> {
    for _ in 0..MAX_MASK_DRAWS {
        let mut hidden = vec![false; n * p];
        for c in index::sample(rng, n * p, count).iter() {
            hidden[c] = true;
        }
        // Column-major: cell (i, j) is at i + j n.
        let full_row = (0..n).any(|i| (0..p).all(|j| hidden[i + j * n]));
        let full_col = (0..p).any(|j| (0..n).all(|i| hidden[i + j * n]));
        if !full_row && !full_col {
            return Ok(hidden);
        }
    }
    invalid("could not draw a mask leaving every row and column observed")
}

/// Least-squares additive fit `a_i + b_j` of the visible cells, by
/// alternating row and column means.
fn additive_fit(x: &DenseMatrix, hidden: &[bool]) -> DenseMatrix {
    let (n, p) = x.shape();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; p];
    for _ in 0..50 {
        for (i, ai) in a.iter_mut().enumerate() {
            let (s, c) = (0..p)
                .filter(|&j| !hidden[i + j * n])
                .fold((0.0, 0.0), |(s, c), j| (s + x[(i, j)] - b[j], c + 1.0));
            *ai = s / c;
        }
        for (j, bj) in b.iter_mut().enumerate() {
            let (s, c) = (0..n)
                .filter(|&i| !hidden[i + j * n])
                .fold((0.0, 0.0), |(s, c), i| (s + x[(i, j)] - a[i], c + 1.0));
            *bj = s / c;
        }
    }
    DenseMatrix::from_fn(n, p, |i, j| a[i] + b[j])
}

fn fit(x: &DenseMatrix, kind: NoiseKind, delta: f64, cfg: &CvConfig) -> Result<DenseMatrix> {
    let mut model_input = x.clone();
    if kind == NoiseKind::Poisson {
        // Imputed counts can dip below zero; the variance model needs them
        // nonnegative.
        model_input.apply(|v| *v = v.max(0.0));
    }
    let model = NoiseModel::new(kind, delta)?;
    let est = match cfg.estimator {
        CvEstimator::Sa { k } => stable_autoencoder(&model_input, &model, k)?,
        CvEstimator::Isa => iterated_stable_autoencoder(&model_input, &model, &cfg.isa)?,
    };
    Ok(est.mu_hat)
}

fn holdout_error(
    x: &DenseMatrix,
    hidden: &[bool],
    kind: NoiseKind,
    delta: f64,
    cfg: &CvConfig,
) -> Result<f64> {
    let mut filled = x.clone();
    let start = additive_fit(x, hidden);
    for (c, &h) in hidden.iter().enumerate() {
        if h {
            filled[c] = start[c];
        }
    }
    let scale = x.norm().max(1.0);
    let mut pred = fit(&filled, kind, delta, cfg)?;
    for _ in 1..cfg.impute_iterations {
        let mut change = 0.0;
        for (c, &h) in hidden.iter().enumerate() {
            if h {
                change += (pred[c] - filled[c]).powi(2);
                filled[c] = pred[c];
            }
        }
        if change.sqrt() / scale < cfg.impute_tolerance {
            break;
        }
        pred = fit(&filled, kind, delta, cfg)?;
    }
    let (sum, count) = hidden
        .iter()
        .enumerate()
        .filter(|(_, &h)| h)
        .fold((0.0, 0usize), |(s, c), (cell, _)| (s + (pred[cell] - x[cell]).powi(2), c + 1));
    Ok(sum / count as f64)
}

/// Returns the grid value with the smallest mean holdout error; ties go to
/// the smaller `δ`.
pub fn cross_validate_delta(x: &DenseMatrix, kind: NoiseKind, cfg: &CvConfig) -> Result<CvResult> {
    cfg.validate()?;
    ensure_finite(x, "X")?;
    let mut grid = cfg.delta_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let (n, p) = x.shape();
    let count = ((cfg.holdout_fraction * (n * p) as f64).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let masks = (0..cfg.folds)
        .map(|_| draw_mask(n, p, count, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut errors = Vec::with_capacity(grid.len());
    for &delta in &grid {
        let mut total = 0.0;
        for hidden in &masks {
            total += holdout_error(x, hidden, kind, delta, cfg)?;
        }
        errors.push((delta, total / masks.len() as f64));
    }
    let mut best = errors[0];
    for &e in &errors[1..] {
        if e.1 < best.1 {
            best = e;
        }
    }
    Ok(CvResult { delta: best.0, errors })
}
