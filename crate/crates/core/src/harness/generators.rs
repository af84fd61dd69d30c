//! Synthetic instances for the simulation studies.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::error::{invalid, Result, SaeError};
use crate::linalg::DenseMatrix;

/// Gaussian low-rank instance `X = μ + ε` with `‖μ‖_F = 1` and
/// `σ = 1 / (SNR √(np))`. Returns `(μ, X, σ)`.
pub fn gaussian_instance<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    k: usize,
    snr: f64,
    rng: &mut R,
) -> Result<(DenseMatrix, DenseMatrix, f64)> {
    if k == 0 || k > n.min(p) {
        return invalid(format!("rank {k} outside 1..={}", n.min(p)));
    }
    if !(snr > 0.0 && snr.is_finite()) {
        return invalid(format!("SNR must be positive, got {snr}"));
    }
    let l = DenseMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal));
    let r = DenseMatrix::from_fn(p, k, |_, _| rng.sample(StandardNormal));
    let mut mu = l * r.transpose();
    let norm = mu.norm();
    mu /= norm;
    let sigma = 1.0 / (snr * ((n * p) as f64).sqrt());
    let noise = Normal::new(0.0, sigma).map_err(|e| SaeError::InvalidInput(e.to_string()))?;
    let x = mu.map(|v| v + noise.sample(rng));
    Ok((mu, x, sigma))
}

pub fn gen_gaussian_instance(
    n: usize,
    p: usize,
    k: usize,
    snr: f64,
    seed: u64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian_instance(n, p, k, snr, &mut rng).map(|(mu, x, _)| (mu, x))
}

pub const POISSON_ROWS: usize = 50;
pub const POISSON_COLS: usize = 20;
/// Target singular values of the Poisson mean, up to scale, sorted.
pub const POISSON_SPECTRUM: [f64; 3] = [1.4, 1.1, 1.0];

/// A separable Gaussian bump confined to a block of rows and columns.
struct Bump {
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    center: (f64, f64),
    width: (f64, f64),
}

// Component 1 is a broad, nearly flat bump over the top-right block,
// component 2 a mid-width bump in the middle, component 3 sits in the
// bottom-left corner. The blocks are disjoint, so the components are
// orthogonal and each one's singular value is its weight; overlapping
// nonnegative bumps cannot reach a spectrum this flat.
const BUMPS: [Bump; 3] = [
    Bump { rows: 0..30, cols: 10..20, center: (14.5, 14.5), width: (12.0, 6.0) },
    Bump { rows: 30..42, cols: 3..10, center: (35.5, 6.0), width: (3.0, 2.0) },
    Bump { rows: 42..50, cols: 0..3, center: (49.0, 0.0), width: (1.5, 0.8) },
];

/// Weights of the three components: the caption order 1.1 : 1.4 : 1.
const WEIGHTS: [f64; 3] = [1.1, 1.4, 1.0];

fn profile(len: usize, support: &std::ops::Range<usize>, center: f64, width: f64) -> DVector<f64> {
    DVector::from_fn(len, |i, _| {
        if !support.contains(&i) {
            return 0.0;
        }
        let z = (i as f64 - center) / width;
        (-0.5 * z * z).exp()
    })
}

/// Rank-3 nonnegative mean with sorted singular values proportional to
/// [`POISSON_SPECTRUM`] and grand total `n_total`.
pub fn poisson_mean(n_total: f64) -> Result<DenseMatrix> {
    if !(n_total > 0.0 && n_total.is_finite()) {
        return invalid(format!("N_total must be positive, got {n_total}"));
    }
    let mut mu = DenseMatrix::zeros(POISSON_ROWS, POISSON_COLS);
    for (b, w) in BUMPS.iter().zip(WEIGHTS) {
        let a = profile(POISSON_ROWS, &b.rows, b.center.0, b.width.0);
        let c = profile(POISSON_COLS, &b.cols, b.center.1, b.width.1);
        mu += (&a * c.transpose()) * (w / (a.norm() * c.norm()));
    }
    let total = mu.sum();
    Ok(mu * (n_total / total))
}

/// Draws `X_ij ~ Poisson(μ_ij)` independently.
pub fn poisson_counts<R: Rng + ?Sized>(mu: &DenseMatrix, rng: &mut R) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(mu.nrows(), mu.ncols());
    for (dst, &m) in out.iter_mut().zip(mu.iter()) {
        *dst = if m > 0.0 {
            Poisson::new(m)
                .map_err(|e| SaeError::InvalidInput(e.to_string()))?
                .sample(rng)
        } else {
            0.0
        };
    }
    Ok(out)
}

pub fn gen_poisson_instance(n_total: f64, seed: u64) -> Result<(DenseMatrix, DenseMatrix)> {
    let mu = poisson_mean(n_total)?;
    let x = poisson_counts(&mu, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok((mu, x))
}
