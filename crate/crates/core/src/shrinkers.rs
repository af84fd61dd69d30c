//! Classical singular-value shrinkers and noise-level estimators used as
//! baselines.
//!
//! Every shrinker keeps the singular vectors of `X` and maps the singular
//! values through a scalar rule. Rules that depend on the aspect ratio use the
//! orientation with `n ≥ p`, so `β = p/n ≤ 1`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::orient;
use crate::linalg::{shrink_and_rebuild, svd, DenseMatrix, SvdFactors};

/// Noise scale used by the low-noise shrinker: the rule is printed with a bare
/// `σ²`, while the other rules scale with `n σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LnScale {
    #[default]
    Sigma2,
    NSigma2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShrinkerSpec {
    TsvdK { k: usize },
    TsvdTau { sigma: f64 },
    Asymp { sigma: f64 },
    LowNoise { k: usize, sigma: f64, #[serde(default)] scale: LnScale },
    SvstSure { sigma: f64 },
}

/// Output of a shrinker: the estimate and the number of singular values it
/// kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Shrunk {
    pub estimate: DenseMatrix,
    pub rank: usize,
}

impl ShrinkerSpec {
    pub fn validate(&self) -> Result<()> {
        let (k, sigma) = match *self {
            Self::TsvdK { k } => (Some(k), None),
            Self::LowNoise { k, sigma, .. } => (Some(k), Some(sigma)),
            Self::TsvdTau { sigma } | Self::Asymp { sigma } | Self::SvstSure { sigma } => {
                (None, Some(sigma))
            }
        };
        if k == Some(0) {
            return invalid("shrinker rank must be at least 1");
        }
        if let Some(s) = sigma {
            if !(s > 0.0 && s.is_finite()) {
                return invalid(format!("sigma must be positive, got {s}"));
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<Shrunk> {
        self.validate()?;
        match *self {
            Self::TsvdK { k } => with_rank(tsvd_k(x, k)?, k.min(x.nrows().min(x.ncols()))),
            Self::TsvdTau { sigma } => shrink_oriented(x, |d, n, p| tau_rule(d, n, p, sigma)),
            Self::Asymp { sigma } => shrink_oriented(x, |d, n, p| asymp_rule(d, n, p, sigma)),
            Self::LowNoise { k, sigma, scale } => ln_shrink_scaled(x, k, sigma, scale),
            Self::SvstSure { sigma } => svst_sure(x, sigma).map(|s| s.shrunk),
        }
    }
}

fn with_rank(estimate: DenseMatrix, rank: usize) -> Result<Shrunk> {
    Ok(Shrunk { estimate, rank })
}

/// Applies a singular-value rule `ψ(d; n, p)` on the `n ≥ p` orientation.
fn shrink_oriented<F>(x: &DenseMatrix, rule: F) -> Result<Shrunk>
where
    F: Fn(&[f64], usize, usize) -> Vec<f64>,
{
    let (xo, flipped) = orient(x);
    let f = svd(&xo)?;
    let psi = rule(f.d.as_slice(), xo.nrows(), xo.ncols());
    let est = shrink_and_rebuild(&f, &psi)?;
    let rank = psi.iter().filter(|&&v| v > 0.0).count();
    Ok(Shrunk {
        estimate: if flipped { est.transpose() } else { est },
        rank,
    })
}

/// Best rank-`k` approximation of `x`.
pub fn tsvd_k(x: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let r = x.nrows().min(x.ncols());
    if k == 0 || k > r {
        return invalid(format!("rank {k} outside 1..={r}"));
    }
    truncate(&svd(x)?, k)
}

fn truncate(f: &SvdFactors, k: usize) -> Result<DenseMatrix> {
    let psi: Vec<f64> = f
        .d
        .iter()
        .enumerate()
        .map(|(l, &d)| if l < k { d } else { 0.0 })
        .collect();
    shrink_and_rebuild(f, &psi)
}

/// `λ*(β)` such that the hard threshold `λ*(β) √n σ` is asymptotically
/// optimal for known noise level.
pub fn optimal_threshold_coefficient(beta: f64) -> f64 {
    let b1 = beta + 1.0;
    (2.0 * b1 + 8.0 * beta / (b1 + (beta * beta + 14.0 * beta + 1.0).sqrt())).sqrt()
}

fn tau_rule(d: &[f64], n: usize, p: usize, sigma: f64) -> Vec<f64> {
    let beta = p as f64 / n as f64;
    let tau = optimal_threshold_coefficient(beta) * (n as f64).sqrt() * sigma;
    d.iter().map(|&v| if v > tau { v } else { 0.0 }).collect()
}

/// Hard thresholding at `λ*(β) √n σ`.
pub fn tsvd_tau(x: &DenseMatrix, sigma: f64) -> Result<DenseMatrix> {
    ShrinkerSpec::TsvdTau { sigma }.apply(x).map(|s| s.estimate)
}

/// Frobenius-optimal shrinker in the Marchenko–Pastur regime:
/// `ψ(d) = √((d² − (1+β)nσ²)² − 4βn²σ⁴) / d` above the bulk edge
/// `(1+√β)² n σ²`, zero below it.
pub fn asymp_shrinker(d: f64, n: usize, p: usize, sigma: f64) -> f64 {
    let beta = p as f64 / n as f64;
    let ns2 = n as f64 * sigma * sigma;
    let d2 = d * d;
    if d <= 0.0 || d2 < (1.0 + beta.sqrt()).powi(2) * ns2 {
        return 0.0;
    }
    let a = d2 - (1.0 + beta) * ns2;
    let radicand = a * a - 4.0 * beta * ns2 * ns2;
    radicand.max(0.0).sqrt() / d
}

fn asymp_rule(d: &[f64], n: usize, p: usize, sigma: f64) -> Vec<f64> {
    d.iter().map(|&v| asymp_shrinker(v, n, p, sigma)).collect()
}

pub fn asymp(x: &DenseMatrix, sigma: f64) -> Result<DenseMatrix> {
    ShrinkerSpec::Asymp { sigma }.apply(x).map(|s| s.estimate)
}

/// Low-noise shrinker `d_l (1 − σ²/d_l²)` on the top `k` singular values,
/// clamped at zero.
pub fn ln_shrink(x: &DenseMatrix, k: usize, sigma: f64) -> Result<DenseMatrix> {
    ln_shrink_scaled(x, k, sigma, LnScale::Sigma2).map(|s| s.estimate)
}

pub fn ln_shrink_scaled(x: &DenseMatrix, k: usize, sigma: f64, scale: LnScale) -> Result<Shrunk> {
    let r = x.nrows().min(x.ncols());
    if k == 0 || k > r {
        return invalid(format!("rank {k} outside 1..={r}"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return invalid(format!("sigma must be nonnegative, got {sigma}"));
    }
    shrink_oriented(x, |d, n, _| {
        let s2 = match scale {
            LnScale::Sigma2 => sigma * sigma,
            LnScale::NSigma2 => n as f64 * sigma * sigma,
        };
        d.iter()
            .enumerate()
            .map(|(l, &v)| {
                if l < k && v > 0.0 {
                    (v * (1.0 - s2 / (v * v))).max(0.0)
                } else {
                    0.0
                }
            })
            .collect()
    })
}

/// Result of singular-value soft thresholding with a SURE-selected level.
#[derive(Debug, Clone, PartialEq)]
pub struct SvstResult {
    pub shrunk: Shrunk,
    pub tau: f64,
    pub sure: f64,
}

/// Stein unbiased risk estimate of soft thresholding at `tau` for an `n × p`
/// matrix with singular values `d` (descending) and noise level `sigma`.
pub fn sure_soft_threshold(d: &[f64], n: usize, p: usize, sigma: f64, tau: f64) -> f64 {
    let s2 = sigma * sigma;
    let fit: f64 = d.iter().map(|&v| v.min(tau).powi(2)).sum();
    -((n * p) as f64) * s2 + fit + 2.0 * s2 * soft_threshold_divergence(d, n, p, tau)
}

/// Divergence of the soft-thresholding spectral map. Singular values closer
/// than `1e-10` are separated by `1e-9 · d₁` first.
pub fn soft_threshold_divergence(d: &[f64], n: usize, p: usize, tau: f64) -> f64 {
    let d = separate_ties(d);
    let gap = n.abs_diff(p) as f64;
    let mut div = 0.0;
    for (i, &di) in d.iter().enumerate() {
        if di <= tau {
            continue;
        }
        div += 1.0 + gap * (1.0 - tau / di);
        let cross: f64 = d
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &dj)| di * (di - tau) / (di * di - dj * dj))
            .sum();
        div += 2.0 * cross;
    }
    div
}

fn separate_ties(d: &[f64]) -> Vec<f64> {
    let mut out = d.to_vec();
    let nudge = 1e-9 * d.first().copied().unwrap_or(0.0);
    for i in 1..out.len() {
        if out[i - 1] - out[i] < 1e-10 {
            out[i] = out[i - 1] - nudge;
        }
    }
    out
}

/// Soft thresholding with `τ` chosen among `{0} ∪ {d_l}` by minimal SURE.
pub fn svst_sure(x: &DenseMatrix, sigma: f64) -> Result<SvstResult> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid(format!("sigma must be positive, got {sigma}"));
    }
    let (xo, flipped) = orient(x);
    let (n, p) = xo.shape();
    let f = svd(&xo)?;
    let d = f.d.as_slice();
    let mut best = (0.0, sure_soft_threshold(d, n, p, sigma, 0.0));
    for &tau in d.iter().rev() {
        let value = sure_soft_threshold(d, n, p, sigma, tau);
        if value < best.1 {
            best = (tau, value);
        }
    }
    let (tau, sure) = best;
    let psi: Vec<f64> = d.iter().map(|&v| (v - tau).max(0.0)).collect();
    let est = shrink_and_rebuild(&f, &psi)?;
    Ok(SvstResult {
        shrunk: Shrunk {
            estimate: if flipped { est.transpose() } else { est },
            rank: psi.iter().filter(|&&v| v > 0.0).count(),
        },
        tau,
        sure,
    })
}

/// Residual variance estimate `‖X − X_k‖² / (np − nk − kp + k²)`; `k = 0`
/// uses `X` itself as the residual.
pub fn estimate_sigma_residual(x: &DenseMatrix, k: usize) -> Result<f64> {
    let (n, p) = x.shape();
    let dof = (n as f64 - k as f64) * (p as f64 - k as f64);
    if k >= n.min(p) || dof <= 0.0 {
        return invalid(format!("no residual degrees of freedom for rank {k} on {n}x{p}"));
    }
    let resid = if k == 0 {
        x.norm_squared()
    } else {
        let d = svd(x)?.d;
        d.iter().skip(k).map(|v| v * v).sum()
    };
    Ok(resid / dof)
}

/// Robust noise level `d_med / √(n μ_β)` from the median singular value and
/// the Marchenko–Pastur median.
pub fn estimate_sigma_mp(x: &DenseMatrix) -> Result<f64> {
    let (xo, _) = orient(x);
    let (n, p) = xo.shape();
    if p < 2 {
        return invalid(format!("need at least 2 rows and columns, got {n}x{p}"));
    }
    let mut d = svd(&xo)?.d.as_slice().to_vec();
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    Ok(median / (n as f64 * marchenko_pastur::median(p as f64 / n as f64)?).sqrt())
}

/// Unit-variance Marchenko–Pastur law for aspect ratio `β ∈ (0, 1]`.
pub mod marchenko_pastur {
    use std::f64::consts::PI;

    use crate::error::{invalid, Result};

    const QUAD_TOL: f64 = 1e-13;

    fn edges(beta: f64) -> (f64, f64) {
        ((1.0 - beta.sqrt()).powi(2), (1.0 + beta.sqrt()).powi(2))
    }

    fn check(beta: f64) -> Result<()> {
        if !(beta > 0.0 && beta <= 1.0) {
            return invalid(format!("aspect ratio must lie in (0, 1], got {beta}"));
        }
        Ok(())
    }

    /// Density `√((b − x)(x − a)) / (2πβx)` on `[a, b]`.
    pub fn density(x: f64, beta: f64) -> f64 {
        let (a, b) = edges(beta);
        if x <= a || x >= b {
            return 0.0;
        }
        ((b - x) * (x - a)).sqrt() / (2.0 * PI * beta * x)
    }

    // Integrating in θ with x = a + h(1 − cos θ) removes the square-root
    // endpoint singularities.
    fn integrand(theta: f64, beta: f64) -> f64 {
        let (a, b) = edges(beta);
        let h = 0.5 * (b - a);
        let c = theta.cos();
        if a == 0.0 {
            return h * (1.0 + c) / (2.0 * PI * beta);
        }
        h * h * (1.0 - c) * (1.0 + c) / (2.0 * PI * beta * (a + h * (1.0 - c)))
    }

    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn adaptive(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }

    fn integrate_theta(beta: f64, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        let f = |t: f64| integrand(t, beta);
        let (fa, fm, fb) = (f(0.0), f(0.5 * theta), f(theta));
        let whole = simpson(0.0, theta, fa, fm, fb);
        adaptive(&f, 0.0, theta, fa, fm, fb, whole, QUAD_TOL, 40)
    }

    fn theta_of(x: f64, beta: f64) -> f64 {
        let (a, b) = edges(beta);
        let h = 0.5 * (b - a);
        (1.0 - (x - a) / h).clamp(-1.0, 1.0).acos()
    }

    /// `P(λ ≤ x)`.
    pub fn cdf(x: f64, beta: f64) -> Result<f64> {
        check(beta)?;
        let (a, b) = edges(beta);
        if x <= a {
            return Ok(0.0);
        }
        if x >= b {
            return Ok(1.0);
        }
        Ok(integrate_theta(beta, theta_of(x, beta)))
    }

    /// Median `μ_β`, solved by bisection on the quadrature CDF.
    pub fn median(beta: f64) -> Result<f64> {
        check(beta)?;
        let (a, b) = edges(beta);
        let h = 0.5 * (b - a);
        let (mut lo, mut hi) = (0.0, PI);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if integrate_theta(beta, mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        Ok(a + h * (1.0 - (0.5 * (lo + hi)).cos()))
    }
}
