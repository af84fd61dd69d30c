//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use sae_core::estimators::{iterated_stable_autoencoder_observed, IsaConfig};
use sae_core::linalg::{min_eigenvalue, PenaltyDiagonal};
use sae_core::noise::NoiseModel;

pub type Mat = DMatrix<f64>;

pub fn gaussian_matrix<R: Rng>(n: usize, p: usize, rng: &mut R) -> Mat {
    Mat::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

/// `n × k` matrix with orthonormal columns.
pub fn random_orthonormal<R: Rng>(n: usize, k: usize, rng: &mut R) -> Mat {
    let q = gaussian_matrix(n, k, rng).qr().q();
    q.columns(0, k).into_owned()
}

/// `U diag(d) Vᵀ` with random orthonormal `U`, `V`.
pub fn with_spectrum<R: Rng>(n: usize, p: usize, d: &[f64], rng: &mut R) -> Mat {
    let k = d.len();
    let u = random_orthonormal(n, k, rng);
    let v = random_orthonormal(p, k, rng);
    u * Mat::from_diagonal(&DVector::from_column_slice(d)) * v.transpose()
}

/// Thin SVD `(U, d, V)` straight from faer, bypassing the library wrapper.
pub fn thin_svd(x: &Mat) -> (Mat, DVector<f64>, Mat) {
    let s = faer::Mat::<f64>::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)])
        .thin_svd()
        .unwrap();
    let r = x.nrows().min(x.ncols());
    let u = Mat::from_fn(x.nrows(), r, |i, j| s.U()[(i, j)]);
    let v = Mat::from_fn(x.ncols(), r, |i, j| s.V()[(i, j)]);
    let d = DVector::from_fn(r, |i, _| s.S().column_vector()[i]);
    (u, d, v)
}

/// Applies a scalar rule to the singular values of `x`; `n` passed to the
/// rule is the larger dimension.
pub fn shrink_by(x: &Mat, rule: impl Fn(f64, usize, usize) -> f64) -> Mat {
    let (n, p) = x.shape();
    let big = n.max(p);
    let (u, d, v) = thin_svd(x);
    let d = d.map(|s| rule(s, big, n.min(p)));
    u * Mat::from_diagonal(&d) * v.transpose()
}

/// Rank-`k` ridge shrinkage `d / (1 + λ/d²)` of the top `k` singular values,
/// with `λ = δ/(1 − δ) · max(n, p) · σ²`.
pub fn sa_gaussian_oracle(x: &Mat, sigma2: f64, delta: f64, k: usize) -> Mat {
    let lambda_per_n = delta / (1.0 - delta) * sigma2;
    let (u, sv, v) = thin_svd(x);
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let big = x.nrows().max(x.ncols()) as f64;
    let mut d = DVector::zeros(sv.len());
    for &l in order.iter().take(k) {
        let s = sv[l];
        d[l] = s / (1.0 + lambda_per_n * big / (s * s));
    }
    u * Mat::from_diagonal(&d) * v.transpose()
}

/// Fixed point of the isotropic iteration at `δ = 1/2`, solved as the largest
/// root of `ψ = d ψ² / (nσ² + ψ²)` by bisection (independent of the closed
/// form).
pub fn isa_root(d: f64, n: usize, sigma2: f64) -> f64 {
    let lambda = n as f64 * sigma2;
    // Nonzero roots solve ψ² − dψ + λ = 0; the larger one lies in [d/2, d].
    let g = |psi: f64| psi * psi - d * psi + lambda;
    if g(d / 2.0) > 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (d / 2.0, d);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Optimal operator-norm shrinker for square matrices, written with the
/// outer-radical form.
pub fn psi_op(d: f64, n: usize, sigma2: f64) -> f64 {
    let ns2 = n as f64 * sigma2;
    if d * d < 4.0 * ns2 {
        return 0.0;
    }
    let a = d * d - 2.0 * ns2;
    let inner = (a * a - 4.0 * ns2 * ns2).max(0.0).sqrt();
    ((a + inner) / 2.0).sqrt()
}

/// Pearson's statistic `Σ (O − E)² / E` computed cell by cell.
pub fn chi_square_direct(x: &Mat) -> f64 {
    let r: Vec<f64> = (0..x.nrows()).map(|i| x.row(i).sum()).collect();
    let c: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).sum()).collect();
    let n: f64 = r.iter().sum();
    let mut chi = 0.0;
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let e = r[i] * c[j] / n;
            chi += (x[(i, j)] - e).powi(2) / e;
        }
    }
    chi
}

/// Objective of the best `B = a bᵀ` for a fixed direction `a`:
/// `tr(XᵀX) − ‖XᵀX a‖² / (aᵀ (XᵀX + S) a)`.
fn rank1_profile(gram: &Mat, g: &Mat, a: &DVector<f64>) -> f64 {
    let ga = gram * a;
    gram.trace() - ga.norm_squared() / a.dot(&(g * a))
}

fn direction(p: usize, angles: &[f64]) -> DVector<f64> {
    match p {
        2 => DVector::from_column_slice(&[angles[0].cos(), angles[0].sin()]),
        3 => {
            let (t, f) = (angles[0], angles[1]);
            DVector::from_column_slice(&[t.sin() * f.cos(), t.sin() * f.sin(), t.cos()])
        }
        _ => unreachable!("oracle covers p = 2 and p = 3"),
    }
}

/// Brute-force minimum of `‖X − XB‖² + ‖S^{1/2}B‖²` over rank-one `B`, for
/// two or three columns: a dense angle grid followed by shrinking local
/// pattern search around the best grid point.
pub fn rank1_oracle(x: &Mat, s: &[f64]) -> f64 {
    let p = x.ncols();
    assert!(p == 2 || p == 3);
    let gram = x.transpose() * x;
    let g = &gram + Mat::from_diagonal(&DVector::from_column_slice(s));
    let dims = p - 1;
    let steps = if p == 2 { 20_000 } else { 400 };
    let eval = |ang: &[f64]| rank1_profile(&gram, &g, &direction(p, ang));
    let mut best = (f64::INFINITY, vec![0.0; dims]);
    if p == 2 {
        for i in 0..steps {
            let a = [std::f64::consts::PI * i as f64 / steps as f64];
            let v = eval(&a);
            if v < best.0 {
                best = (v, a.to_vec());
            }
        }
    } else {
        for i in 0..=steps {
            for j in 0..2 * steps {
                let a = [
                    std::f64::consts::PI * i as f64 / steps as f64,
                    std::f64::consts::PI * j as f64 / steps as f64,
                ];
                let v = eval(&a);
                if v < best.0 {
                    best = (v, a.to_vec());
                }
            }
        }
    }
    let mut h = std::f64::consts::PI / steps as f64;
    while h > 1e-13 {
        let mut improved = false;
        for d in 0..dims {
            for sign in [-1.0, 1.0] {
                let mut trial = best.1.clone();
                trial[d] += sign * h;
                let v = eval(&trial);
                if v < best.0 {
                    best = (v, trial);
                    improved = true;
                }
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    best.0
}

pub fn penalty(s: &[f64]) -> PenaltyDiagonal {
    PenaltyDiagonal::from_slice(s).unwrap()
}

/// ISA run in the oriented frame with every iterate's Gram matrix recorded.
pub struct IsaTrace {
    pub x: Mat,
    pub s: Vec<f64>,
    pub grams: Vec<Mat>,
    pub mu_hat: Mat,
    pub effective_rank: usize,
}

pub fn isa_trace(x: &Mat, model: &NoiseModel, cfg: &IsaConfig) -> IsaTrace {
    let (xo, _) = sae_core::estimators::orient(x);
    let s = model.penalty(&xo).unwrap().values().as_slice().to_vec();
    let mut grams = Vec::new();
    let mut last = Mat::zeros(0, 0);
    let res = iterated_stable_autoencoder_observed(x, model, cfg, |mu| {
        grams.push(mu.transpose() * mu);
        last = mu.clone();
    })
    .unwrap();
    IsaTrace {
        x: xo,
        s,
        grams,
        mu_hat: last,
        effective_rank: res.effective_rank,
    }
}

/// Worst consecutive Loewner violation `min λ(M_t − M_{t+1})` along the
/// iterates, and the fixed-point gap `min λ(XᵀX − μ̂ᵀμ̂)`.
pub fn loewner_margins(t: &IsaTrace) -> (f64, f64) {
    let mut worst = f64::INFINITY;
    for w in t.grams.windows(2) {
        worst = worst.min(min_eigenvalue(&sym(&(&w[0] - &w[1]))));
    }
    let fixed = min_eigenvalue(&sym(&(t.x.transpose() * &t.x - t.mu_hat.transpose() * &t.mu_hat)));
    (worst, fixed)
}

fn sym(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Gap check at the fixed point for each eigenvector `u` of `μ̂ᵀμ̂`. Returns
/// `(statement_ok, squared_form_ok)`: the first tests
/// `‖μ̂u‖ ≥ 1/‖XS⁻¹u‖² − 1e-6`, the second `‖μ̂u‖² ‖XS⁻¹u‖² ≥ 1 − 1e-6`;
/// directions with `‖μ̂u‖ < 1e-7 d₁` count as zero for both.
pub fn fixed_point_checks(t: &IsaTrace) -> (bool, bool) {
    let d1 = thin_svd(&t.x).1.max();
    let eig = SymmetricEigen::new(sym(&(t.mu_hat.transpose() * &t.mu_hat)));
    let s_inv = DVector::from_iterator(t.s.len(), t.s.iter().map(|v| if *v > 0.0 { 1.0 / v } else { 0.0 }));
    let (mut statement, mut squared) = (true, true);
    for j in 0..eig.eigenvectors.ncols() {
        let u = eig.eigenvectors.column(j).into_owned();
        let mu_u = (&t.mu_hat * &u).norm();
        if mu_u < 1e-7 * d1 {
            continue;
        }
        let xs = (&t.x * u.component_mul(&s_inv)).norm();
        if mu_u < 1.0 / (xs * xs) - 1e-6 {
            statement = false;
        }
        if mu_u * mu_u * xs * xs < 1.0 - 1e-6 {
            squared = false;
        }
    }
    (statement, squared)
}
