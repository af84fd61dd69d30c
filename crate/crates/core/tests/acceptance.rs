//! The twelve acceptance criteria, one PASS/FAIL line each.

mod common;

use std::time::Instant;

use common::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sae_core::ca::{ca_restore, ca_transform, chi_square_stat};
use sae_core::estimators::{
    gaussian_sa_closed_form, isa_gaussian_shrinker, iterated_stable_autoencoder,
    stable_autoencoder, IsaConfig,
};
use sae_core::harness::{run_study, Method, ReportRow, StudyConfig, StudyReport};
use sae_core::linalg::{reduced_rank_objective, solve_reduced_rank};
use sae_core::noise::NoiseModel;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn c1_sa_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=60);
        let p = rng.random_range(2..=60);
        let x = gaussian_matrix(n, p, &mut rng);
        let k = rng.random_range(1..=n.min(p));
        let sigma2 = rng.random_range(0.05..2.0);
        let delta = rng.random_range(0.1..0.9);
        let model = NoiseModel::gaussian(sigma2, delta).unwrap();
        let generic = stable_autoencoder(&x, &model, k).unwrap().mu_hat;
        let closed = gaussian_sa_closed_form(&x, sigma2, delta, k).unwrap().mu_hat;
        let oracle = sa_gaussian_oracle(&x, sigma2, delta, k);
        worst = worst.max(rel(&generic, &closed)).max(rel(&generic, &oracle));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-8 && secs < 10.0, format!("max rel err {worst:.2e}, {secs:.2}s"))
}

fn c2_rank1_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let x = gaussian_matrix(3, 2, &mut rng);
        let s: Vec<f64> = (0..2).map(|_| rng.random_range(0.05..3.0)).collect();
        let b = solve_reduced_rank(&x, &penalty(&s), 1).unwrap();
        let solver = reduced_rank_objective(&x, &penalty(&s), &b);
        worst = worst.max(solver - rank1_oracle(&x, &s));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-6 && secs < 30.0, format!("max(solver − oracle) {worst:.2e}, {secs:.2}s"))
}

/// The fifty instances shared by the monotonicity and gap criteria: half
/// Gaussian low-rank plus noise, half Poisson counts around a low-rank mean.
fn isa_instances() -> Vec<(Mat, NoiseModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut out = Vec::new();
    for i in 0..50 {
        let n = rng.random_range(5..=30);
        let p = rng.random_range(3..=20);
        let r = rng.random_range(1..=3.min(n.min(p)));
        let delta = rng.random_range(0.2..0.8);
        if i % 2 == 0 {
            let sigma2: f64 = rng.random_range(0.05..1.0);
            let d: Vec<f64> = (0..r).map(|_| rng.random_range(1.0..4.0) * (n as f64).sqrt()).collect();
            let x = with_spectrum(n, p, &d, &mut rng) + gaussian_matrix(n, p, &mut rng) * sigma2.sqrt();
            out.push((x, NoiseModel::gaussian(sigma2, delta).unwrap()));
        } else {
            let a = Mat::from_fn(n, r, |_, _| rng.random_range(0.2..3.0));
            let b = Mat::from_fn(r, p, |_, _| rng.random_range(0.2..3.0));
            let mean = a * b;
            let x = sae_core::harness::generators::poisson_counts(&mean, &mut rng).unwrap();
            out.push((x, NoiseModel::poisson(delta).unwrap()));
        }
    }
    out
}

fn c3_c4_isa(traces: &[IsaTrace]) -> (Outcome, Outcome) {
    let (mut mono, mut fixed) = (f64::INFINITY, f64::INFINITY);
    let (mut statement_fail, mut squared_fail) = (0, 0);
    for t in traces {
        let (m, f) = loewner_margins(t);
        mono = mono.min(m);
        fixed = fixed.min(f);
        let (statement, squared) = fixed_point_checks(t);
        statement_fail += usize::from(!statement);
        squared_fail += usize::from(!squared);
    }
    let c3 = outcome(
        mono >= -1e-8 && fixed >= -1e-8,
        format!("worst step margin {mono:.2e}, worst fixed-point margin {fixed:.2e}"),
    );
    let c4 = outcome(
        statement_fail == 0,
        format!(
            "{statement_fail}/{} instances violate the gap; squared form fails on {squared_fail}",
            traces.len()
        ),
    );
    (c3, c4)
}

fn c5_isotropic_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let cfg = IsaConfig::default();
    let mut worst: f64 = 0.0;
    let mut straddles = 0;
    for _ in 0..20 {
        let n = rng.random_range(20..=40);
        let p = rng.random_range(5..=n);
        let sigma2 = rng.random_range(0.2..2.0);
        let cut = (4.0 * n as f64 * sigma2).sqrt();
        // Singular values on both sides of the threshold, kept away from it.
        let above = rng.random_range(1..=3);
        let below = rng.random_range(1..=2);
        let mut d: Vec<f64> = (0..above).map(|_| cut * rng.random_range(1.3..4.0)).collect();
        d.extend((0..below).map(|_| cut * rng.random_range(0.1..0.7)));
        d.sort_by(|a, b| b.total_cmp(a));
        straddles += usize::from(below > 0 && above > 0);
        let x = with_spectrum(n, p, &d, &mut rng);
        let model = NoiseModel::gaussian(sigma2, 0.5).unwrap();
        let iterated = iterated_stable_autoencoder(&x, &model, &cfg).unwrap().mu_hat;
        let expected = shrink_by(&x, |s, big, _| isa_root(s, big, sigma2));
        worst = worst.max((&iterated - &expected).norm() / x.norm());
    }
    let mut grid_worst: f64 = 0.0;
    for i in 0..100 {
        let d = 6.0 * i as f64 / 99.0;
        let psi = isa_gaussian_shrinker(d, 1, 1.0);
        grid_worst = grid_worst.max((psi * psi - psi_op(d, 1, 1.0).powi(2)).abs());
    }
    outcome(
        worst < 1e-6 && straddles >= 1 && grid_worst < 1e-10,
        format!("max rel err {worst:.2e} over 20 instances ({straddles} straddle); ψ² vs ψ²_op {grid_worst:.2e}"),
    )
}

fn c6_ca_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut round, mut chi, mut indep): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..20 {
        let n = rng.random_range(2..=15);
        let p = rng.random_range(2..=15);
        let x = Mat::from_fn(n, p, |_, _| rng.random_range(1..30) as f64);
        let dec = ca_transform(&x).unwrap();
        round = round.max(rel(&ca_restore(&dec.m, &dec).unwrap(), &x));
        let direct = chi_square_direct(&x);
        let via_m = dec.total * dec.m.norm_squared();
        chi = chi.max((via_m - direct).abs() / direct.max(1.0));
        chi = chi.max((chi_square_stat(&x).unwrap() - direct).abs() / direct.max(1.0));
        let r = DVector::from_fn(n, |_, _| rng.random_range(1.0..10.0));
        let c = DVector::from_fn(p, |_, _| rng.random_range(1.0..10.0));
        let table = &r * c.transpose();
        indep = indep.max(ca_transform(&table).unwrap().m.amax());
    }
    outcome(
        round < 1e-10 && chi < 1e-9 && indep < 1e-12,
        format!("round trip {round:.2e}, χ² {chi:.2e}, independence max|M| {indep:.2e}"),
    )
}

/// Mean and variance of the pseudo-datasets against the bootstrap
/// variance, pooled over cells as standardized errors.
fn c7_bootstrap_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let draws = 4000;
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    let x_counts = Mat::from_fn(4, 3, |i, j| [0.0, 1.0, 3.0, 7.0, 20.0, 60.0][(i + 2 * j) % 6]);
    let x_real = Mat::from_fn(4, 3, |i, j| i as f64 - 0.5 * j as f64);
    let cases = [
        (x_real, NoiseModel::gaussian(0.7, 0.5).unwrap()),
        (x_counts.clone(), NoiseModel::poisson(0.5).unwrap()),
        (x_counts, NoiseModel::poisson(0.2).unwrap()),
    ];
    for (x, model) in &cases {
        let v = model.variance_matrix(x).unwrap();
        let mut sum = Mat::zeros(x.nrows(), x.ncols());
        let mut sq = Mat::zeros(x.nrows(), x.ncols());
        for _ in 0..draws {
            let d = model.sample(x, &mut rng).unwrap() - x;
            sq += d.component_mul(&d);
            sum += d;
        }
        for idx in 0..x.len() {
            let var = v[idx];
            let mean_err = sum[idx] / draws as f64;
            let second = sq[idx] / draws as f64;
            if var == 0.0 {
                worst_mean = worst_mean.max(if mean_err == 0.0 { 0.0 } else { f64::INFINITY });
                continue;
            }
            worst_mean = worst_mean.max(mean_err.abs() / (var / draws as f64).sqrt());
            // Relative error of the second moment; its standard error is at
            // most about sqrt(κ/draws) with κ the kurtosis of the draw.
            worst_var = worst_var.max((second - var).abs() / var);
        }
    }
    outcome(
        worst_mean < 4.5 && worst_var < 0.15,
        format!("max |z| of means {worst_mean:.2}, max relative variance error {worst_var:.3}"),
    )
}

fn study(json: &str) -> StudyReport {
    let cfg = StudyConfig::from_json(json).unwrap();
    run_study(&cfg).unwrap()
}

fn cell<'a>(r: &'a StudyReport, m: Method, pred: impl Fn(&ReportRow) -> bool) -> &'a ReportRow {
    r.find(m, pred).expect("cell present")
}

fn c8_gaussian(report: &StudyReport) -> Outcome {
    let reference = [(1.0, 0.067), (2.0, 0.017), (4.0, 0.004)];
    let mut pass = true;
    let mut notes = Vec::new();
    for (snr, target) in reference {
        let at = |r: &ReportRow| r.snr == Some(snr) && r.k == 10;
        for m in [Method::Sa, Method::Isa, Method::Asymp, Method::Ln] {
            let mse = cell(report, m, at).mse_mean.unwrap();
            if (mse / target - 1.0).abs() > 0.3 {
                pass = false;
                notes.push(format!("{}@{snr} mse {mse:.4}", m.name()));
            }
        }
        for m in [Method::Isa, Method::TsvdTau, Method::Asymp] {
            let rank = cell(report, m, at).rank_mean.unwrap();
            if rank != 10.0 {
                pass = false;
                notes.push(format!("{}@{snr} rank {rank}", m.name()));
            }
        }
        let svst = cell(report, Method::Svst, at).rank_mean.unwrap();
        if svst <= 10.0 {
            pass = false;
            notes.push(format!("svst@{snr} rank {svst}"));
        }
    }
    let summary: Vec<String> = [1.0, 2.0, 4.0]
        .iter()
        .map(|snr| {
            let at = |r: &ReportRow| r.snr == Some(*snr);
            format!(
                "SNR {snr}: isa {:.4} svst rank {:.1}",
                cell(report, Method::Isa, at).mse_mean.unwrap(),
                cell(report, Method::Svst, at).rank_mean.unwrap()
            )
        })
        .collect();
    let detail = if notes.is_empty() { summary.join("; ") } else { notes.join("; ") };
    outcome(pass, detail)
}

const POISSON_OTHERS: [Method; 4] = [Method::TsvdK, Method::TsvdTau, Method::Asymp, Method::Ln];

fn c9_poisson_mse(report: &StudyReport) -> Outcome {
    let mse = |m, n: f64| cell(report, m, |r| r.n_total == Some(n)).mse_mean.unwrap();
    let (isa, sa, tsvd) = (mse(Method::Isa, 200.0), mse(Method::Sa, 200.0), mse(Method::TsvdK, 200.0));
    let mut pass = isa < sa && sa < tsvd;
    let mut notes = vec![format!("N=200 isa {isa:.4} sa {sa:.4} tsvd_k {tsvd:.4}")];
    for n in [1000.0, 1400.0, 2000.0] {
        let best_other = POISSON_OTHERS.iter().map(|m| mse(*m, n)).fold(f64::INFINITY, f64::min);
        let stable = mse(Method::Sa, n).max(mse(Method::Isa, n));
        // Both stable estimators at or below every baseline, ties within 1%.
        if stable > best_other * 1.01 {
            pass = false;
        }
        notes.push(format!("N={n} worst stable {stable:.4} best other {best_other:.4}"));
    }
    outcome(pass, notes.join("; "))
}

fn c10_poisson_rv(report: &StudyReport) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for n in [600.0, 1000.0, 1400.0, 2000.0] {
        let at = |r: &ReportRow| r.n_total == Some(n);
        let isa = cell(report, Method::Isa, at);
        let svd = cell(report, Method::TsvdK, at);
        let (iu, iv) = (isa.rv_row_mean.unwrap(), isa.rv_col_mean.unwrap());
        let (su, sv) = (svd.rv_row_mean.unwrap(), svd.rv_col_mean.unwrap());
        pass &= iu >= su && iv >= sv;
        notes.push(format!("N={n} U {iu:.3}/{su:.3} V {iv:.3}/{sv:.3}"));
    }
    outcome(pass, notes.join("; "))
}

fn c11_poisson_rank(report: &StudyReport) -> Outcome {
    let rank = |m, n: f64| cell(report, m, |r| r.n_total == Some(n)).rank_mean.unwrap();
    let at2000 = rank(Method::Isa, 2000.0);
    let mut pass = (2.8..=3.2).contains(&at2000);
    let mut notes = vec![format!("N=2000 isa {at2000:.3}")];
    for n in [1400.0, 2000.0] {
        let (i, t, a) = (rank(Method::Isa, n), rank(Method::TsvdTau, n), rank(Method::Asymp, n));
        pass &= i < t && i < a;
        notes.push(format!("N={n} isa {i:.3} tsvd_tau {t:.3} asymp {a:.3}"));
    }
    outcome(pass, notes.join("; "))
}

fn c12_subsample(report: &StudyReport) -> Outcome {
    let isa = cell(report, Method::Isa, |_| true);
    let ca = cell(report, Method::TsvdK, |_| true);
    let (iu, iv) = (isa.rv_row_mean.unwrap(), isa.rv_col_mean.unwrap());
    let (cu, cv) = (ca.rv_row_mean.unwrap(), ca.rv_col_mean.unwrap());
    outcome(
        iu >= cu && iv >= cv,
        format!("rows {iu:.3} vs {cu:.3}, cols {iv:.3} vs {cv:.3}"),
    )
}

const GAUSSIAN_DESK: &str = r#"{
    "scenario": "gaussian_table1", "snr": [1, 2, 4], "k": [10], "shape": [200, 500],
    "replications": 20, "base_seed": 2024, "delta": 0.5, "ln_scale": "n_sigma2",
    "methods": ["sa", "isa", "tsvd_k", "tsvd_tau", "asymp", "ln", "svst"]
}"#;

const POISSON_DESK: &str = r#"{
    "scenario": "poisson_tables", "n_total": [200, 600, 1000, 1400, 2000],
    "replications": 200, "base_seed": 2024, "delta": 0.5, "ln_scale": "n_sigma2",
    "methods": ["sa", "isa", "tsvd_k", "tsvd_tau", "asymp", "ln"]
}"#;

const SUBSAMPLE_DESK: &str = r#"{
    "scenario": "subsample_stability", "n_total": [200], "k": [2],
    "replications": 200, "base_seed": 2024, "delta": 0.5, "isa_delta": 0.3,
    "ln_scale": "n_sigma2", "methods": ["tsvd_k", "isa"]
}"#;

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 SA generic solver equals closed form", c1_sa_equivalence()));
    results.push(("2 rank-one optimality oracle", c2_rank1_oracle()));

    let cfg = IsaConfig::default();
    let traces: Vec<IsaTrace> = isa_instances().iter().map(|(x, m)| isa_trace(x, m, &cfg)).collect();
    let (c3, c4) = c3_c4_isa(&traces);
    results.push(("3 ISA iterates are Loewner monotone", c3));
    results.push(("4 ISA fixed-point gap", c4));
    results.push(("5 isotropic ISA closed form", c5_isotropic_closed_form()));
    results.push(("6 CA identities", c6_ca_identities()));
    results.push(("7 bootstrap moments", c7_bootstrap_moments()));

    let gaussian = study(GAUSSIAN_DESK);
    results.push(("8 Gaussian desk study", c8_gaussian(&gaussian)));
    let poisson = study(POISSON_DESK);
    results.push(("9 Poisson MSE ordering", c9_poisson_mse(&poisson)));
    results.push(("10 Poisson RV ordering", c10_poisson_rv(&poisson)));
    results.push(("11 Poisson rank recovery", c11_poisson_rank(&poisson)));
    let subsample = study(SUBSAMPLE_DESK);
    results.push(("12 subsample stability", c12_subsample(&subsample)));

    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
