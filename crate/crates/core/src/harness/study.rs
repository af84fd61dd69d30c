use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generators::{gaussian_instance, poisson_counts, poisson_mean};
use super::subsample::subsample_counts_with;
use super::{bundled_table, parse_numeric_csv, Method, Scenario, StudyConfig};
use crate::ca::{ca_isa, ca_restore, ca_stable, ca_transform, drop_empty, principal_coordinates};
use crate::error::{invalid, Result, SaeError};
use crate::estimators::{iterated_stable_autoencoder, stable_autoencoder};
use crate::linalg::{svd, DenseMatrix};
use crate::metrics::{relative_mse, rv_coefficient};
use crate::noise::NoiseModel;
use crate::shrinkers::{
    estimate_sigma_mp, estimate_sigma_residual, ln_shrink_scaled, tsvd_k, ShrinkerSpec,
};

/// Random stream of replication `rep` in grid cell `cell`. Every task owns a
/// distinct ChaCha stream, so results do not depend on scheduling.
pub fn task_rng(base_seed: u64, cell: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(((cell as u64) << 32) | rep as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    k: usize,
    snr: Option<f64>,
    n_total: Option<f64>,
}

fn cells(cfg: &StudyConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    match cfg.scenario {
        Scenario::GaussianTable1 => {
            for &k in &cfg.k {
                for &snr in &cfg.snr {
                    out.push(Cell { k, snr: Some(snr), n_total: None });
                }
            }
        }
        Scenario::PoissonTables | Scenario::SubsampleStability => {
            for &n in &cfg.n_total {
                for k in cfg.ranks() {
                    out.push(Cell { k, snr: None, n_total: Some(n) });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    mse: f64,
    rank: usize,
    rv: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: Scenario,
    pub k: usize,
    pub snr: Option<f64>,
    pub n_total: Option<f64>,
    pub method: Method,
    pub mse_mean: Option<f64>,
    pub rv_row_mean: Option<f64>,
    pub rv_col_mean: Option<f64>,
    pub rank_mean: Option<f64>,
    pub replications: usize,
    /// Replications on which the method failed.
    pub missing: usize,
    /// Replications that entered the RV means.
    pub rv_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: Scenario,
    pub rows: Vec<ReportRow>,
    pub replications: usize,
    pub seed: u64,
}

/// Runs the study on the global rayon pool.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let cells = cells(cfg);
    let population = match cfg.scenario {
        Scenario::SubsampleStability => Some(Population::load(cfg)?),
        _ => None,
    };
    if let Some(pop) = &population {
        for c in &cells {
            let n = c.n_total.unwrap_or(0.0);
            if n.fract() != 0.0 || n > pop.total {
                return invalid(format!(
                    "subsample size {n} must be an integer no larger than the table total {}",
                    pop.total
                ));
            }
        }
    }
    let reps = cfg.replications;
    let outcomes: Vec<Vec<Result<Outcome>>> = (0..cells.len() * reps)
        .into_par_iter()
        .map(|task| {
            let (ci, rep) = (task / reps, task % reps);
            let mut rng = task_rng(cfg.base_seed, ci, rep);
            run_task(cfg, &cells[ci], population.as_ref(), &mut rng)
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len() * cfg.methods.len());
    for (ci, cell) in cells.iter().enumerate() {
        let block = &outcomes[ci * reps..(ci + 1) * reps];
        for (mi, &method) in cfg.methods.iter().enumerate() {
            rows.push(aggregate(cfg.scenario, cell, method, block.iter().map(|o| &o[mi])));
        }
    }
    Ok(StudyReport {
        scenario: cfg.scenario,
        rows,
        replications: reps,
        seed: cfg.base_seed,
    })
}

/// Runs the study on a dedicated pool of `threads` workers (0 = rayon's
/// default). The report does not depend on `threads`.
pub fn run_study_with_threads(cfg: &StudyConfig, threads: usize) -> Result<StudyReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SaeError::InvalidInput(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_study(cfg))
}

fn aggregate<'a>(
    scenario: Scenario,
    cell: &Cell,
    method: Method,
    outcomes: impl Iterator<Item = &'a Result<Outcome>>,
) -> ReportRow {
    let (mut mse, mut rank, mut rv_row, mut rv_col) = (0.0, 0.0, 0.0, 0.0);
    let (mut ok, mut missing, mut rv_count) = (0usize, 0usize, 0usize);
    let mut replications = 0;
    for o in outcomes {
        replications += 1;
        match o {
            Ok(o) => {
                ok += 1;
                mse += o.mse;
                rank += o.rank as f64;
                if let Some((r, c)) = o.rv {
                    rv_count += 1;
                    rv_row += r;
                    rv_col += c;
                }
            }
            Err(_) => missing += 1,
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    ReportRow {
        scenario,
        k: cell.k,
        snr: cell.snr,
        n_total: cell.n_total,
        method,
        mse_mean: mean(mse, ok),
        rv_row_mean: mean(rv_row, rv_count),
        rv_col_mean: mean(rv_col, rv_count),
        rank_mean: mean(rank, ok),
        replications,
        missing,
        rv_count,
    }
}

struct Population {
    table: DenseMatrix,
    total: f64,
}

impl Population {
    fn load(cfg: &StudyConfig) -> Result<Self> {
        let table = match &cfg.table {
            None => bundled_table(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| SaeError::InvalidInput(format!("cannot read {path}: {e}")))?;
                parse_numeric_csv(&text)?
            }
        };
        let total = table.sum();
        Ok(Self { table, total })
    }
}

fn run_task(
    cfg: &StudyConfig,
    cell: &Cell,
    population: Option<&Population>,
    rng: &mut ChaCha8Rng,
) -> Vec<Result<Outcome>> {
    let fail_all = |e: SaeError| cfg.methods.iter().map(|_| Err(e.clone())).collect();
    match cfg.scenario {
        Scenario::GaussianTable1 => {
            let [n, p] = cfg.shape;
            match gaussian_instance(n, p, cell.k, cell.snr.unwrap_or(1.0), rng) {
                Ok((mu, x, sigma)) => matrix_task(cfg, cell.k, &mu, &x, Some(sigma)),
                Err(e) => fail_all(e),
            }
        }
        Scenario::PoissonTables => {
            let drawn = poisson_mean(cell.n_total.unwrap_or(1.0))
                .and_then(|mu| poisson_counts(&mu, rng).map(|x| (mu, x)));
            match drawn {
                Ok((mu, x)) => matrix_task(cfg, cell.k, &mu, &x, None),
                Err(e) => fail_all(e),
            }
        }
        Scenario::SubsampleStability => {
            let pop = population.expect("population loaded for subsampling");
            match subsample_task(cfg, cell, pop, rng) {
                Ok(v) => v,
                Err(e) => fail_all(e),
            }
        }
    }
}

fn leading_columns(m: &DenseMatrix, r: usize) -> DenseMatrix {
    m.columns(0, r).into_owned()
}

/// Fits every method on one matrix instance. `sigma` is the known noise
/// level (Gaussian); when absent the counts are Poisson and the baselines
/// estimate it from the data.
fn matrix_task(
    cfg: &StudyConfig,
    k: usize,
    mu: &DenseMatrix,
    x: &DenseMatrix,
    sigma: Option<f64>,
) -> Vec<Result<Outcome>> {
    let true_rank = match cfg.scenario {
        Scenario::PoissonTables => super::generators::POISSON_SPECTRUM.len(),
        _ => k,
    };
    let truth = svd(mu);
    cfg.methods
        .iter()
        .map(|&method| {
            let truth = truth.as_ref().map_err(Clone::clone)?;
            let (estimate, rank) = fit_matrix(cfg, method, k, x, sigma)?;
            let mse = relative_mse(&estimate, mu)?;
            let r = rank.min(true_rank);
            let restricted = method == Method::Isa && rank < true_rank;
            let rv = if r == 0 || restricted {
                None
            } else {
                let f = svd(&estimate)?;
                let u = leading_columns(&truth.u, true_rank);
                let v = leading_columns(&truth.v, true_rank);
                Some((
                    rv_coefficient(&u, &leading_columns(&f.u, r))?,
                    rv_coefficient(&v, &leading_columns(&f.v, r))?,
                ))
            };
            Ok(Outcome { mse, rank, rv })
        })
        .collect()
}

fn baseline_sigma(x: &DenseMatrix, known: Option<f64>) -> Result<f64> {
    match known {
        Some(s) => Ok(s),
        None => estimate_sigma_mp(x),
    }
}

fn fit_matrix(
    cfg: &StudyConfig,
    method: Method,
    k: usize,
    x: &DenseMatrix,
    sigma: Option<f64>,
) -> Result<(DenseMatrix, usize)> {
    let model = |delta: f64| match sigma {
        Some(s) => NoiseModel::gaussian(s * s, delta),
        None => NoiseModel::poisson(delta),
    };
    match method {
        Method::Sa => {
            let e = stable_autoencoder(x, &model(cfg.delta)?, k)?;
            Ok((e.mu_hat, e.effective_rank))
        }
        Method::Isa => {
            let e = iterated_stable_autoencoder(x, &model(cfg.isa_delta())?, &cfg.isa)?;
            Ok((e.mu_hat, e.effective_rank))
        }
        Method::TsvdK => Ok((tsvd_k(x, k)?, k)),
        Method::Ln => {
            let s = match sigma {
                Some(s) => s,
                None => estimate_sigma_residual(x, k)?.sqrt(),
            };
            let out = ln_shrink_scaled(x, k, s, cfg.ln_scale)?;
            Ok((out.estimate, out.rank))
        }
        Method::TsvdTau | Method::Asymp | Method::Svst => {
            let s = baseline_sigma(x, sigma)?;
            let spec = match method {
                Method::TsvdTau => ShrinkerSpec::TsvdTau { sigma: s },
                Method::Asymp => ShrinkerSpec::Asymp { sigma: s },
                _ => ShrinkerSpec::SvstSure { sigma: s },
            };
            let out = spec.apply(x)?;
            Ok((out.estimate, out.rank))
        }
    }
}

fn select(m: &DenseMatrix, rows: &[usize], cols: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// One subsample: draw it, fit every method on its CA matrix and compare the
/// principal coordinates with those of the full table.
fn subsample_task(
    cfg: &StudyConfig,
    cell: &Cell,
    pop: &Population,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Result<Outcome>>> {
    let k = cell.k;
    let n_sub = cell.n_total.unwrap_or(pop.total);
    let sample = subsample_counts_with(&pop.table, n_sub as u64, rng)?;
    let (x, rows, cols) = drop_empty(&sample);
    let pop_ca = ca_transform(&pop.table)?;
    let (pop_rows, pop_cols) = principal_coordinates(&pop_ca.m, &pop_ca, k)?;
    let pop_rows = select(&pop_rows, &rows, &(0..pop_rows.ncols()).collect::<Vec<_>>());
    let pop_cols = select(&pop_cols, &cols, &(0..pop_cols.ncols()).collect::<Vec<_>>());
    let truth = select(&pop.table, &rows, &cols) / pop.total;
    let margins = ca_transform(&x)?;
    let m = &margins.m;
    Ok(cfg
        .methods
        .iter()
        .map(|&method| {
            let (m_hat, rank) = match method {
                Method::Sa => {
                    let fit = ca_stable(&x, k, cfg.delta)?;
                    (fit.m_hat, fit.result.effective_rank)
                }
                Method::Isa => {
                    let fit = ca_isa(&x, cfg.isa_delta(), &cfg.isa)?;
                    (fit.m_hat, fit.result.effective_rank)
                }
                other => fit_matrix(cfg, other, k, m, None)?,
            };
            let estimate = ca_restore(&m_hat, &margins)? / n_sub;
            let mse = relative_mse(&estimate, &truth)?;
            let r = rank.min(k);
            let rv = if r == 0 {
                None
            } else {
                let (f, g) = principal_coordinates(&m_hat, &margins, r)?;
                Some((rv_coefficient(&pop_rows, &f)?, rv_coefficient(&pop_cols, &g)?))
            };
            Ok(Outcome { mse, rank, rv })
        })
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

impl StudyReport {
    pub const CSV_HEADER: &'static str =
        "scenario,k,snr,n_total,method,mse_mean,rv_row_mean,rv_col_mean,rank_mean,replications,seed,missing";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.scenario.name(),
                r.k,
                fmt_opt(r.snr),
                fmt_opt(r.n_total),
                r.method.name(),
                fmt_opt(r.mse_mean),
                fmt_opt(r.rv_row_mean),
                fmt_opt(r.rv_col_mean),
                fmt_opt(r.rank_mean),
                r.replications,
                self.seed,
                r.missing
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let short = |v: Option<f64>, digits: usize| match v {
            Some(x) => format!("{x:.digits$}"),
            None => "-".to_string(),
        };
        let mut out = format!(
            "{} ({} replications, seed {})\n{:>4} {:>6} {:>8} {:>9} {:>10} {:>7} {:>7} {:>7} {:>7}\n",
            self.scenario.name(),
            self.replications,
            self.seed,
            "k",
            "snr",
            "N",
            "method",
            "mse",
            "rv_row",
            "rv_col",
            "rank",
            "missing"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>4} {:>6} {:>8} {:>9} {:>10} {:>7} {:>7} {:>7} {:>7}",
                r.k,
                short(r.snr, 2),
                short(r.n_total, 0),
                r.method.name(),
                short(r.mse_mean, 5),
                short(r.rv_row_mean, 3),
                short(r.rv_col_mean, 3),
                short(r.rank_mean, 2),
                r.missing
            );
        }
        out
    }

    /// Row for `method` in the first cell accepted by `cell`.
    pub fn find(&self, method: Method, cell: impl Fn(&ReportRow) -> bool) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && cell(r))
    }
}
