//! Subcommand bodies. Each one parses its inputs, makes one library call and
//! writes the result; nothing here changes the numbers.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{CommandFactory, ValueEnum};
use serde_json::{json, Value};

use sae_core::ca::{ca_classic, ca_isa, ca_stable, chi_square_stat, drop_empty, CaFit};
use sae_core::estimators::{iterated_stable_autoencoder, stable_autoencoder, IsaConfig};
use sae_core::harness::{
    cross_validate_delta, run_study, run_study_with_threads, CvConfig, CvEstimator, StudyConfig,
};
use sae_core::noise::{NoiseKind, NoiseModel};
use sae_core::shrinkers::{estimate_sigma_mp, svst_sure, LnScale, ShrinkerSpec};
use sae_core::{DenseMatrix, SaeError};

use crate::io::{self, Labeled};
use crate::{
    CaArgs, Cli, CvArgs, CvEstimatorArg, DenoiseArgs, IsaArgs, LnScaleArg, MethodArg, NoiseArg,
    Regularize, ReportFormat, SimulateArgs,
};

/// Exit code 2 for usage and input problems, 3 for failures inside the
/// numerical library.
#[derive(Debug)]
pub enum CliError {
    Usage(clap::Error),
    Input(anyhow::Error),
    Numeric(SaeError),
}

impl CliError {
    pub fn report(self) -> ExitCode {
        match self {
            Self::Usage(e) => {
                let _ = e.print();
                ExitCode::from(2)
            }
            Self::Input(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
            Self::Numeric(e) => {
                eprintln!("error: {e}");
                ExitCode::from(3)
            }
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Input(e)
    }
}

impl From<SaeError> for CliError {
    fn from(e: SaeError) -> Self {
        Self::Numeric(e)
    }
}

type Outcome = Result<(), CliError>;

fn usage(sub: &str, kind: ErrorKind, msg: &str) -> CliError {
    let mut cmd = Cli::command();
    let mut sub = cmd.find_subcommand_mut(sub).expect("known subcommand").clone().bin_name(format!("sae {sub}"));
    CliError::Usage(sub.error(kind, msg))
}

fn isa_config(a: &IsaArgs) -> IsaConfig {
    IsaConfig {
        max_iterations: a.max_iter,
        convergence_tolerance: a.tol,
        rank_tolerance: a.rank_tol,
    }
}

fn isa_json(c: &IsaConfig) -> Value {
    json!({
        "max_iterations": c.max_iterations,
        "convergence_tolerance": c.convergence_tolerance,
        "rank_tolerance": c.rank_tolerance,
    })
}

fn noise_kind(noise: NoiseArg, sigma2: Option<f64>, sub: &str) -> Result<NoiseKind, CliError> {
    match (noise, sigma2) {
        (NoiseArg::Poisson, _) => Ok(NoiseKind::Poisson),
        (NoiseArg::Gaussian, Some(sigma2)) => Ok(NoiseKind::Gaussian { sigma2 }),
        (NoiseArg::Gaussian, None) => Err(usage(
            sub,
            ErrorKind::MissingRequiredArgument,
            "--sigma2 is required with --noise gaussian",
        )),
    }
}

fn require_rank(rank: Option<usize>, sub: &str, what: &str) -> Result<usize, CliError> {
    rank.ok_or_else(|| {
        usage(sub, ErrorKind::MissingRequiredArgument, &format!("--rank is required with {what}"))
    })
}

fn write_json(path: &Path, value: &Value) -> Outcome {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn denoise(a: DenoiseArgs) -> Outcome {
    let input = io::read_matrix(&a.input.input, a.input.header, a.input.labels)?;
    let x = &input.data;
    let cfg = isa_config(&a.isa);
    let mut params = json!({
        "method": a.method.to_possible_value().map(|v| v.get_name().to_owned()),
        "noise": a.noise.to_possible_value().map(|v| v.get_name().to_owned()),
        "delta": a.delta,
        "sigma2": a.sigma2,
        "rank": a.rank,
    });
    // Noise level for the shrinkers: the given σ², else the Marchenko–Pastur estimate.
    let sigma = |params: &mut Value| -> Result<f64, CliError> {
        let (sigma, source) = match a.sigma2 {
            Some(s2) => (s2.sqrt(), "given"),
            None => (estimate_sigma_mp(x)?, "marchenko_pastur"),
        };
        params["sigma"] = json!(sigma);
        params["sigma_source"] = json!(source);
        Ok(sigma)
    };
    let (mu_hat, effective_rank, iterations, final_residual) = match a.method {
        MethodArg::Sa | MethodArg::Isa => {
            let model = NoiseModel::new(noise_kind(a.noise, a.sigma2, "denoise")?, a.delta)?;
            let res = if a.method == MethodArg::Sa {
                let k = require_rank(a.rank, "denoise", "--method sa")?;
                stable_autoencoder(x, &model, k)?
            } else {
                params["isa"] = isa_json(&cfg);
                iterated_stable_autoencoder(x, &model, &cfg)?
            };
            (res.mu_hat, res.effective_rank, res.iterations, res.final_residual)
        }
        MethodArg::Svst => {
            let res = svst_sure(x, sigma(&mut params)?)?;
            params["tau"] = json!(res.tau);
            params["sure"] = json!(res.sure);
            (res.shrunk.estimate, res.shrunk.rank, 0, 0.0)
        }
        MethodArg::TsvdK | MethodArg::TsvdTau | MethodArg::Asymp | MethodArg::Ln => {
            let spec = match a.method {
                MethodArg::TsvdK => ShrinkerSpec::TsvdK { k: require_rank(a.rank, "denoise", "--method tsvd-k")? },
                MethodArg::TsvdTau => ShrinkerSpec::TsvdTau { sigma: sigma(&mut params)? },
                MethodArg::Asymp => ShrinkerSpec::Asymp { sigma: sigma(&mut params)? },
                _ => {
                    let k = require_rank(a.rank, "denoise", "--method ln")?;
                    let scale = match a.ln_scale {
                        LnScaleArg::Sigma2 => LnScale::Sigma2,
                        LnScaleArg::NSigma2 => LnScale::NSigma2,
                    };
                    params["ln_scale"] = json!(a.ln_scale.to_possible_value().map(|v| v.get_name().to_owned()));
                    ShrinkerSpec::LowNoise { k, sigma: sigma(&mut params)?, scale }
                }
            };
            let res = spec.apply(x)?;
            (res.estimate, res.rank, 0, 0.0)
        }
    };
    io::write_matrix(&a.out, &input.with_data(mu_hat))?;
    let diag = json!({
        "input": a.input.input.display().to_string(),
        "shape": [x.nrows(), x.ncols()],
        "effective_rank": effective_rank,
        "iterations": iterations,
        "final_residual": final_residual,
        "parameters": params,
    });
    write_json(&io::sidecar_path(&a.out), &diag)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn pick<T: Clone>(labels: &Option<Vec<T>>, keep: &[usize]) -> Option<Vec<T>> {
    labels.as_ref().map(|l| keep.iter().map(|&i| l[i].clone()).collect())
}

/// Coordinates with one `axis_l` column per axis and the kept labels.
fn coordinates(data: DenseMatrix, labels: Option<Vec<String>>, corner: &Option<String>) -> Labeled {
    let axes = (1..=data.ncols()).map(|l| format!("axis_{l}")).collect();
    Labeled {
        data,
        col_labels: Some(axes),
        corner: labels.as_ref().map(|_| corner.clone().unwrap_or_else(|| "label".to_owned())),
        row_labels: labels,
    }
}

pub fn ca(a: CaArgs) -> Outcome {
    let input = io::read_matrix(&a.input.input, a.input.header, a.input.labels)?;
    let x = &input.data;
    let (table, rows, cols) = if a.drop_empty {
        drop_empty(x)
    } else {
        (x.clone(), (0..x.nrows()).collect(), (0..x.ncols()).collect())
    };
    let cfg = isa_config(&a.isa);
    let fit: CaFit = match a.regularize {
        Regularize::None => ca_classic(&table, require_rank(a.rank, "ca", "--regularize none")?)?,
        Regularize::Sa => ca_stable(&table, require_rank(a.rank, "ca", "--regularize sa")?, a.delta)?,
        Regularize::Isa => ca_isa(&table, a.delta, &cfg)?,
    };
    let chi2 = chi_square_stat(&table)?;
    let axes = a.rank.unwrap_or(fit.result.effective_rank);
    let (row_coords, col_coords) = fit.coordinates(axes)?;

    let mut mu_full = DenseMatrix::zeros(x.nrows(), x.ncols());
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            mu_full[(r, c)] = fit.result.mu_hat[(i, j)];
        }
    }
    let m_labeled = Labeled {
        data: fit.m_hat.clone(),
        col_labels: pick(&input.col_labels, &cols),
        row_labels: pick(&input.row_labels, &rows),
        corner: input.corner.clone(),
    };
    io::write_matrix(&with_suffix(&a.out, ".mu.csv"), &input.with_data(mu_full))?;
    io::write_matrix(&with_suffix(&a.out, ".m.csv"), &m_labeled)?;
    io::write_matrix(
        &with_suffix(&a.out, ".rows.csv"),
        &coordinates(row_coords, pick(&input.row_labels, &rows), &input.corner),
    )?;
    io::write_matrix(
        &with_suffix(&a.out, ".cols.csv"),
        &coordinates(col_coords, pick(&input.col_labels, &cols), &None),
    )?;

    let singular: Vec<f64> = sae_core::linalg::svd(&fit.m_hat)?.d.iter().take(axes).copied().collect();
    let dropped = |kept: &[usize], n: usize| (0..n).filter(|i| !kept.contains(i)).collect::<Vec<_>>();
    let summary = json!({
        "input": a.input.input.display().to_string(),
        "shape": [x.nrows(), x.ncols()],
        "total": fit.margins.total,
        "chi2": chi2,
        "inertia": chi2 / fit.margins.total,
        "dropped_rows": dropped(&rows, x.nrows()),
        "dropped_cols": dropped(&cols, x.ncols()),
        "regularize": a.regularize.to_possible_value().map(|v| v.get_name().to_owned()),
        "delta": (a.regularize != Regularize::None).then_some(a.delta),
        "rank": a.rank,
        "axes": axes,
        "singular_values": singular,
        "effective_rank": fit.result.effective_rank,
        "iterations": fit.result.iterations,
        "final_residual": fit.result.final_residual,
        "isa": (a.regularize == Regularize::Isa).then(|| isa_json(&cfg)),
    });
    write_json(&with_suffix(&a.out, ".json"), &summary)
}

const BUNDLED: [(&str, &str); 3] = [
    ("table1_desk", include_str!("../configs/table1_desk.json")),
    ("poisson_desk", include_str!("../configs/poisson_desk.json")),
    ("subsample_desk", include_str!("../configs/subsample_desk.json")),
];

fn load_config(name: &str) -> anyhow::Result<String> {
    let path = Path::new(name);
    if path.exists() {
        return fs::read_to_string(path).with_context(|| format!("cannot read {name}"));
    }
    let stem = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED
        .iter()
        .find(|(n, _)| *n == stem)
        .map(|(_, text)| (*text).to_owned())
        .with_context(|| {
            let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
            format!("no config file {name} and no bundled config of that name (bundled: {})", names.join(", "))
        })
}

pub fn simulate(a: SimulateArgs) -> Outcome {
    let text = load_config(&a.config)?;
    let mut cfg = StudyConfig::from_json(&text).map_err(|e| anyhow::anyhow!("{}: {e}", a.config))?;
    if let Some(seed) = a.seed {
        cfg.base_seed = seed;
    }
    cfg.validate().map_err(|e| anyhow::anyhow!("{}: {e}", a.config))?;
    let report = match a.threads {
        Some(0) => return Err(usage("simulate", ErrorKind::ValueValidation, "--threads must be at least 1")),
        Some(t) => run_study_with_threads(&cfg, t)?,
        None => run_study(&cfg)?,
    };
    let text = match a.format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Table => report.to_table(),
    };
    match &a.out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn cv(a: CvArgs) -> Outcome {
    let input = io::read_matrix(&a.input.input, a.input.header, a.input.labels)?;
    let kind = noise_kind(a.noise, a.sigma2, "cv")?;
    let estimator = match a.estimator {
        CvEstimatorArg::Sa => CvEstimator::Sa { k: require_rank(a.rank, "cv", "--estimator sa")? },
        CvEstimatorArg::Isa => CvEstimator::Isa,
    };
    let mut cfg = CvConfig::new(a.grid.clone(), a.holdout, a.folds, a.seed.unwrap_or(0), estimator);
    cfg.isa = isa_config(&a.isa);
    let res = cross_validate_delta(&input.data, kind, &cfg)?;
    println!("delta,holdout_error");
    for (d, e) in &res.errors {
        println!("{},{}", io::format_number(*d), io::format_number(*e));
    }
    println!("selected delta: {}", res.delta);
    if let Some(path) = &a.out {
        let errors: Vec<Value> = res.errors.iter().map(|(d, e)| json!({"delta": d, "error": e})).collect();
        write_json(path, &json!({ "delta": res.delta, "errors": errors, "seed": cfg.seed }))?;
    }
    Ok(())
}
