//! Simulation studies: instance generators, the replicated study runner,
//! cross-validation of `δ` and subsampling of count tables.

pub mod cv;
pub mod generators;
pub mod subsample;
mod study;

pub use cv::{cross_validate_delta, CvConfig, CvEstimator, CvResult};
pub use generators::{gen_gaussian_instance, gen_poisson_instance};
pub use study::{run_study, run_study_with_threads, task_rng, ReportRow, StudyReport};
pub use subsample::subsample_counts;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::IsaConfig;
use crate::linalg::DenseMatrix;
use crate::shrinkers::LnScale;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Gaussian low-rank matrices, 200 × 500 by default.
    GaussianTable1,
    /// Poisson counts around the fixed 50 × 20 rank-3 mean.
    PoissonTables,
    /// Correspondence analysis of subsamples drawn from a count table.
    SubsampleStability,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GaussianTable1 => "gaussian_table1",
            Self::PoissonTables => "poisson_tables",
            Self::SubsampleStability => "subsample_stability",
        }
    }
}

/// Estimators a study can run. In the subsample scenario they act on the
/// CA matrix `M`, and `tsvd_k` is plain correspondence analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sa,
    Isa,
    TsvdK,
    TsvdTau,
    Asymp,
    Ln,
    Svst,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sa => "sa",
            Self::Isa => "isa",
            Self::TsvdK => "tsvd_k",
            Self::TsvdTau => "tsvd_tau",
            Self::Asymp => "asymp",
            Self::Ln => "ln",
            Self::Svst => "svst",
        }
    }
}

fn default_delta() -> f64 {
    0.5
}

fn default_shape() -> [usize; 2] {
    [200, 500]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: Scenario,
    /// Signal-to-noise ratios (Gaussian scenario).
    #[serde(default)]
    pub snr: Vec<f64>,
    /// True rank in the Gaussian scenario; the rank given to the fixed-rank
    /// methods otherwise (3 for Poisson, 2 for subsampling when empty).
    #[serde(default)]
    pub k: Vec<usize>,
    /// Expected grand totals (Poisson) or subsample sizes (subsampling).
    #[serde(default)]
    pub n_total: Vec<f64>,
    #[serde(default = "default_shape")]
    pub shape: [usize; 2],
    pub replications: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// `δ` for ISA when it should differ from `delta`.
    #[serde(default)]
    pub isa_delta: Option<f64>,
    #[serde(default)]
    pub ln_scale: LnScale,
    #[serde(default)]
    pub isa: IsaConfig,
    /// Population table for the subsample scenario; the bundled synthetic
    /// table when absent.
    #[serde(default)]
    pub table: Option<String>,
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| crate::SaeError::InvalidInput(format!("bad study config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return invalid("replications must be at least 1");
        }
        if self.methods.is_empty() {
            return invalid("no methods requested");
        }
        for d in std::iter::once(self.delta).chain(self.isa_delta) {
            if !(d > 0.0 && d < 1.0) {
                return invalid(format!("delta must lie in (0, 1), got {d}"));
            }
        }
        self.isa.validate()?;
        if self.k.contains(&0) {
            return invalid("ranks must be at least 1");
        }
        if let Some(v) = self.snr.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return invalid(format!("SNR values must be positive, got {v}"));
        }
        if let Some(v) = self.n_total.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return invalid(format!("N values must be positive, got {v}"));
        }
        match self.scenario {
            Scenario::GaussianTable1 => {
                if self.snr.is_empty() || self.k.is_empty() {
                    return invalid("the Gaussian scenario needs non-empty snr and k grids");
                }
                let [n, p] = self.shape;
                if let Some(k) = self.k.iter().find(|k| **k > n.min(p)) {
                    return invalid(format!("rank {k} does not fit a {n}x{p} matrix"));
                }
            }
            Scenario::PoissonTables | Scenario::SubsampleStability => {
                if self.n_total.is_empty() {
                    return invalid("this scenario needs a non-empty n_total grid");
                }
            }
        }
        Ok(())
    }

    pub fn isa_delta(&self) -> f64 {
        self.isa_delta.unwrap_or(self.delta)
    }

    pub(crate) fn ranks(&self) -> Vec<usize> {
        if !self.k.is_empty() {
            return self.k.clone();
        }
        match self.scenario {
            Scenario::SubsampleStability => vec![2],
            _ => vec![3],
        }
    }
}

/// The bundled 12 × 39 synthetic count table (N = 1075).
pub fn bundled_table() -> DenseMatrix {
    parse_numeric_csv(include_str!("../../data/synthetic_counts_12x39.csv"))
        .expect("bundled table parses")
}

/// Parses comma-separated numbers, one matrix row per non-empty line.
pub fn parse_numeric_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    crate::SaeError::InvalidInput(format!(
                        "line {}: cannot parse {:?} as a number",
                        line_no + 1,
                        f.trim()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return invalid(format!(
                    "line {}: expected {} fields, found {}",
                    line_no + 1,
                    first.len(),
                    row.len()
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return invalid("no data rows");
    }
    let p = rows[0].len();
    Ok(DenseMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_cfg() -> StudyConfig {
        StudyConfig {
            scenario: Scenario::GaussianTable1,
            snr: vec![1.0],
            k: vec![2],
            n_total: vec![],
            shape: [10, 8],
            replications: 1,
            base_seed: 0,
            methods: vec![Method::Sa],
            delta: 0.5,
            isa_delta: None,
            ln_scale: LnScale::Sigma2,
            isa: IsaConfig::default(),
            table: None,
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = gaussian_cfg();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(StudyConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let cfg = StudyConfig::from_json(
            r#"{"scenario":"poisson_tables","n_total":[200],"replications":2,"base_seed":1,"methods":["isa"]}"#,
        )
        .unwrap();
        assert_eq!(cfg.delta, 0.5);
        assert_eq!(cfg.ranks(), vec![3]);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let mut c = gaussian_cfg();
        c.replications = 0;
        assert!(c.validate().is_err());
        let mut c = gaussian_cfg();
        c.snr.clear();
        assert!(c.validate().is_err());
        let mut c = gaussian_cfg();
        c.k = vec![9];
        assert!(c.validate().is_err());
        let mut c = gaussian_cfg();
        c.delta = 1.0;
        assert!(c.validate().is_err());
        assert!(StudyConfig::from_json(r#"{"scenario":"nope"}"#).is_err());
    }

    #[test]
    fn bundled_table_shape_and_total() {
        let t = bundled_table();
        assert_eq!(t.shape(), (12, 39));
        assert_eq!(t.sum(), 1075.0);
    }

    #[test]
    fn csv_parsing_errors() {
        assert!(parse_numeric_csv("1,2\n3").is_err());
        assert!(parse_numeric_csv("1,x").is_err());
        assert!(parse_numeric_csv("\n\n").is_err());
        assert_eq!(parse_numeric_csv("1, 2\n3,4\n").unwrap().shape(), (2, 2));
    }
}
