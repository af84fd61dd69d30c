//! Matrix files: dense CSV with optional header row and label column, and
//! MatrixMarket for sparse count tables.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sae_core::DenseMatrix;

/// A matrix with the labels it was read with, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub data: DenseMatrix,
    /// Header fields for the data columns.
    pub col_labels: Option<Vec<String>>,
    pub row_labels: Option<Vec<String>>,
    /// Header field above the label column.
    pub corner: Option<String>,
}

impl Labeled {
    pub fn plain(data: DenseMatrix) -> Self {
        Self { data, col_labels: None, row_labels: None, corner: None }
    }

    /// Same labels around different data of the same shape.
    pub fn with_data(&self, data: DenseMatrix) -> Self {
        Self { data, ..self.clone() }
    }
}

fn is_matrix_market(path: &Path, text: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx"))
        || text.trim_start().starts_with("%%MatrixMarket")
}

pub fn read_matrix(path: &Path, header: bool, labels: bool) -> Result<Labeled> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if is_matrix_market(path, &text) {
        if header || labels {
            bail!("--header/--labels do not apply to MatrixMarket input");
        }
        let bad = |e: nalgebra_sparse::io::MatrixMarketError| {
            anyhow::anyhow!("{}: bad MatrixMarket file: {e}", path.display())
        };
        let banner = text.trim_start().lines().next().unwrap_or_default().to_ascii_lowercase();
        // Count tables are usually stored as `integer`, which the reader
        // refuses to parse straight into floats.
        let coo = if banner.split_whitespace().any(|f| f == "integer") {
            let ints = nalgebra_sparse::io::load_coo_from_matrix_market_str::<i64>(&text).map_err(bad)?;
            let (n, p) = (ints.nrows(), ints.ncols());
            let (rows, cols, vals) = ints.disassemble();
            let vals = vals.into_iter().map(|v| v as f64).collect();
            nalgebra_sparse::CooMatrix::try_from_triplets(n, p, rows, cols, vals)
                .map_err(|e| anyhow::anyhow!("{}: bad MatrixMarket file: {e}", path.display()))?
        } else {
            nalgebra_sparse::io::load_coo_from_matrix_market_str::<f64>(&text).map_err(bad)?
        };
        return Ok(Labeled::plain(DenseMatrix::from(&coo)));
    }
    parse_csv(&text, header, labels).with_context(|| format!("cannot parse {}", path.display()))
}

pub fn parse_csv(text: &str, header: bool, labels: bool) -> Result<Labeled> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let (mut corner, mut col_labels) = (None, None);
    if header {
        let mut fields: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        if labels && !fields.is_empty() {
            corner = Some(fields.remove(0));
        }
        col_labels = Some(fields);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut row_labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut fields = record.iter();
        if labels {
            row_labels.push(fields.next().unwrap_or_default().to_owned());
        }
        let line = i + 1 + usize::from(header);
        let row = fields
            .map(|f| f.parse::<f64>().with_context(|| format!("line {line}: {f:?} is not a number")))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let Some(first) = rows.first() else {
        bail!("no data rows");
    };
    let p = first.len();
    if p == 0 {
        bail!("no data columns");
    }
    if let Some(cols) = &col_labels {
        if cols.len() != p {
            bail!("header has {} data fields but rows have {p}", cols.len());
        }
    }
    let data = DenseMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    Ok(Labeled {
        data,
        col_labels,
        row_labels: labels.then_some(row_labels),
        corner,
    })
}

/// Shortest round-trip form of a double: 17 significant digits.
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv(m: &Labeled) -> String {
    let mut out = String::new();
    if let Some(cols) = &m.col_labels {
        let mut fields = Vec::new();
        if m.row_labels.is_some() {
            fields.push(m.corner.clone().unwrap_or_default());
        }
        fields.extend(cols.iter().cloned());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    for i in 0..m.data.nrows() {
        let mut fields = Vec::new();
        if let Some(rows) = &m.row_labels {
            fields.push(rows[i].clone());
        }
        fields.extend(m.data.row(i).iter().map(|v| format_number(*v)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &Labeled) -> Result<()> {
    fs::write(path, to_csv(m)).with_context(|| format!("cannot write {}", path.display()))
}

/// `dir/stem.diag.json` for an output `dir/stem.ext`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.diag.json"))
}
