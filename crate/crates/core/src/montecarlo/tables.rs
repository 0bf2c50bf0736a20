//! Summary tables on disk.
//!
//! For each metric, `<metric>.csv` (or `.json`) is a wide table with one row
//! per estimator spec and one column per cell, labelled `dgp<d>_sigma<σ>`.
//! `summary_long.csv` holds every value as `(dgp, sigma_eta, estimator,
//! metric, value)`. Missing values are empty in CSV and `null` in JSON.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::summary::{Metrics, SummaryRow, SummaryTable};
use crate::error::{Error, Result};

pub const METRICS: &[&str] = &[
    "late",
    "n_ok",
    "n_failed",
    "bias",
    "sd",
    "rmse",
    "rmse_ratio",
    "coverage_late",
    "coverage_wlate",
    "mean_first_stage",
    "mse_bias_sq",
    "mse_variance",
    "mean_se",
    "variance_ratio",
    "mean_weighted_estimand",
];

pub const LONG_STEM: &str = "summary_long";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub dgp: u8,
    pub sigma_eta: f64,
    pub estimator: String,
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WideRow {
    pub estimator: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WideTable {
    pub metric: String,
    pub columns: Vec<String>,
    pub rows: Vec<WideRow>,
}

fn metric_value(row: &SummaryRow, metric: &str) -> Option<f64> {
    let m = row.metrics.as_ref();
    match metric {
        "late" => Some(row.late),
        "n_ok" => Some(row.n_ok as f64),
        "n_failed" => Some(row.n_failed as f64),
        "bias" => m.map(|m| m.bias),
        "sd" => m.map(|m| m.sd),
        "rmse" => m.map(|m| m.rmse),
        "rmse_ratio" => m.and_then(|m| m.rmse_ratio),
        "coverage_late" => m.map(|m| m.coverage_late),
        "coverage_wlate" => m.map(|m| m.coverage_wlate),
        "mean_first_stage" => m.map(|m| m.mean_first_stage),
        "mse_bias_sq" => m.map(|m| m.mse_bias_sq),
        "mse_variance" => m.map(|m| m.mse_variance),
        "mean_se" => m.map(|m| m.mean_se),
        "variance_ratio" => m.and_then(|m| m.variance_ratio),
        "mean_weighted_estimand" => m.map(|m| m.mean_weighted_estimand),
        _ => None,
    }
}

fn push_unique(v: &mut Vec<String>, s: String) {
    if !v.contains(&s) {
        v.push(s);
    }
}

impl SummaryTable {
    pub fn long(&self) -> Vec<LongRow> {
        let mut out = Vec::with_capacity(self.rows.len() * METRICS.len());
        for r in &self.rows {
            for &metric in METRICS {
                out.push(LongRow {
                    dgp: r.dgp,
                    sigma_eta: r.sigma_eta,
                    estimator: r.estimator.clone(),
                    metric: metric.to_string(),
                    value: metric_value(r, metric),
                });
            }
        }
        out
    }

    pub fn wide(&self, metric: &str) -> WideTable {
        let mut columns = Vec::new();
        let mut estimators = Vec::new();
        for r in &self.rows {
            push_unique(&mut columns, r.cell_label());
            push_unique(&mut estimators, r.estimator.clone());
        }
        let rows = estimators
            .into_iter()
            .map(|est| {
                let values = columns
                    .iter()
                    .map(|col| {
                        self.rows
                            .iter()
                            .find(|r| r.estimator == est && &r.cell_label() == col)
                            .and_then(|r| metric_value(r, metric))
                    })
                    .collect();
                WideRow { estimator: est, values }
            })
            .collect();
        WideTable {
            metric: metric.to_string(),
            columns,
            rows,
        }
    }

    /// Rebuilds a summary from its long form.
    pub fn from_long(rows: &[LongRow]) -> std::result::Result<Self, String> {
        let mut out: Vec<SummaryRow> = Vec::new();
        let mut i = 0;
        while i < rows.len() {
            let head = &rows[i];
            let mut j = i;
            while j < rows.len()
                && rows[j].dgp == head.dgp
                && rows[j].sigma_eta == head.sigma_eta
                && rows[j].estimator == head.estimator
            {
                j += 1;
            }
            let group = &rows[i..j];
            let get = |name: &str| group.iter().find(|r| r.metric == name).and_then(|r| r.value);
            let need = |name: &str| {
                get(name).ok_or_else(|| format!("{} {}: missing {name}", head.estimator, head.dgp))
            };
            let metrics = if get("bias").is_some() {
                Some(Metrics {
                    bias: need("bias")?,
                    sd: need("sd")?,
                    rmse: need("rmse")?,
                    rmse_ratio: get("rmse_ratio"),
                    coverage_late: need("coverage_late")?,
                    coverage_wlate: need("coverage_wlate")?,
                    mean_first_stage: need("mean_first_stage")?,
                    mse_bias_sq: need("mse_bias_sq")?,
                    mse_variance: need("mse_variance")?,
                    mean_se: need("mean_se")?,
                    variance_ratio: get("variance_ratio"),
                    mean_weighted_estimand: need("mean_weighted_estimand")?,
                })
            } else {
                None
            };
            out.push(SummaryRow {
                dgp: head.dgp,
                sigma_eta: head.sigma_eta,
                estimator: head.estimator.clone(),
                late: need("late")?,
                n_ok: need("n_ok")? as usize,
                n_failed: need("n_failed")? as usize,
                metrics,
            });
            i = j;
        }
        Ok(SummaryTable { rows: out })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |source| Error::Json {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(json_err(path))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_wide_csv(path: &Path, t: &WideTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let header = std::iter::once("estimator").chain(t.columns.iter().map(String::as_str));
    w.write_record(header).map_err(csv_err(path))?;
    for r in &t.rows {
        let rec = std::iter::once(r.estimator.clone()).chain(r.values.iter().map(|&v| fmt_value(v)));
        w.write_record(rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_long_csv(path: &Path, rows: &[LongRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["dgp", "sigma_eta", "estimator", "metric", "value"])
        .map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.dgp.to_string(),
            r.sigma_eta.to_string(),
            r.estimator.clone(),
            r.metric.clone(),
            fmt_value(r.value),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes one wide table per metric plus the long table into `dir`, creating
/// it if needed. Returns the written paths.
pub fn emit_tables(summary: &SummaryTable, format: TableFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ext = format.extension();
    let mut written = Vec::with_capacity(METRICS.len() + 1);
    for &metric in METRICS {
        let path = dir.join(format!("{metric}.{ext}"));
        let t = summary.wide(metric);
        match format {
            TableFormat::Csv => write_wide_csv(&path, &t)?,
            TableFormat::Json => write_json(&path, &t)?,
        }
        written.push(path);
    }
    let path = dir.join(format!("{LONG_STEM}.{ext}"));
    let long = summary.long();
    match format {
        TableFormat::Csv => write_long_csv(&path, &long)?,
        TableFormat::Json => write_json(&path, &long)?,
    }
    written.push(path);
    Ok(written)
}

fn table_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Table {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse_value(path: &Path, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| table_err(path, format!("bad number {s:?}: {e}")))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(json_err(path))
}

fn format_of(path: &Path) -> Result<TableFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(TableFormat::Csv),
        Some("json") => Ok(TableFormat::Json),
        _ => Err(table_err(path, "expected a .csv or .json file")),
    }
}

pub fn read_long(path: &Path) -> Result<Vec<LongRow>> {
    match format_of(path)? {
        TableFormat::Json => read_json(path),
        TableFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
            let header = r.headers().map_err(csv_err(path))?.clone();
            if header.iter().collect::<Vec<_>>() != ["dgp", "sigma_eta", "estimator", "metric", "value"] {
                return Err(table_err(path, "unexpected long-table header"));
            }
            let mut out = Vec::new();
            for rec in r.records() {
                let rec = rec.map_err(csv_err(path))?;
                let dgp = rec[0]
                    .parse::<u8>()
                    .map_err(|e| table_err(path, format!("bad dgp {:?}: {e}", &rec[0])))?;
                let sigma_eta =
                    parse_value(path, &rec[1])?.ok_or_else(|| table_err(path, "missing sigma_eta"))?;
                out.push(LongRow {
                    dgp,
                    sigma_eta,
                    estimator: rec[2].to_string(),
                    metric: rec[3].to_string(),
                    value: parse_value(path, &rec[4])?,
                });
            }
            Ok(out)
        }
    }
}

pub fn read_wide(path: &Path) -> Result<WideTable> {
    match format_of(path)? {
        TableFormat::Json => read_json(path),
        TableFormat::Csv => {
            let metric = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| table_err(path, "no file stem"))?
                .to_string();
            let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
            let header = r.headers().map_err(csv_err(path))?.clone();
            if header.get(0) != Some("estimator") {
                return Err(table_err(path, "first column must be estimator"));
            }
            let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
            let mut rows = Vec::new();
            for rec in r.records() {
                let rec = rec.map_err(csv_err(path))?;
                let values = rec.iter().skip(1).map(|s| parse_value(path, s)).collect::<Result<_>>()?;
                rows.push(WideRow {
                    estimator: rec[0].to_string(),
                    values,
                });
            }
            Ok(WideTable { metric, columns, rows })
        }
    }
}

/// Reads the long table written by [`emit_tables`] back into a summary.
pub fn read_summary(dir: &Path, format: TableFormat) -> Result<SummaryTable> {
    let path = dir.join(format!("{LONG_STEM}.{}", format.extension()));
    let rows = read_long(&path)?;
    SummaryTable::from_long(&rows).map_err(|reason| table_err(&path, reason))
}
