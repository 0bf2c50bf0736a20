//! User datasets: a headed, comma-separated file with columns `outcome`,
//! `treatment`, `instrument`, optional covariates `x1..xk` and optional
//! controls `control_1..control_m`.

use std::path::Path;

use cwiv_core::dgp::SimSample;
use cwiv_core::mathcore::DenseMatrix;

use crate::error::{CliError, CliResult};

const MAX_REPORTED: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub outcome: Vec<f64>,
    pub treatment: Vec<f64>,
    pub instrument: Vec<f64>,
    /// `None` without covariate columns.
    pub covariates: Option<DenseMatrix>,
    pub controls: Option<DenseMatrix>,
    pub covariate_names: Vec<String>,
    pub control_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }
}

fn numbered(name: &str, prefix: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) || rest.starts_with('0') {
        return None;
    }
    rest.parse().ok()
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn matrix(cols: &[Vec<f64>], n: usize) -> Option<DenseMatrix> {
    if cols.is_empty() {
        return None;
    }
    let mut data = Vec::with_capacity(n * cols.len());
    for i in 0..n {
        data.extend(cols.iter().map(|c| c[i]));
    }
    Some(DenseMatrix::new(n, cols.len(), data).expect("sized to fit"))
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .clone();
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let find = |want: &str| names.iter().position(|h| h == want);
    let required = ["outcome", "treatment", "instrument"];
    let mut req_idx = [0usize; 3];
    for (slot, name) in req_idx.iter_mut().zip(required) {
        *slot = find(name).ok_or_else(|| usage(format!("{}: missing required column {name}", path.display())))?;
    }
    let mut cov: Vec<(usize, usize)> = Vec::new();
    let mut ctl: Vec<(usize, usize)> = Vec::new();
    for (j, h) in names.iter().enumerate() {
        if required.contains(&h.as_str()) {
            continue;
        }
        if let Some(k) = numbered(h, "x") {
            cov.push((k, j));
        } else if let Some(k) = numbered(h, "control_") {
            ctl.push((k, j));
        } else {
            return Err(usage(format!(
                "{}: unexpected column {h:?}; allowed are outcome, treatment, instrument, x1..xk, control_1..control_m",
                path.display()
            )));
        }
    }
    cov.sort_unstable();
    ctl.sort_unstable();
    for (what, cols, prefix) in [("covariate", &cov, "x"), ("control", &ctl, "control_")] {
        for (pos, &(k, _)) in cols.iter().enumerate() {
            if k != pos + 1 {
                return Err(usage(format!(
                    "{}: {what} columns must be numbered {prefix}1..{prefix}{} without gaps or repeats",
                    path.display(),
                    cols.len()
                )));
            }
        }
    }

    let mut req: [Vec<f64>; 3] = Default::default();
    let mut cov_cols: Vec<Vec<f64>> = vec![Vec::new(); cov.len()];
    let mut ctl_cols: Vec<Vec<f64>> = vec![Vec::new(); ctl.len()];
    let mut problems: Vec<String> = Vec::new();
    let mut n_problems = 0usize;
    for (row, rec) in reader.records().enumerate() {
        // header is line 1
        let line = row + 2;
        let rec = rec.map_err(|e| usage(format!("{}: line {line}: {e}", path.display())))?;
        let mut parse = |j: usize| -> Option<f64> {
            let raw = rec.get(j).unwrap_or("").trim();
            let name = &names[j];
            if raw.is_empty() {
                n_problems += 1;
                if problems.len() < MAX_REPORTED {
                    problems.push(format!("line {line}: missing {name}"));
                }
                return None;
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    n_problems += 1;
                    if problems.len() < MAX_REPORTED {
                        problems.push(format!("line {line}: {name} = {raw:?} is not a finite number"));
                    }
                    None
                }
            }
        };
        for (col, &j) in req.iter_mut().zip(&req_idx) {
            col.push(parse(j).unwrap_or(f64::NAN));
        }
        for (col, &(_, j)) in cov_cols.iter_mut().zip(&cov) {
            col.push(parse(j).unwrap_or(f64::NAN));
        }
        for (col, &(_, j)) in ctl_cols.iter_mut().zip(&ctl) {
            col.push(parse(j).unwrap_or(f64::NAN));
        }
    }
    if n_problems > 0 {
        let more = if n_problems > problems.len() {
            format!("\n... and {} more", n_problems - problems.len())
        } else {
            String::new()
        };
        return Err(usage(format!(
            "{}: {n_problems} invalid values\n{}{more}",
            path.display(),
            problems.join("\n")
        )));
    }
    let [outcome, treatment, instrument] = req;
    let n = outcome.len();
    if n < 2 {
        return Err(usage(format!("{}: need at least two data rows", path.display())));
    }
    if let Some(i) = instrument.iter().position(|&z| z != 0.0 && z != 1.0) {
        return Err(usage(format!(
            "{}: line {}: instrument = {} but the instrument must be binary (0/1); \
             discretize a multi-valued instrument and use the multi-instrument estimator",
            path.display(),
            i + 2,
            instrument[i]
        )));
    }
    for arm in [0.0, 1.0] {
        if !instrument.contains(&arm) {
            return Err(usage(format!(
                "{}: instrument is never {arm}; both instrument arms are required",
                path.display()
            )));
        }
    }
    Ok(Dataset {
        covariates: matrix(&cov_cols, n),
        controls: matrix(&ctl_cols, n),
        covariate_names: cov.iter().map(|&(_, j)| names[j].clone()).collect(),
        control_names: ctl.iter().map(|&(_, j)| names[j].clone()).collect(),
        outcome,
        treatment,
        instrument,
    })
}

/// Writes a simulated sample in the dataset layout with a single covariate.
pub fn write_sample(sample: &SimSample, path: &Path) -> CliResult<()> {
    let err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["outcome", "treatment", "instrument", "x1"]).map_err(err)?;
    for i in 0..sample.len() {
        w.write_record([
            sample.y[i].to_string(),
            sample.d[i].to_string(),
            sample.z[i].to_string(),
            sample.x[i].to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}
