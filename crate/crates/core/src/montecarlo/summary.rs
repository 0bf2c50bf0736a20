use serde::{Deserialize, Serialize};

use super::{ExperimentRun, Outcome};
use crate::error::{Error, Result};

/// Moments over successful replications, divided by their count so that
/// `rmse² = bias² + sd²` holds exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `mean(τ̂) − LATE`.
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    /// RMSE relative to the unweighted spec in the same cell.
    pub rmse_ratio: Option<f64>,
    pub coverage_late: f64,
    /// Coverage of each replication's own weighted estimand.
    pub coverage_wlate: f64,
    pub mean_first_stage: f64,
    pub mse_bias_sq: f64,
    pub mse_variance: f64,
    pub mean_se: f64,
    /// `mean(se²) / sd²`; `None` when the estimates do not vary.
    pub variance_ratio: Option<f64>,
    pub mean_weighted_estimand: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dgp: u8,
    pub sigma_eta: f64,
    pub estimator: String,
    pub late: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    /// `None` when fewer than two replications succeeded.
    pub metrics: Option<Metrics>,
}

impl SummaryRow {
    pub fn cell_label(&self) -> String {
        format!("dgp{}_sigma{}", self.dgp, self.sigma_eta)
    }

    pub fn metrics(&self) -> Result<&Metrics> {
        self.metrics.as_ref().ok_or_else(|| {
            Error::Insufficient(format!(
                "{} in {}: {} successful replications, need 2",
                self.estimator,
                self.cell_label(),
                self.n_ok
            ))
        })
    }
}

/// Rows ordered by cell, then estimator spec.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, dgp: u8, sigma_eta: f64, estimator: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.dgp == dgp && r.sigma_eta == sigma_eta && r.estimator == estimator)
    }
}

#[derive(Default)]
struct Acc {
    n_ok: usize,
    n_failed: usize,
    tau: Vec<f64>,
    cover_late: usize,
    cover_w: usize,
    first_stage: f64,
    se: f64,
    se2: f64,
    target: f64,
}

fn covers(ci: (f64, f64), v: f64) -> bool {
    ci.0 <= v && v <= ci.1
}

/// Aggregates replication results per (cell, spec).
pub fn summarize(run: &ExperimentRun) -> Result<SummaryTable> {
    let n_specs = run.spec_ids.len();
    let mut acc: Vec<Acc> = (0..run.cells.len() * n_specs).map(|_| Acc::default()).collect();
    for r in &run.results {
        if r.cell >= run.cells.len() || r.spec >= n_specs {
            return Err(Error::domain(format!(
                "result for cell {} spec {} is outside the experiment",
                r.cell, r.spec
            )));
        }
        let late = run.cells[r.cell].late;
        let a = &mut acc[r.cell * n_specs + r.spec];
        match &r.outcome {
            Outcome::Failed { .. } => a.n_failed += 1,
            Outcome::Estimate(e) => {
                a.n_ok += 1;
                a.tau.push(e.tau_hat);
                a.cover_late += usize::from(covers(e.ci, late));
                a.cover_w += usize::from(covers(e.ci, e.weighted_estimand));
                a.first_stage += e.first_stage;
                a.se += e.se;
                a.se2 += e.se * e.se;
                a.target += e.weighted_estimand;
            }
        }
    }
    let mut rows = Vec::with_capacity(acc.len());
    for (c, cell) in run.cells.iter().enumerate() {
        let base: Vec<Option<Metrics>> = (0..n_specs)
            .map(|s| metrics(&acc[c * n_specs + s], cell.late))
            .collect();
        let reference = run
            .spec_ids
            .iter()
            .position(|id| id == "unweighted")
            .and_then(|u| base[u].as_ref().map(|m| m.rmse))
            .filter(|&r| r > 0.0);
        for (s, m) in base.into_iter().enumerate() {
            let a = &acc[c * n_specs + s];
            rows.push(SummaryRow {
                dgp: cell.cell.dgp,
                sigma_eta: cell.cell.sigma_eta,
                estimator: run.spec_ids[s].clone(),
                late: cell.late,
                n_ok: a.n_ok,
                n_failed: a.n_failed,
                metrics: m.map(|mut m| {
                    m.rmse_ratio = reference.map(|r| m.rmse / r);
                    m
                }),
            });
        }
    }
    Ok(SummaryTable { rows })
}

fn metrics(a: &Acc, late: f64) -> Option<Metrics> {
    if a.n_ok < 2 {
        return None;
    }
    let n = a.n_ok as f64;
    let mean = a.tau.iter().sum::<f64>() / n;
    let var = a.tau.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    let bias = mean - late;
    let mse_bias_sq = bias * bias;
    Some(Metrics {
        bias,
        sd: var.sqrt(),
        rmse: (mse_bias_sq + var).sqrt(),
        rmse_ratio: None,
        coverage_late: a.cover_late as f64 / n,
        coverage_wlate: a.cover_w as f64 / n,
        mean_first_stage: a.first_stage / n,
        mse_bias_sq,
        mse_variance: var,
        mean_se: a.se / n,
        variance_ratio: (var > 0.0).then(|| (a.se2 / n) / var),
        mean_weighted_estimand: a.target / n,
    })
}
