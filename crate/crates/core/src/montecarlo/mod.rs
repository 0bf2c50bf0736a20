//! Replication harness: draws samples from the simulation designs, runs a grid
//! of estimator specifications on each, and aggregates bias, dispersion and
//! coverage.
//!
//! Randomness is addressed by path from the master seed. The sample of
//! replication `r` in cell `c` comes from `[0, c, r]` and is shared by every
//! estimator spec; spec `s` draws its folds and learner randomness from
//! `[1, c, r, s]`; the `X` draw for cross-fitted estimands is `[2, c]`.
//! Results therefore do not depend on worker count or scheduling.

mod summary;
mod tables;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{
    draw_sample, empirical_weighted_estimand, population_estimands, cf_estimand, DgpConfig, OracleDraw,
    SimSample, WeightKind, MIN_ORACLE_DRAWS,
};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_unweighted, estimate_weighted, shrinkage_level, shrinkage_weights, ConfidenceLevel, IvEstimate,
    WeightVector,
};
use crate::mathcore::RngStream;
use crate::weights::{
    assign_folds, crossfit_weights, insample_weights, oracle_weights, BinnedOlsLearner, CrossFit,
    FittedWeightModel, HonestForestLearner, HonestForestParams, ShrunkModel, WeightLearner,
};

pub use summary::{summarize, Metrics, SummaryRow, SummaryTable};
pub use tables::{emit_tables, read_long, read_summary, read_wide, LongRow, TableFormat, WideTable, METRICS};

const SAMPLE_BRANCH: u64 = 0;
const SPEC_BRANCH: u64 = 1;
const ORACLE_BRANCH: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    /// Built-in design, 1–4.
    pub dgp: u8,
    pub sigma_eta: f64,
}

impl CellSpec {
    pub fn label(&self) -> String {
        format!("dgp{}_sigma{}", self.dgp, self.sigma_eta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    InSample,
    #[default]
    CrossFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawSpec")]
pub enum EstimatorSpec {
    Unweighted,
    Oracle,
    Binned {
        bins: usize,
        mode: FitMode,
    },
    Forest {
        mode: FitMode,
    },
    Shrinkage {
        lambda: f64,
        base: Box<EstimatorSpec>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SpecKind {
    Unweighted,
    Oracle,
    Binned,
    Forest,
    Shrinkage,
}

/// Flat form of a spec so that deserialization errors carry field paths.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: SpecKind,
    bins: Option<usize>,
    mode: Option<FitMode>,
    lambda: Option<f64>,
    base: Option<Box<RawSpec>>,
}

impl TryFrom<RawSpec> for EstimatorSpec {
    type Error = String;

    fn try_from(r: RawSpec) -> std::result::Result<Self, String> {
        let name = match r.kind {
            SpecKind::Unweighted => "unweighted",
            SpecKind::Oracle => "oracle",
            SpecKind::Binned => "binned",
            SpecKind::Forest => "forest",
            SpecKind::Shrinkage => "shrinkage",
        };
        let allowed: &[&str] = match r.kind {
            SpecKind::Unweighted | SpecKind::Oracle => &[],
            SpecKind::Binned => &["bins", "mode"],
            SpecKind::Forest => &["mode"],
            SpecKind::Shrinkage => &["lambda", "base"],
        };
        let present = [
            ("bins", r.bins.is_some()),
            ("mode", r.mode.is_some()),
            ("lambda", r.lambda.is_some()),
            ("base", r.base.is_some()),
        ];
        for (field, set) in present {
            if set && !allowed.contains(&field) {
                return Err(format!("field `{field}` does not apply to kind = \"{name}\""));
            }
        }
        let missing = |field: &str| format!("kind = \"{name}\" requires field `{field}`");
        Ok(match r.kind {
            SpecKind::Unweighted => Self::Unweighted,
            SpecKind::Oracle => Self::Oracle,
            SpecKind::Binned => Self::Binned {
                bins: r.bins.ok_or_else(|| missing("bins"))?,
                mode: r.mode.ok_or_else(|| missing("mode"))?,
            },
            SpecKind::Forest => Self::Forest {
                mode: r.mode.unwrap_or_default(),
            },
            SpecKind::Shrinkage => Self::Shrinkage {
                lambda: r.lambda.ok_or_else(|| missing("lambda"))?,
                base: Box::new(Self::try_from(*r.base.ok_or_else(|| missing("base"))?)?),
            },
        })
    }
}

impl EstimatorSpec {
    pub fn id(&self) -> String {
        let mode = |m: &FitMode| match m {
            FitMode::InSample => "insample",
            FitMode::CrossFit => "crossfit",
        };
        match self {
            Self::Unweighted => "unweighted".into(),
            Self::Oracle => "oracle".into(),
            Self::Binned { bins, mode: m } => format!("binned{bins}_{}", mode(m)),
            Self::Forest { mode: m } => format!("forest_{}", mode(m)),
            Self::Shrinkage { lambda, base } => format!("shrink{lambda}_{}", base.id()),
        }
    }

    fn uses_crossfit(&self) -> bool {
        match self {
            Self::Binned { mode, .. } | Self::Forest { mode } => *mode == FitMode::CrossFit,
            Self::Shrinkage { base, .. } => base.uses_crossfit(),
            Self::Unweighted | Self::Oracle => false,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Binned { bins: 0, .. } => Err(Error::Config("binned spec needs bins >= 1".into())),
            Self::Shrinkage { lambda, base } => {
                if !(0.0..=1.0).contains(lambda) {
                    return Err(Error::Config(format!("shrinkage lambda must lie in [0, 1], got {lambda}")));
                }
                match base.as_ref() {
                    Self::Unweighted | Self::Shrinkage { .. } => Err(Error::Config(format!(
                        "shrinkage base must be oracle, binned or forest, got {}",
                        base.id()
                    ))),
                    b => b.validate(),
                }
            }
            _ => Ok(()),
        }
    }
}

/// Overrides applied on top of each cell's built-in design.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpOverrides {
    pub rho_de: Option<f64>,
    pub rho_dt: Option<f64>,
    pub rho_te: Option<f64>,
    pub sigma_tau: Option<f64>,
    pub tau_mean: Option<f64>,
    pub tau_slope: Option<f64>,
    pub zeta: Option<f64>,
    pub s_at: Option<f64>,
    pub s_nt: Option<f64>,
    pub p_z: Option<f64>,
}

impl DgpOverrides {
    pub fn apply(&self, mut cfg: DgpConfig) -> DgpConfig {
        let fields = [
            (self.rho_de, &mut cfg.rho_de),
            (self.rho_dt, &mut cfg.rho_dt),
            (self.rho_te, &mut cfg.rho_te),
            (self.sigma_tau, &mut cfg.sigma_tau),
            (self.tau_mean, &mut cfg.tau_mean),
            (self.tau_slope, &mut cfg.tau_slope),
            (self.zeta, &mut cfg.zeta),
            (self.s_at, &mut cfg.s_at),
            (self.s_nt, &mut cfg.s_nt),
            (self.p_z, &mut cfg.p_z),
        ];
        for (v, slot) in fields {
            if let Some(v) = v {
                *slot = v;
            }
        }
        cfg
    }
}

fn default_replications() -> usize {
    1000
}

fn default_sample_size() -> usize {
    1000
}

fn default_folds() -> usize {
    5
}

fn default_oracle_draws() -> usize {
    200_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dgp_cells: Vec<CellSpec>,
    pub estimator_specs: Vec<EstimatorSpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub level: ConfidenceLevel,
    #[serde(default)]
    pub master_seed: u64,
    /// Size of the `X` draw used to evaluate cross-fitted estimands.
    #[serde(default = "default_oracle_draws")]
    pub oracle_draws: usize,
    #[serde(default)]
    pub forest: HonestForestParams,
    #[serde(default)]
    pub dgp: DgpOverrides,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dgp_cells.is_empty() {
            return Err(Error::Config("dgp_cells is empty".into()));
        }
        if self.estimator_specs.is_empty() {
            return Err(Error::Config("estimator_specs is empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("sample_size must be at least 1".into()));
        }
        let mut ids: Vec<String> = Vec::with_capacity(self.estimator_specs.len());
        for s in &self.estimator_specs {
            s.validate()?;
            let id = s.id();
            if ids.contains(&id) {
                return Err(Error::Config(format!("duplicate estimator spec {id}")));
            }
            ids.push(id);
        }
        if self.estimator_specs.iter().any(EstimatorSpec::uses_crossfit) {
            if self.folds < 2 || self.folds > self.sample_size {
                return Err(Error::Config(format!(
                    "folds must lie in [2, sample_size], got {}",
                    self.folds
                )));
            }
            if self.oracle_draws < MIN_ORACLE_DRAWS {
                return Err(Error::Config(format!(
                    "oracle_draws must be at least {MIN_ORACLE_DRAWS}, got {}",
                    self.oracle_draws
                )));
            }
        }
        self.forest.validate()?;
        for c in &self.dgp_cells {
            self.cell_dgp(c)?;
        }
        Ok(())
    }

    pub fn spec_ids(&self) -> Vec<String> {
        self.estimator_specs.iter().map(EstimatorSpec::id).collect()
    }

    /// Design of a cell after overrides, with `n = sample_size`.
    pub fn cell_dgp(&self, cell: &CellSpec) -> Result<DgpConfig> {
        let base = DgpConfig::preset(cell.dgp, cell.sigma_eta)?;
        let cfg = DgpConfig {
            n: self.sample_size,
            ..self.dgp.apply(base)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Population quantities of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub cell: CellSpec,
    pub dgp: DgpConfig,
    pub late: f64,
    /// Compliance-weighted LATE `E[α²τ]/E[α²]`.
    pub oracle_weighted_late: f64,
}

/// Per-cell state shared by every replication.
pub struct CellContext {
    pub index: usize,
    pub info: CellInfo,
    oracle_draw: Option<OracleDraw>,
}

impl CellContext {
    pub fn new(cfg: &ExperimentConfig, index: usize) -> Result<Self> {
        let cell = cfg
            .dgp_cells
            .get(index)
            .ok_or_else(|| Error::domain(format!("no cell {index}")))?
            .clone();
        let dgp = cfg.cell_dgp(&cell)?;
        let pop = population_estimands(&dgp, WeightKind::OracleAlpha)?;
        let oracle_draw = if cfg.estimator_specs.iter().any(EstimatorSpec::uses_crossfit) {
            let stream = RngStream::new(cfg.master_seed).derive(&[ORACLE_BRANCH, index as u64]);
            Some(OracleDraw::new(&dgp, cfg.oracle_draws, &stream)?)
        } else {
            None
        };
        Ok(Self {
            index,
            info: CellInfo {
                cell,
                dgp,
                late: pop.late,
                oracle_weighted_late: pop.weighted_late,
            },
            oracle_draw,
        })
    }

    /// The sample of replication `rep`, shared by all specs.
    pub fn sample(&self, cfg: &ExperimentConfig, rep: usize) -> Result<SimSample> {
        let stream = RngStream::new(cfg.master_seed).derive(&[SAMPLE_BRANCH, self.index as u64, rep as u64]);
        draw_sample(&self.info.dgp, &stream)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub tau_hat: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub first_stage: f64,
    /// Weighted LATE the spec targets: the population LATE for unweighted,
    /// population `τ_α` for oracle, the cross-fitted estimand for cross-fitted
    /// specs and the empirically weighted analog for in-sample specs.
    pub weighted_estimand: f64,
    /// Present for cross-fitted specs.
    pub cf_estimand: Option<f64>,
    pub n_clipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Estimate(EstimateRecord),
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub cell: usize,
    pub spec: usize,
    pub replication: usize,
    pub outcome: Outcome,
}

impl ReplicationResult {
    pub fn estimate(&self) -> Option<&EstimateRecord> {
        match &self.outcome {
            Outcome::Estimate(e) => Some(e),
            Outcome::Failed { .. } => None,
        }
    }
}

enum Fitted {
    Unweighted,
    Oracle(WeightVector),
    InSample(WeightVector, usize),
    CrossFit(CrossFit),
}

fn learner_for(spec: &EstimatorSpec, forest: &HonestForestParams) -> Result<Box<dyn WeightLearner>> {
    match spec {
        EstimatorSpec::Binned { bins, .. } => Ok(Box::new(BinnedOlsLearner::new(*bins)?)),
        EstimatorSpec::Forest { .. } => Ok(Box::new(HonestForestLearner::new(forest.clone())?)),
        _ => Err(Error::domain(format!("{} has no weight learner", spec.id()))),
    }
}

fn fit_base(
    spec: &EstimatorSpec,
    cfg: &ExperimentConfig,
    ctx: &CellContext,
    sample: &SimSample,
    stream: &RngStream,
) -> Result<Fitted> {
    match spec {
        EstimatorSpec::Unweighted => Ok(Fitted::Unweighted),
        EstimatorSpec::Oracle => Ok(Fitted::Oracle(oracle_weights(&sample.x, &ctx.info.dgp)?)),
        EstimatorSpec::Binned { mode, .. } | EstimatorSpec::Forest { mode } => {
            let learner = learner_for(spec, &cfg.forest)?;
            let x = sample.x_matrix();
            match mode {
                FitMode::InSample => {
                    let f = insample_weights(&x, &sample.z, &sample.d, learner.as_ref(), &stream.child(1))?;
                    Ok(Fitted::InSample(f.weights, f.n_clipped))
                }
                FitMode::CrossFit => {
                    let folds = assign_folds(sample.len(), cfg.folds, &stream.child(0))?;
                    let cf = crossfit_weights(&x, &sample.z, &sample.d, learner.as_ref(), &folds, &stream.child(1))?;
                    Ok(Fitted::CrossFit(cf))
                }
            }
        }
        EstimatorSpec::Shrinkage { .. } => Err(Error::domain("nested shrinkage")),
    }
}

fn oracle_draw(ctx: &CellContext) -> Result<&OracleDraw> {
    ctx.oracle_draw
        .as_ref()
        .ok_or_else(|| Error::domain("cell has no oracle draw for cross-fitted estimands"))
}

fn record(est: IvEstimate, weighted_estimand: f64, cf_estimand: Option<f64>, n_clipped: usize) -> EstimateRecord {
    EstimateRecord {
        tau_hat: est.tau_hat,
        se: est.se,
        ci: est.ci,
        first_stage: est.first_stage,
        weighted_estimand,
        cf_estimand,
        n_clipped,
    }
}

fn estimate_spec(
    spec: &EstimatorSpec,
    cfg: &ExperimentConfig,
    ctx: &CellContext,
    sample: &SimSample,
    stream: &RngStream,
) -> Result<EstimateRecord> {
    let data = sample.iv_data()?;
    if let EstimatorSpec::Shrinkage { lambda, base } = spec {
        let fitted = fit_base(base, cfg, ctx, sample, stream)?;
        let (base_w, n_clipped) = match &fitted {
            Fitted::Oracle(w) => (w, 0),
            Fitted::InSample(w, c) => (w, *c),
            Fitted::CrossFit(cf) => (&cf.weights, cf.n_clipped),
            Fitted::Unweighted => return Err(Error::domain("shrinkage of unweighted IV")),
        };
        let w = shrinkage_weights(base_w, *lambda)?;
        let est = estimate_weighted(&data, &w, cfg.level)?;
        return match &fitted {
            Fitted::CrossFit(cf) => {
                let level = shrinkage_level(base_w.values())?;
                let shrunk: Vec<ShrunkModel<'_>> = cf
                    .models
                    .iter()
                    .map(|m| ShrunkModel {
                        base: m.as_ref(),
                        level,
                        lambda: *lambda,
                    })
                    .collect();
                let refs: Vec<&dyn FittedWeightModel> = shrunk.iter().map(|m| m as &dyn FittedWeightModel).collect();
                let cf_est = cf_estimand(&refs, oracle_draw(ctx)?)?;
                Ok(record(est, cf_est, Some(cf_est), n_clipped))
            }
            _ => {
                let target = empirical_weighted_estimand(&sample.x, w.values(), &ctx.info.dgp)?;
                Ok(record(est, target, None, n_clipped))
            }
        };
    }
    match fit_base(spec, cfg, ctx, sample, stream)? {
        Fitted::Unweighted => {
            let est = estimate_unweighted(&data, cfg.level)?;
            Ok(record(est, ctx.info.late, None, 0))
        }
        Fitted::Oracle(w) => {
            let est = estimate_weighted(&data, &w, cfg.level)?;
            Ok(record(est, ctx.info.oracle_weighted_late, None, 0))
        }
        Fitted::InSample(w, n_clipped) => {
            let est = estimate_weighted(&data, &w, cfg.level)?;
            let target = empirical_weighted_estimand(&sample.x, w.values(), &ctx.info.dgp)?;
            Ok(record(est, target, None, n_clipped))
        }
        Fitted::CrossFit(cf) => {
            let est = estimate_weighted(&data, &cf.weights, cfg.level)?;
            let cf_est = cf_estimand(&cf.model_refs(), oracle_draw(ctx)?)?;
            Ok(record(est, cf_est, Some(cf_est), cf.n_clipped))
        }
    }
}

/// One estimator spec on one replication sample. Estimation errors are
/// recorded in the outcome rather than returned.
pub fn run_replication(
    cfg: &ExperimentConfig,
    ctx: &CellContext,
    spec_index: usize,
    rep: usize,
    sample: &SimSample,
) -> ReplicationResult {
    let outcome = match cfg.estimator_specs.get(spec_index) {
        None => Outcome::Failed {
            reason: format!("no estimator spec {spec_index}"),
        },
        Some(spec) => {
            let stream = RngStream::new(cfg.master_seed).derive(&[
                SPEC_BRANCH,
                ctx.index as u64,
                rep as u64,
                spec_index as u64,
            ]);
            match estimate_spec(spec, cfg, ctx, sample, &stream) {
                Ok(r) => Outcome::Estimate(r),
                Err(e) => Outcome::Failed { reason: e.to_string() },
            }
        }
    };
    ReplicationResult {
        cell: ctx.index,
        spec: spec_index,
        replication: rep,
        outcome,
    }
}

/// Every spec on replication `rep` of a cell, in spec order.
pub fn run_cell_replication(cfg: &ExperimentConfig, ctx: &CellContext, rep: usize) -> Vec<ReplicationResult> {
    match ctx.sample(cfg, rep) {
        Ok(sample) => (0..cfg.estimator_specs.len())
            .map(|s| run_replication(cfg, ctx, s, rep, &sample))
            .collect(),
        Err(e) => (0..cfg.estimator_specs.len())
            .map(|s| ReplicationResult {
                cell: ctx.index,
                spec: s,
                replication: rep,
                outcome: Outcome::Failed {
                    reason: format!("sample draw failed: {e}"),
                },
            })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub cells: Vec<CellInfo>,
    pub spec_ids: Vec<String>,
    /// Ordered by cell, then replication, then spec.
    pub results: Vec<ReplicationResult>,
}

/// Runs every (cell, replication, spec) combination. `workers = 0` uses the
/// ambient rayon pool; otherwise a dedicated pool of that size.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentRun> {
    cfg.validate()?;
    let go = || -> Result<ExperimentRun> {
        let contexts = (0..cfg.dgp_cells.len())
            .into_par_iter()
            .map(|c| CellContext::new(cfg, c))
            .collect::<Result<Vec<_>>>()?;
        let items: Vec<(usize, usize)> = (0..contexts.len())
            .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
            .collect();
        let results: Vec<ReplicationResult> = items
            .into_par_iter()
            .flat_map_iter(|(c, r)| run_cell_replication(cfg, &contexts[c], r))
            .collect();
        Ok(ExperimentRun {
            cells: contexts.into_iter().map(|c| c.info).collect(),
            spec_ids: cfg.spec_ids(),
            results,
        })
    };
    if workers == 0 {
        go()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?
            .install(go)
    }
}
