//! `cwiv`: run simulation experiments, estimate on a dataset, and tabulate
//! oracle compliance curves.

pub mod dataset;
pub mod error;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cwiv_core::dgp::DgpConfig;
use cwiv_core::estimators::{
    estimate_unweighted, estimate_weighted, shrinkage_weights, ConfidenceLevel, IvData, IvEstimate, Provenance,
};
use cwiv_core::mathcore::{std_normal_quantile, RngStream};
use cwiv_core::montecarlo::{emit_tables, run_experiment, summarize, CellContext, ExperimentConfig, TableFormat};
use cwiv_core::weights::{
    assign_folds, crossfit_weights, insample_weights, BinnedOlsLearner, HonestForestLearner, HonestForestParams,
    OracleModel, WeightLearner,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use dataset::{read_dataset, write_sample, Dataset};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cwiv", version, about = "Compliance-weighted instrumental-variables estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo experiment described by a TOML config.
    Simulate(SimulateArgs),
    /// Estimate unweighted and compliance-weighted IV on a CSV dataset.
    Estimate(EstimateArgs),
    /// Tabulate the closed-form compliance score of a simulation design.
    OracleCurve(OracleCurveArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Json => TableFormat::Json,
        }
    }
}

impl Format {
    fn extension(self) -> &'static str {
        TableFormat::from(self).extension()
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = "CWIV_OUT", default_value = "cwiv-out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "CWIV_WORKERS", default_value_t = 0)]
    pub workers: usize,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write the first replication sample of the first cell as a
    /// dataset CSV.
    #[arg(long, value_name = "FILE")]
    pub dump_sample: Option<PathBuf>,
}

/// `none`, `binned:J` or `forest`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WeightsArg {
    None,
    Binned(usize),
    Forest,
}

impl FromStr for WeightsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "forest" => Ok(Self::Forest),
            _ => {
                let bins = s
                    .strip_prefix("binned:")
                    .and_then(|j| j.parse::<usize>().ok())
                    .filter(|&j| j > 0)
                    .ok_or_else(|| format!("expected none, binned:J with J >= 1, or forest; got {s:?}"))?;
                Ok(Self::Binned(bins))
            }
        }
    }
}

impl fmt::Display for WeightsArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "none"),
            Self::Binned(j) => write!(f, "binned:{j}"),
            Self::Forest => write!(f, "forest"),
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Dataset with columns outcome, treatment, instrument, x1..xk,
    /// control_1..control_m.
    pub data: PathBuf,
    #[arg(long, default_value = "none")]
    pub weights: WeightsArg,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Fit weights on the full sample instead of cross-fitting.
    #[arg(long)]
    pub insample: bool,
    /// Shrink learned weights toward a constant.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "CWIV_OUT", default_value = "cwiv-out")]
    pub out: PathBuf,
    #[arg(long, env = "CWIV_WORKERS", default_value_t = 0)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct OracleCurveArgs {
    #[arg(long, default_value_t = 1)]
    pub dgp: u8,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0])]
    pub sigma_eta: Vec<f64>,
    /// Number of X quantiles `k/(points+1)`, `k = 1..points`.
    #[arg(long, default_value_t = 99)]
    pub points: usize,
    #[arg(long, env = "CWIV_OUT", default_value = "cwiv-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::OracleCurve(a) => cmd_oracle_curve(&a),
    }
}

fn runtime_io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(runtime_io(path))
}

/// Parses an experiment config; errors name the offending field.
pub fn parse_experiment_config(text: &str) -> CliResult<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Usage(format!("config field `{path}`: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_experiment_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_experiment_config(&text).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_path: String,
    master_seed: u64,
    workers: usize,
    format: &'static str,
    wall_time_seconds: f64,
    failed_replications: usize,
    tables: Vec<String>,
    config: &'a ExperimentConfig,
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg = load_experiment_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    fs::create_dir_all(&a.out).map_err(runtime_io(&a.out))?;
    if let Some(path) = &a.dump_sample {
        let ctx = CellContext::new(&cfg, 0)?;
        write_sample(&ctx.sample(&cfg, 0)?, path)?;
    }
    let run = run_experiment(&cfg, a.workers)?;
    let failed = run.results.iter().filter(|r| r.estimate().is_none()).count();
    let summary = summarize(&run)?;
    let files = emit_tables(&summary, a.format.into(), &a.out)?;
    let manifest = Manifest {
        tool: "cwiv",
        version: env!("CARGO_PKG_VERSION"),
        command: "simulate",
        config_path: a.config.display().to_string(),
        master_seed: cfg.master_seed,
        workers: a.workers,
        format: a.format.extension(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        failed_replications: failed,
        tables: files
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
        config: &cfg,
    };
    write_json_file(&a.out.join("manifest.json"), &manifest)?;
    println!(
        "{} cells x {} specs x {} replications ({} failed) -> {}",
        cfg.dgp_cells.len(),
        cfg.estimator_specs.len(),
        cfg.replications,
        failed,
        a.out.display()
    );
    for row in &summary.rows {
        match &row.metrics {
            Some(m) => println!(
                "{:<16} {:<30} bias {:+.4}  sd {:.4}  rmse {:.4}  ratio {}  cover {:.3}",
                row.cell_label(),
                row.estimator,
                m.bias,
                m.sd,
                m.rmse,
                m.rmse_ratio.map_or("-".to_string(), |r| format!("{r:.3}")),
                m.coverage_wlate
            ),
            None => println!("{:<16} {:<30} insufficient successful replications", row.cell_label(), row.estimator),
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EstimateEntry {
    Ok(IvEstimate),
    WeakFirstStage { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Share of raw predictions that were negative and clipped to zero.
    pub share_clipped: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedReport {
    pub learner: String,
    pub provenance: Provenance,
    pub folds: Option<usize>,
    pub lambda: Option<f64>,
    /// SHA-256 of the fold labels, one decimal label per line.
    pub fold_map_sha256: Option<String>,
    pub weights: WeightSummary,
    pub estimate: EstimateEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub n: usize,
    pub level: f64,
    pub seed: u64,
    pub covariates: Vec<String>,
    pub controls: Vec<String>,
    pub unweighted: EstimateEntry,
    pub weighted: Option<WeightedReport>,
    pub warnings: Vec<String>,
}

fn entry(r: cwiv_core::Result<IvEstimate>, label: &str, warnings: &mut Vec<String>) -> CliResult<EstimateEntry> {
    match r {
        Ok(e) => Ok(EstimateEntry::Ok(e)),
        Err(e @ cwiv_core::Error::WeakFirstStage { .. }) => {
            warnings.push(format!("{label}: {e}"));
            Ok(EstimateEntry::WeakFirstStage { message: e.to_string() })
        }
        Err(e) => Err(CliError::Runtime(format!("{label}: {e}"))),
    }
}

/// Hex SHA-256 of the fold labels written one per line.
pub fn fold_map_hash(fold_of: &[usize]) -> String {
    let mut h = Sha256::new();
    for f in fold_of {
        h.update(f.to_string().as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the estimation requested by `a` on `ds`. Randomness: folds from
/// `RngStream::new(seed).child(0)`, learner from `.child(1)`.
pub fn estimate_dataset(ds: &Dataset, a: &EstimateArgs) -> CliResult<EstimateReport> {
    let level = ConfidenceLevel::new(a.level).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(l) = a.lambda {
        if !(0.0..=1.0).contains(&l) {
            return Err(CliError::Usage(format!("--lambda must lie in [0, 1], got {l}")));
        }
    }
    let data = IvData::new(
        ds.outcome.clone(),
        ds.treatment.clone(),
        ds.instrument.clone(),
        ds.controls.clone(),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut warnings = Vec::new();
    let unweighted = entry(estimate_unweighted(&data, level), "unweighted", &mut warnings)?;
    let learner: Box<dyn WeightLearner> = match a.weights {
        WeightsArg::None => {
            return Ok(EstimateReport {
                n: ds.len(),
                level: a.level,
                seed: a.seed,
                covariates: ds.covariate_names.clone(),
                controls: ds.control_names.clone(),
                unweighted,
                weighted: None,
                warnings,
            })
        }
        WeightsArg::Binned(j) => Box::new(BinnedOlsLearner::new(j)?),
        WeightsArg::Forest => Box::new(HonestForestLearner::new(HonestForestParams::default())?),
    };
    let x = ds
        .covariates
        .as_ref()
        .ok_or_else(|| CliError::Usage("--weights needs covariate columns x1..xk".into()))?;
    if matches!(a.weights, WeightsArg::Binned(_)) && x.cols() != 1 {
        return Err(CliError::Usage(format!(
            "binned weights use a single covariate; the dataset has {}",
            x.cols()
        )));
    }
    let stream = RngStream::new(a.seed);
    let (z, d) = (&ds.instrument, &ds.treatment);
    let (weights, n_clipped, folds) = if a.insample {
        let f = insample_weights(x, z, d, learner.as_ref(), &stream.child(1))?;
        (f.weights, f.n_clipped, None)
    } else {
        if a.folds < 2 || a.folds > ds.len() {
            return Err(CliError::Usage(format!(
                "--folds must lie in [2, {}], got {}",
                ds.len(),
                a.folds
            )));
        }
        let folds = assign_folds(ds.len(), a.folds, &stream.child(0))?;
        let cf = crossfit_weights(x, z, d, learner.as_ref(), &folds, &stream.child(1))?;
        (cf.weights, cf.n_clipped, Some(folds))
    };
    let weights = match a.lambda {
        Some(l) => shrinkage_weights(&weights, l)?,
        None => weights,
    };
    let v = weights.values();
    let summary = WeightSummary {
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        mean: weights.mean(),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        share_clipped: n_clipped as f64 / v.len() as f64,
    };
    let estimate = entry(estimate_weighted(&data, &weights, level), "weighted", &mut warnings)?;
    Ok(EstimateReport {
        n: ds.len(),
        level: a.level,
        seed: a.seed,
        covariates: ds.covariate_names.clone(),
        controls: ds.control_names.clone(),
        unweighted,
        weighted: Some(WeightedReport {
            learner: weights.learner_id.clone(),
            provenance: weights.provenance,
            folds: folds.as_ref().map(|f| f.k),
            lambda: a.lambda,
            fold_map_sha256: folds.as_ref().map(|f| fold_map_hash(&f.fold_of)),
            weights: summary,
            estimate,
        }),
        warnings,
    })
}

fn estimate_rows(report: &EstimateReport) -> Vec<(String, &EstimateEntry)> {
    let mut rows = vec![("unweighted".to_string(), &report.unweighted)];
    if let Some(w) = &report.weighted {
        rows.push((w.learner.clone(), &w.estimate));
    }
    rows
}

fn write_report_csv(path: &Path, report: &EstimateReport) -> CliResult<()> {
    let err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record([
        "estimator",
        "status",
        "tau_hat",
        "se",
        "ci_lower",
        "ci_upper",
        "first_stage",
        "p_hat",
        "n",
        "level",
    ])
    .map_err(err)?;
    for (name, e) in estimate_rows(report) {
        let rec = match e {
            EstimateEntry::Ok(e) => vec![
                name,
                "ok".into(),
                e.tau_hat.to_string(),
                e.se.to_string(),
                e.ci.0.to_string(),
                e.ci.1.to_string(),
                e.first_stage.to_string(),
                e.p_hat.to_string(),
                e.n.to_string(),
                e.level.to_string(),
            ],
            EstimateEntry::WeakFirstStage { .. } => {
                let mut r = vec![name, "weak_first_stage".into()];
                r.extend(std::iter::repeat_n(String::new(), 6));
                r.push(report.n.to_string());
                r.push(report.level.to_string());
                r
            }
        };
        w.write_record(rec).map_err(err)?;
    }
    w.flush().map_err(runtime_io(path))
}

fn cmd_estimate(a: &EstimateArgs) -> CliResult<()> {
    let ds = read_dataset(&a.data)?;
    let report = if a.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(a.workers)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start {} workers: {e}", a.workers)))?
            .install(|| estimate_dataset(&ds, a))?
    } else {
        estimate_dataset(&ds, a)?
    };
    fs::create_dir_all(&a.out).map_err(runtime_io(&a.out))?;
    let path = a.out.join(format!("report.{}", a.format.extension()));
    match a.format {
        Format::Json => write_json_file(&path, &report)?,
        Format::Csv => write_report_csv(&path, &report)?,
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for (name, e) in estimate_rows(&report) {
        match e {
            EstimateEntry::Ok(e) => println!(
                "{name:<24} tau {:+.6}  se {:.6}  ci [{:+.6}, {:+.6}]",
                e.tau_hat, e.se, e.ci.0, e.ci.1
            ),
            EstimateEntry::WeakFirstStage { .. } => println!("{name:<24} weak first stage"),
        }
    }
    println!("report -> {}", path.display());
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub sigma_eta: f64,
    pub quantile: f64,
    pub x: f64,
    pub alpha: f64,
    /// Population complier share, the average of `alpha` over `X`.
    pub complier_share: f64,
}

/// `α(x)` at the quantiles `k/(points+1)` of `X` for each `σ_η`.
pub fn oracle_curve(dgp: u8, sigma_eta: &[f64], points: usize) -> CliResult<Vec<CurvePoint>> {
    if points == 0 {
        return Err(CliError::Usage("--points must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(points * sigma_eta.len());
    for &s in sigma_eta {
        if s.is_nan() || s <= 0.0 {
            return Err(CliError::Usage(format!("sigma_eta must be positive, got {s}")));
        }
        let cfg = DgpConfig::preset(dgp, s)?;
        let model = OracleModel::new(&cfg)?;
        let sd = cfg.sd_x();
        for k in 1..=points {
            let q = k as f64 / (points + 1) as f64;
            let x = sd * std_normal_quantile(q)?;
            out.push(CurvePoint {
                sigma_eta: s,
                quantile: q,
                x,
                alpha: model.alpha(x),
                complier_share: cfg.complier_share(),
            });
        }
    }
    Ok(out)
}

fn cmd_oracle_curve(a: &OracleCurveArgs) -> CliResult<()> {
    let curve = oracle_curve(a.dgp, &a.sigma_eta, a.points)?;
    fs::create_dir_all(&a.out).map_err(runtime_io(&a.out))?;
    let path = a.out.join(format!("oracle_curve.{}", a.format.extension()));
    match a.format {
        Format::Json => write_json_file(&path, &curve)?,
        Format::Csv => {
            let err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
            let mut w = csv::Writer::from_path(&path).map_err(err)?;
            for p in &curve {
                w.serialize(p).map_err(err)?;
            }
            w.flush().map_err(runtime_io(&path))?;
        }
    }
    println!("{} points -> {}", curve.len(), path.display());
    Ok(())
}
