//! Acceptance suite: one pass/fail line per criterion. Exits nonzero if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cwiv_core::dgp::{oracle_alpha_of_x, population_estimands, DgpConfig, WeightKind};
use cwiv_core::estimators::{interacted_iv, residualize, weighted_iv, ConfidenceLevel, IvData, Provenance, WeightVector};
use cwiv_core::mathcore::DenseMatrix;
use cwiv_core::montecarlo::{
    emit_tables, run_experiment, summarize, CellSpec, DgpOverrides, EstimatorSpec, ExperimentConfig, FitMode,
    SummaryTable, TableFormat,
};
use cwiv_core::multiinstrument::{build_orthonormal_basis, FiniteSupportInstrument};
use cwiv_core::weights::HonestForestParams;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const SIGMAS: [f64; 3] = [0.5, 1.0, 2.0];
const CROSSFIT_SPECS: [&str; 3] = ["binned10_crossfit", "binned50_crossfit", "forest_crossfit"];

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, ok: bool, detail: String, took: Duration) {
        if !ok {
            self.failures += 1;
        }
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2} {name}: {detail} ({:.2}s)", took.as_secs_f64());
    }
}

fn grid_config() -> ExperimentConfig {
    let mut cells = Vec::new();
    for dgp in 1..=4u8 {
        for sigma_eta in SIGMAS {
            cells.push(CellSpec { dgp, sigma_eta });
        }
    }
    ExperimentConfig {
        dgp_cells: cells,
        estimator_specs: vec![
            EstimatorSpec::Unweighted,
            EstimatorSpec::Oracle,
            EstimatorSpec::Binned { bins: 10, mode: FitMode::InSample },
            EstimatorSpec::Binned { bins: 10, mode: FitMode::CrossFit },
            EstimatorSpec::Binned { bins: 50, mode: FitMode::InSample },
            EstimatorSpec::Binned { bins: 50, mode: FitMode::CrossFit },
            EstimatorSpec::Forest { mode: FitMode::CrossFit },
        ],
        replications: 1000,
        sample_size: 1000,
        folds: 5,
        level: ConfidenceLevel::default(),
        master_seed: 2024,
        oracle_draws: 200_000,
        forest: HonestForestParams::default(),
        dgp: DgpOverrides::default(),
    }
}

fn ratio(s: &SummaryTable, dgp: u8, sigma: f64, spec: &str) -> f64 {
    s.get(dgp, sigma, spec)
        .and_then(|r| r.metrics().ok())
        .and_then(|m| m.rmse_ratio)
        .unwrap_or(f64::NAN)
}

fn complier_share(r: &mut Report) {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut shares = Vec::new();
    for s in SIGMAS {
        let cfg = DgpConfig::preset(1, s).unwrap();
        let share = population_estimands(&cfg, WeightKind::Unit).unwrap().complier_share;
        worst = worst.max((share - 0.25).abs());
        shares.push(format!("{share:.9}"));
    }
    let took = t.elapsed();
    r.line(
        1,
        "complier share by quadrature",
        worst < 1e-6 && took < Duration::from_secs(1),
        format!("E[alpha(X)] = {} (max error {worst:.1e})", shares.join(", ")),
        took,
    );
}

fn equivalence(r: &mut Report) {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(20);
    let level = ConfidenceLevel::default();
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 100 {
        let n = rng.random_range(40..400);
        let k = rng.random_range(0..4);
        let z: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.0 } else { f64::from(rng.random_bool(0.5)) }).collect();
        let ctl: Vec<f64> = (0..n * k).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let d: Vec<f64> = (0..n)
            .map(|i| f64::from(rng.random::<f64>() < 0.2 + 0.5 * z[i]))
            .collect();
        let y: Vec<f64> = (0..n).map(|i| 1.5 * d[i] + rng.random::<f64>() * 3.0).collect();
        let w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random::<f64>() }).collect();
        let controls = (k > 0).then(|| DenseMatrix::new(n, k, ctl).unwrap());
        let data = IvData::new(y, d, z, controls).unwrap();
        let wv = WeightVector::new(w, Provenance::Fixed, "random").unwrap();
        let Ok(res) = residualize(&data, &wv) else { continue };
        let (Ok(a), Ok(b)) = (weighted_iv(&res, &wv, level), interacted_iv(&res, &wv, level)) else {
            continue;
        };
        worst = worst.max((a.tau_hat - b.tau_hat).abs() / a.tau_hat.abs().max(1.0));
        done += 1;
    }
    let took = t.elapsed();
    r.line(
        2,
        "interacted equals weighted IV",
        worst < 1e-10 && took < Duration::from_secs(5),
        format!("max relative difference {worst:.2e} over 100 datasets"),
        took,
    );
}

fn oracle_gain(r: &mut Report) {
    let mut cfg = grid_config();
    cfg.dgp_cells = vec![CellSpec { dgp: 1, sigma_eta: 0.5 }];
    cfg.estimator_specs = vec![EstimatorSpec::Unweighted, EstimatorSpec::Oracle];
    let t = Instant::now();
    let s = summarize(&run_experiment(&cfg, 0).unwrap()).unwrap();
    let took = t.elapsed();
    let v = ratio(&s, 1, 0.5, "oracle");
    r.line(
        3,
        "oracle weights cut RMSE on DGP1, sigma_eta 0.5",
        v <= 0.75 && took < Duration::from_secs(120),
        format!("rmse ratio {v:.4} (need <= 0.75)"),
        took,
    );
}

fn grid_criteria(r: &mut Report, s: &SummaryTable, took: Duration) {
    let rs: Vec<f64> = SIGMAS.iter().map(|&sg| ratio(s, 1, sg, "oracle")).collect();
    r.line(
        4,
        "oracle ratio increases with first-stage noise",
        rs[0] < rs[1] && rs[1] < rs[2],
        format!("DGP1 sigma_eta 0.5/1/2: {:.4} < {:.4} < {:.4}", rs[0], rs[1], rs[2]),
        Duration::ZERO,
    );

    let (d4, d1, d3) = (ratio(s, 4, 1.0, "oracle"), ratio(s, 1, 1.0, "oracle"), ratio(s, 3, 1.0, "oracle"));
    r.line(
        5,
        "oracle ratio ordered across designs",
        d4 < d1 && d1 < d3,
        format!("sigma_eta 1: DGP4 {d4:.4} < DGP1 {d1:.4} < DGP3 {d3:.4}"),
        Duration::ZERO,
    );

    let mut lo = (f64::INFINITY, String::new());
    let mut hi = (f64::NEG_INFINITY, String::new());
    let mut bad = Vec::new();
    for row in s.rows.iter().filter(|row| CROSSFIT_SPECS.contains(&row.estimator.as_str())) {
        let c = row.metrics().map(|m| m.coverage_wlate).unwrap_or(f64::NAN);
        let at = format!("{} {}", row.cell_label(), row.estimator);
        if !(0.92..=0.975).contains(&c) {
            bad.push(format!("{at} = {c:.3}"));
        }
        if c < lo.0 {
            lo = (c, at.clone());
        }
        if c > hi.0 {
            hi = (c, at);
        }
    }
    let n_checked = s.rows.iter().filter(|row| CROSSFIT_SPECS.contains(&row.estimator.as_str())).count();
    let mut detail = format!(
        "{n_checked} cell/spec pairs, min {:.3} ({}), max {:.3} ({}), full grid {:.0}s",
        lo.0,
        lo.1,
        hi.0,
        hi.1,
        took.as_secs_f64()
    );
    if !bad.is_empty() {
        detail.push_str(&format!("; outside [0.92, 0.975]: {}", bad.join(", ")));
    }
    r.line(
        6,
        "cross-fitted coverage of the cross-fitted estimand",
        bad.is_empty() && n_checked == 36 && took < Duration::from_secs(30 * 60),
        detail,
        took,
    );

    let mut parts = Vec::new();
    let mut ok = true;
    for dgp in 1..=4u8 {
        let cov = |spec: &str| {
            s.get(dgp, 2.0, spec)
                .and_then(|row| row.metrics().ok())
                .map(|m| m.coverage_late)
                .unwrap_or(f64::NAN)
        };
        let (ins, cf) = (cov("binned50_insample"), cov("binned50_crossfit"));
        ok &= ins < cf;
        parts.push(format!("DGP{dgp} {ins:.3} < {cf:.3}"));
    }
    r.line(
        7,
        "in-sample binned(50) undercovers the LATE at sigma_eta 2",
        ok,
        parts.join(", "),
        Duration::ZERO,
    );
}

fn variance_calibration(r: &mut Report) {
    let mut cfg = grid_config();
    cfg.dgp_cells = vec![CellSpec { dgp: 1, sigma_eta: 1.0 }];
    cfg.estimator_specs = vec![EstimatorSpec::Oracle];
    cfg.sample_size = 4000;
    let t = Instant::now();
    let s = summarize(&run_experiment(&cfg, 0).unwrap()).unwrap();
    let took = t.elapsed();
    let m = s.get(1, 1.0, "oracle").unwrap().metrics().unwrap().clone();
    let v = m.variance_ratio.unwrap_or(f64::NAN);
    r.line(
        8,
        "robust variance calibration at N = 4000",
        (0.9..=1.1).contains(&v),
        format!("mean(se^2)/Var_MC = {v:.4}"),
        took,
    );
}

/// `B = c (E[α² X]/E[α²] − E[α X]/E[α])` by a trapezoid rule on a uniform
/// grid, independent of the adaptive quadrature in the library.
fn local_bias_trapezoid(cfg: &DgpConfig, c: f64) -> f64 {
    let sd = cfg.sd_x();
    let (a, b, steps) = (-12.0 * sd, 12.0 * sd, 200_000);
    let h = (b - a) / steps as f64;
    let mut m = [0.0f64; 4];
    for i in 0..=steps {
        let x = a + h * i as f64;
        let wt = if i == 0 || i == steps { 0.5 } else { 1.0 };
        let phi = (-0.5 * (x / sd).powi(2)).exp();
        let al = oracle_alpha_of_x(x, cfg);
        m[0] += wt * phi * al;
        m[1] += wt * phi * al * x;
        m[2] += wt * phi * al * al;
        m[3] += wt * phi * al * al * x;
    }
    c * (m[3] / m[2] - m[1] / m[0])
}

fn local_to_zero(r: &mut Report) {
    const C: f64 = 5.0;
    let n = 1000usize;
    let slope = C / (n as f64).sqrt();
    let mut cfg = grid_config();
    cfg.dgp_cells = vec![CellSpec { dgp: 1, sigma_eta: 1.0 }];
    cfg.estimator_specs = vec![EstimatorSpec::Oracle];
    cfg.sample_size = n;
    cfg.dgp = DgpOverrides {
        sigma_tau: Some(0.0),
        tau_mean: Some(0.0),
        tau_slope: Some(slope),
        ..DgpOverrides::default()
    };
    let t = Instant::now();
    let dgp = cfg.cell_dgp(&cfg.dgp_cells[0]).unwrap();
    let b_trap = local_bias_trapezoid(&dgp, C);
    let pop = population_estimands(&dgp, WeightKind::OracleAlpha).unwrap();
    let b_quad = (n as f64).sqrt() * (pop.weighted_late - pop.late);
    let s = summarize(&run_experiment(&cfg, 0).unwrap()).unwrap();
    let took = t.elapsed();
    let row = s.get(1, 1.0, "oracle").unwrap();
    let m = row.metrics().unwrap();
    let root_n = (n as f64).sqrt();
    let mc_mean = root_n * m.bias;
    let mc_se = root_n * m.sd / (row.n_ok as f64).sqrt();
    let z = (mc_mean - b_trap) / mc_se;
    r.line(
        9,
        "local-to-zero bias of the compliance-weighted estimator",
        z.abs() <= 3.0 && (b_quad - b_trap).abs() < 1e-6,
        format!(
            "MC mean {mc_mean:.4} (se {mc_se:.4}) vs B {b_trap:.4} (adaptive quadrature {b_quad:.4}), z = {z:+.2}"
        ),
        took,
    );
}

fn basis(r: &mut Report) {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(2..=6);
        let mut support: Vec<f64> = Vec::new();
        let mut v = rng.random::<f64>() * 4.0 - 2.0;
        for _ in 0..m {
            support.push(v);
            v += 0.1 + rng.random::<f64>();
        }
        let raw: Vec<f64> = (0..m).map(|_| 0.05 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let inst = FiniteSupportInstrument::new(support, probs.clone()).unwrap();
        let b = build_orthonormal_basis(&inst).unwrap();
        for j in 0..b.len() {
            let mean: f64 = (0..m).map(|k| probs[k] * b.values[j][k]).sum();
            worst = worst.max(mean.abs());
            for l in 0..b.len() {
                let ip: f64 = (0..m).map(|k| probs[k] * b.values[j][k] * b.values[l][k]).sum();
                let target = if j == l { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
    }
    let mut worst_binary = 0.0f64;
    for _ in 0..20 {
        let p = 0.02 + 0.96 * rng.random::<f64>();
        let inst = FiniteSupportInstrument::new(vec![0.0, 1.0], vec![1.0 - p, p]).unwrap();
        let b = build_orthonormal_basis(&inst).unwrap();
        let s = (p * (1.0 - p)).sqrt();
        for (k, z) in [0.0, 1.0].into_iter().enumerate() {
            let want = (z - p) / s;
            worst_binary = worst_binary.max((b.values[0][k] - want).abs() / want.abs());
        }
    }
    let took = t.elapsed();
    r.line(
        10,
        "orthonormal instrument basis",
        worst < 1e-10 && worst_binary < 1e-14,
        format!(
            "max orthonormality error {worst:.1e} over 20 distributions; binary case max relative error {worst_binary:.1e}"
        ),
        took,
    );
}

fn table_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism(r: &mut Report, scratch: &Path) {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quickstart.toml");
    let t = Instant::now();
    let mut outputs = Vec::new();
    for workers in ["1", "2"] {
        let out = scratch.join(format!("determinism_w{workers}"));
        let status = Command::new(env!("CARGO_BIN_EXE_cwiv"))
            .args(["simulate", "--workers", workers, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env_remove("CWIV_OUT")
            .output()
            .unwrap()
            .status;
        assert!(status.success(), "simulate failed with {status}");
        outputs.push(table_files(&out));
    }
    let took = t.elapsed();
    let same = outputs[0] == outputs[1] && !outputs[0].is_empty();
    r.line(
        11,
        "simulate output independent of worker count",
        same,
        format!("{} table files compared byte for byte (1 vs 2 workers)", outputs[0].len()),
        took,
    );
}

fn main() {
    let scratch = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&scratch);
    std::fs::create_dir_all(&scratch).unwrap();
    let mut r = Report { failures: 0 };
    complier_share(&mut r);
    equivalence(&mut r);
    oracle_gain(&mut r);

    let t = Instant::now();
    let run = run_experiment(&grid_config(), 0).unwrap();
    let took = t.elapsed();
    let summary = summarize(&run).unwrap();
    let grid_dir = scratch.join("full_grid");
    emit_tables(&summary, TableFormat::Csv, &grid_dir).unwrap();
    grid_criteria(&mut r, &summary, took);

    variance_calibration(&mut r);
    local_to_zero(&mut r);
    basis(&mut r);
    determinism(&mut r, &scratch);

    println!("full-grid tables: {}", grid_dir.display());
    if r.failures > 0 {
        println!("{} criteria failed", r.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
