//! Simulation designs with a latent selection index, a noisy proxy covariate
//! and closed-form conditional compliance and treatment effects.
//!
//! Latents `(δ, ε, τ)` are jointly normal; `X = δ + η` is the observed
//! covariate. Potential treatments are thresholds on `δ`:
//! `D(1) = 1{δ > Φ⁻¹(S_NT)}`, `D(0) = 1{δ > Φ⁻¹(1 − S_AT)}`, so the
//! always-taker, complier and never-taker shares are `S_AT`, `1 − S_AT − S_NT`
//! and `S_NT`. Outcomes are `Y = Dτ + (1 + ζδ)ε`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::{
    cholesky, integrate, std_normal_cdf, std_normal_pdf, std_normal_quantile, DenseMatrix, MvnFactor,
    RngStream,
};
use crate::weights::{clip_value, FittedWeightModel};

/// Half-width of the quadrature range in units of `sd(X)`.
const QUAD_SDS: f64 = 10.0;
const QUAD_TOL: f64 = 1e-11;

pub const MIN_ORACLE_DRAWS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    /// Corr(δ, ε): strength of selection on gains-free unobservables.
    pub rho_de: f64,
    /// Corr(δ, τ).
    pub rho_dt: f64,
    /// Corr(τ, ε).
    pub rho_te: f64,
    /// Standard deviation of τ; zero makes τ deterministic.
    pub sigma_tau: f64,
    pub tau_mean: f64,
    /// Additional effect heterogeneity `τ += tau_slope · X`.
    pub tau_slope: f64,
    pub zeta: f64,
    pub sigma_eta: f64,
    pub s_at: f64,
    pub s_nt: f64,
    pub p_z: f64,
    pub n: usize,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            rho_de: 0.5,
            rho_dt: 0.0,
            rho_te: 0.0,
            sigma_tau: 0.0,
            tau_mean: 0.0,
            tau_slope: 0.0,
            zeta: 0.0,
            sigma_eta: 1.0,
            s_at: 0.05,
            s_nt: 0.70,
            p_z: 0.5,
            n: 1000,
        }
    }
}

impl DgpConfig {
    /// Built-in designs 1–4:
    /// 1 constant effect; 2 effects correlated with δ; 3 and 4 heteroscedastic
    /// errors with `ζ = ±0.25`.
    pub fn preset(id: u8, sigma_eta: f64) -> Result<Self> {
        let base = Self {
            sigma_eta,
            ..Self::default()
        };
        let cfg = match id {
            1 => base,
            2 => Self {
                rho_dt: 0.5,
                sigma_tau: 0.5,
                ..base
            },
            3 => Self { zeta: 0.25, ..base },
            4 => Self { zeta: -0.25, ..base },
            _ => return Err(Error::Config(format!("unknown design id {id}; expected 1-4"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("rho_de", self.rho_de),
            ("rho_dt", self.rho_dt),
            ("rho_te", self.rho_te),
            ("sigma_tau", self.sigma_tau),
            ("tau_mean", self.tau_mean),
            ("tau_slope", self.tau_slope),
            ("zeta", self.zeta),
            ("sigma_eta", self.sigma_eta),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [("rho_de", self.rho_de), ("rho_dt", self.rho_dt), ("rho_te", self.rho_te)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [-1, 1], got {v}")));
            }
        }
        if self.sigma_tau < 0.0 {
            return Err(Error::Config("sigma_tau must be nonnegative".into()));
        }
        if !(self.sigma_eta > 0.0) {
            return Err(Error::Config("sigma_eta must be positive".into()));
        }
        for (name, v) in [("s_at", self.s_at), ("s_nt", self.s_nt), ("p_z", self.p_z)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.s_at + self.s_nt >= 1.0 {
            return Err(Error::Config(format!(
                "s_at + s_nt = {} leaves no compliers",
                self.s_at + self.s_nt
            )));
        }
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        build_sigma(self).map(|_| ())
    }

    /// `(Φ⁻¹(S_NT), Φ⁻¹(1 − S_AT))`: compliers have δ in this interval.
    pub fn thresholds(&self) -> (f64, f64) {
        (
            std_normal_quantile(self.s_nt).expect("validated share"),
            std_normal_quantile(1.0 - self.s_at).expect("validated share"),
        )
    }

    pub fn complier_share(&self) -> f64 {
        1.0 - self.s_at - self.s_nt
    }

    /// Standard deviation of `X = δ + η`.
    pub fn sd_x(&self) -> f64 {
        (1.0 + self.sigma_eta * self.sigma_eta).sqrt()
    }

    /// Mean and standard deviation of `δ | X = x`.
    fn posterior(&self, x: f64) -> (f64, f64) {
        let v = 1.0 + self.sigma_eta * self.sigma_eta;
        (x / v, self.sigma_eta / v.sqrt())
    }
}

/// Covariance of `(δ, ε, τ)`.
pub fn build_sigma(cfg: &DgpConfig) -> Result<DenseMatrix> {
    let st = cfg.sigma_tau;
    let s = DenseMatrix::from_rows(&[
        vec![1.0, cfg.rho_de, cfg.rho_dt * st],
        vec![cfg.rho_de, 1.0, cfg.rho_te * st],
        vec![cfg.rho_dt * st, cfg.rho_te * st, st * st],
    ])?;
    match cholesky(&s) {
        Ok(_) => Ok(s),
        Err(Error::NotPositiveSemidefinite { .. }) => Err(Error::Config(format!(
            "correlations rho_de = {}, rho_dt = {}, rho_te = {} give an indefinite covariance",
            cfg.rho_de, cfg.rho_dt, cfg.rho_te
        ))),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub d: Vec<f64>,
    pub y: Vec<f64>,
    pub delta: Vec<f64>,
    pub tau: Vec<f64>,
    pub eta: Vec<f64>,
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
}

impl SimSample {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_matrix(&self) -> DenseMatrix {
        DenseMatrix::column_vector(self.x.clone())
    }

    pub fn iv_data(&self) -> Result<crate::estimators::IvData> {
        crate::estimators::IvData::new(self.y.clone(), self.d.clone(), self.z.clone(), None)
    }
}

/// Draws `cfg.n` observations. Per observation the generator is consumed in a
/// fixed order: three normals for `(δ, ε, τ)`, one for `η`, one uniform for `z`.
pub fn draw_sample(cfg: &DgpConfig, stream: &RngStream) -> Result<SimSample> {
    cfg.validate()?;
    let sigma = build_sigma(cfg)?;
    let factor = MvnFactor::new(&[0.0, 0.0, cfg.tau_mean], &sigma)?;
    let (lo, hi) = cfg.thresholds();
    let n = cfg.n;
    let mut rng = stream.generator();
    let mut s = SimSample {
        x: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        delta: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
        eta: Vec::with_capacity(n),
        d0: Vec::with_capacity(n),
        d1: Vec::with_capacity(n),
    };
    let mut latent = [0.0; 3];
    for _ in 0..n {
        factor.draw_into(&mut rng, &mut latent);
        let [delta, eps, tau0] = latent;
        let eta = cfg.sigma_eta * rng.sample::<f64, _>(StandardNormal);
        let z = if rng.random::<f64>() < cfg.p_z { 1.0 } else { 0.0 };
        let x = delta + eta;
        let tau = tau0 + cfg.tau_slope * x;
        let d1 = if delta > lo { 1.0 } else { 0.0 };
        let d0 = if delta > hi { 1.0 } else { 0.0 };
        let d = if z == 1.0 { d1 } else { d0 };
        s.x.push(x);
        s.z.push(z);
        s.d.push(d);
        s.y.push(d * tau + (1.0 + cfg.zeta * delta) * eps);
        s.delta.push(delta);
        s.tau.push(tau);
        s.eta.push(eta);
        s.d0.push(d0);
        s.d1.push(d1);
    }
    Ok(s)
}

/// `E[τ | X = x] = ρ_δτ σ_τ x / (1 + σ_η²) + tau_mean + tau_slope·x`.
///
/// This is the effect averaged over everyone with `X = x`; the complier
/// conditional effect is [`oracle_complier_tau_of_x`].
pub fn oracle_tau_of_x(x: f64, cfg: &DgpConfig) -> f64 {
    let v = 1.0 + cfg.sigma_eta * cfg.sigma_eta;
    cfg.rho_dt * cfg.sigma_tau * x / v + cfg.tau_mean + cfg.tau_slope * x
}

/// `α(x) = P(D(1) > D(0) | X = x) = P(Φ⁻¹(S_NT) < δ ≤ Φ⁻¹(1−S_AT) | X = x)`.
pub fn oracle_alpha_of_x(x: f64, cfg: &DgpConfig) -> f64 {
    let (lo, hi) = cfg.thresholds();
    alpha_with(x, cfg, lo, hi)
}

pub(crate) fn alpha_with(x: f64, cfg: &DgpConfig, lo: f64, hi: f64) -> f64 {
    let (m, s) = cfg.posterior(x);
    let a = (lo - m) / s;
    let b = (hi - m) / s;
    // both arguments on the same side: subtract upper tails to keep precision
    let p = if a > 0.0 {
        std_normal_cdf(-a) - std_normal_cdf(-b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    };
    p.clamp(0.0, 1.0)
}

/// Complier conditional effect
/// `E[τ | D(1) > D(0), X = x] = tau_mean + tau_slope·x + ρ_δτ σ_τ E[δ | lo < δ ≤ hi, X = x]`.
pub fn oracle_complier_tau_of_x(x: f64, cfg: &DgpConfig) -> f64 {
    let (lo, hi) = cfg.thresholds();
    complier_tau_with(x, cfg, lo, hi)
}

fn complier_tau_with(x: f64, cfg: &DgpConfig, lo: f64, hi: f64) -> f64 {
    let base = cfg.tau_mean + cfg.tau_slope * x;
    let slope = cfg.rho_dt * cfg.sigma_tau;
    if slope == 0.0 {
        return base;
    }
    base + slope * truncated_normal_mean(cfg.posterior(x), lo, hi)
}

/// Mean of `N(m, s²)` truncated to `(lo, hi]`.
fn truncated_normal_mean((m, s): (f64, f64), lo: f64, hi: f64) -> f64 {
    let a = (lo - m) / s;
    let b = (hi - m) / s;
    let mass = if a > 0.0 {
        std_normal_cdf(-a) - std_normal_cdf(-b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    };
    let v = m + s * (std_normal_pdf(a) - std_normal_pdf(b)) / mass;
    if mass < 1e-14 || !v.is_finite() {
        // far in a tail the truncated mass piles up at the nearer endpoint
        if m < lo {
            lo
        } else {
            hi
        }
    } else {
        v.clamp(lo, hi)
    }
}

/// A weight function for population estimands.
pub enum WeightKind<'a> {
    Unit,
    OracleAlpha,
    Custom(&'a (dyn Fn(f64) -> f64 + Sync)),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimandMethod {
    Quadrature,
    OracleMc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimands {
    /// `E[α τ] / E[α]`.
    pub late: f64,
    /// `E[α w τ] / E[α w]`.
    pub weighted_late: f64,
    /// `E[α(X)]`.
    pub complier_share: f64,
    pub method: EstimandMethod,
}

fn x_density(x: f64, sd: f64) -> f64 {
    std_normal_pdf(x / sd) / sd
}

/// `∫ f(x) φ_X(x) dx` over `±10 sd(X)`.
pub fn integrate_over_x<F: Fn(f64) -> f64>(cfg: &DgpConfig, f: F) -> Result<f64> {
    let sd = cfg.sd_x();
    integrate(|x| f(x) * x_density(x, sd), -QUAD_SDS * sd, QUAD_SDS * sd, QUAD_TOL)
}

pub fn population_estimands(cfg: &DgpConfig, weight: WeightKind<'_>) -> Result<PopulationEstimands> {
    cfg.validate()?;
    let (lo, hi) = cfg.thresholds();
    let alpha = |x: f64| alpha_with(x, cfg, lo, hi);
    let tau = |x: f64| complier_tau_with(x, cfg, lo, hi);
    let w = |x: f64| match &weight {
        WeightKind::Unit => 1.0,
        WeightKind::OracleAlpha => alpha(x),
        WeightKind::Custom(f) => f(x),
    };
    let share = integrate_over_x(cfg, alpha)?;
    let late = integrate_over_x(cfg, |x| alpha(x) * tau(x))? / share;
    let den = integrate_over_x(cfg, |x| alpha(x) * w(x))?;
    if !(den > 0.0) {
        return Err(Error::DegenerateWeights(
            "weight function has zero mass on compliers".into(),
        ));
    }
    let weighted_late = integrate_over_x(cfg, |x| alpha(x) * w(x) * tau(x))? / den;
    Ok(PopulationEstimands {
        late,
        weighted_late,
        complier_share: share,
        method: EstimandMethod::Quadrature,
    })
}

/// Monte Carlo estimate with standard errors, for cross-checking quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimands {
    pub estimands: PopulationEstimands,
    pub late_se: f64,
    pub weighted_late_se: f64,
    pub complier_share_se: f64,
}

/// Population estimands from `draws` latent draws: compliers are identified
/// from `δ` directly and their realized `τ` averaged, so this route shares no
/// closed-form conditional expectations with [`population_estimands`].
pub fn population_estimands_mc(
    cfg: &DgpConfig,
    weight: WeightKind<'_>,
    draws: usize,
    stream: &RngStream,
) -> Result<McEstimands> {
    let mut c = cfg.clone();
    c.n = draws.max(2);
    let s = draw_sample(&c, stream)?;
    let n = s.len() as f64;
    let (lo, hi) = cfg.thresholds();
    let w = |x: f64| match &weight {
        WeightKind::Unit => 1.0,
        WeightKind::OracleAlpha => alpha_with(x, cfg, lo, hi),
        WeightKind::Custom(f) => f(x),
    };
    // ratio estimators with delta-method standard errors
    let (mut c_sum, mut ct, mut ct2) = (0.0, 0.0, 0.0);
    let (mut cw, mut cwt, mut cw2, mut cw2t, mut cw2t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..s.len() {
        if s.d1[i] > s.d0[i] {
            let t = s.tau[i];
            let wi = w(s.x[i]);
            c_sum += 1.0;
            ct += t;
            ct2 += t * t;
            cw += wi;
            cwt += wi * t;
            cw2 += wi * wi;
            cw2t += wi * wi * t;
            cw2t2 += wi * wi * t * t;
        }
    }
    if c_sum < 2.0 || cw <= 0.0 {
        return Err(Error::Insufficient("too few compliers in the oracle draw".into()));
    }
    let share = c_sum / n;
    let late = ct / c_sum;
    let late_se = ((ct2 / c_sum - late * late) / c_sum).sqrt();
    let wl = cwt / cw;
    // Var of Σw(τ − wl) / Σw
    let resid2 = cw2t2 - 2.0 * wl * cw2t + wl * wl * cw2;
    let wl_se = resid2.max(0.0).sqrt() / cw;
    Ok(McEstimands {
        estimands: PopulationEstimands {
            late,
            weighted_late: wl,
            complier_share: share,
            method: EstimandMethod::OracleMc,
        },
        late_se,
        weighted_late_se: wl_se,
        complier_share_se: (share * (1.0 - share) / n).sqrt(),
    })
}

/// A fixed draw of `X` with prefix sums of `α` and `α·τ` along sorted `x`,
/// used to evaluate cross-fitted estimands for many fitted models.
#[derive(Clone, Debug)]
pub struct OracleDraw {
    x: Vec<f64>,
    alpha: Vec<f64>,
    alpha_tau: Vec<f64>,
    /// `cum_alpha[i] = Σ_{k<i} α(x_k)`.
    cum_alpha: Vec<f64>,
    cum_alpha_tau: Vec<f64>,
}

impl OracleDraw {
    pub fn new(cfg: &DgpConfig, draws: usize, stream: &RngStream) -> Result<Self> {
        cfg.validate()?;
        if draws < MIN_ORACLE_DRAWS {
            return Err(Error::domain(format!(
                "oracle draw needs at least {MIN_ORACLE_DRAWS} points, got {draws}"
            )));
        }
        let sd = cfg.sd_x();
        let mut rng = stream.generator();
        let mut x: Vec<f64> = (0..draws)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        x.sort_by(f64::total_cmp);
        let (lo, hi) = cfg.thresholds();
        let alpha: Vec<f64> = x.iter().map(|&v| alpha_with(v, cfg, lo, hi)).collect();
        let alpha_tau: Vec<f64> = x
            .iter()
            .zip(&alpha)
            .map(|(&v, a)| a * complier_tau_with(v, cfg, lo, hi))
            .collect();
        let prefix = |v: &[f64]| {
            let mut out = Vec::with_capacity(v.len() + 1);
            let mut acc = 0.0;
            out.push(0.0);
            for a in v {
                acc += a;
                out.push(acc);
            }
            out
        };
        Ok(Self {
            cum_alpha: prefix(&alpha),
            cum_alpha_tau: prefix(&alpha_tau),
            x,
            alpha,
            alpha_tau,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(Σ α ŵ τ, Σ α ŵ)` over the draw with `ŵ = max(model(x), 0)`.
    pub fn moments(&self, model: &dyn FittedWeightModel) -> Result<(f64, f64)> {
        if let Some(step) = model.step_function() {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut start = 0;
            for (k, &value) in step.values().iter().enumerate() {
                let end = match step.breakpoints().get(k) {
                    Some(&bp) => start + self.x[start..].partition_point(|&v| v <= bp),
                    None => self.x.len(),
                };
                let w = clip_value(value);
                if w > 0.0 && end > start {
                    num += w * (self.cum_alpha_tau[end] - self.cum_alpha_tau[start]);
                    den += w * (self.cum_alpha[end] - self.cum_alpha[start]);
                }
                start = end;
            }
            return Ok((num, den));
        }
        let w = model.predict(&DenseMatrix::column_vector(self.x.clone()))?;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.x.len() {
            let wi = clip_value(w[i]);
            num += wi * self.alpha_tau[i];
            den += wi * self.alpha[i];
        }
        Ok((num, den))
    }
}

/// Cross-fitted hybrid estimand
/// `Σⱼ E[α ŵ₋ⱼ τ] / Σⱼ E[α ŵ₋ⱼ]` evaluated on `draw`.
pub fn cf_estimand(models: &[&dyn FittedWeightModel], draw: &OracleDraw) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::domain("cf_estimand needs at least one fitted model"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for m in models {
        let (a, b) = draw.moments(*m)?;
        num += a;
        den += b;
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateWeights(
            "fitted weights vanish on the complier population".into(),
        ));
    }
    Ok(num / den)
}

/// In-sample analog `Σ α(Xᵢ) ŵᵢ τ(Xᵢ) / Σ α(Xᵢ) ŵᵢ` with closed-form `α`, `τ`.
pub fn empirical_weighted_estimand(x: &[f64], w: &[f64], cfg: &DgpConfig) -> Result<f64> {
    if x.len() != w.len() {
        return Err(Error::dim("x and weights differ in length"));
    }
    let (lo, hi) = cfg.thresholds();
    let mut num = 0.0;
    let mut den = 0.0;
    for (&xi, &wi) in x.iter().zip(w) {
        let a = alpha_with(xi, cfg, lo, hi) * wi;
        num += a * complier_tau_with(xi, cfg, lo, hi);
        den += a;
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateWeights(
            "weights vanish on the complier population".into(),
        ));
    }
    Ok(num / den)
}
