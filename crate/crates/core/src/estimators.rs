//! IV point estimators, residualization, shrinkage weights and the robust
//! variance estimator.
//!
//! All estimators share the empirical covariance convention
//! `Covₙʷ(a, b) = Eₙʷ[(a − Eₙʷa)(b − Eₙʷb)]` with `Eₙʷ[∘] = Σwᵢ∘ᵢ / Σwᵢ`.
//! The weighted and interacted estimators coincide once `y` and `d` have been
//! passed through [`residualize`] with the same weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::moments::{check_weights, wcov_unchecked, wmean_unchecked};
use crate::mathcore::{std_normal_quantile, DenseMatrix, QrFactor};

/// Relative first-stage tolerance: the first stage is declared weak when
/// `|Covₙʷ(d, z)| ≤ FIRST_STAGE_TOLERANCE · sdₙʷ(d) · sdₙʷ(z)`.
pub const FIRST_STAGE_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_LEVEL: f64 = 0.95;

/// Outcome, treatment, binary instrument and optional controls (without an
/// intercept column).
#[derive(Clone, Debug, PartialEq)]
pub struct IvData {
    y: Vec<f64>,
    d: Vec<f64>,
    z: Vec<f64>,
    controls: Option<DenseMatrix>,
}

impl IvData {
    pub fn new(y: Vec<f64>, d: Vec<f64>, z: Vec<f64>, controls: Option<DenseMatrix>) -> Result<Self> {
        let n = y.len();
        if d.len() != n || z.len() != n {
            return Err(Error::dim(format!(
                "y, d, z have lengths {}, {}, {}",
                n,
                d.len(),
                z.len()
            )));
        }
        if n < 2 {
            return Err(Error::domain("need at least two observations"));
        }
        if let Some(c) = &controls {
            if c.rows() != n {
                return Err(Error::dim(format!(
                    "controls have {} rows, expected {n}",
                    c.rows()
                )));
            }
        }
        if let Some(i) = y.iter().chain(&d).position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite outcome or treatment at position {i}")));
        }
        if let Some(i) = z.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::DegenerateInstrument(format!(
                "instrument must be 0/1; observation {i} is {}",
                z[i]
            )));
        }
        let ones = z.iter().filter(|&&v| v == 1.0).count();
        if ones == 0 || ones == n {
            return Err(Error::DegenerateInstrument(
                "instrument takes only one value".into(),
            ));
        }
        Ok(Self { y, d, z, controls })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn controls(&self) -> Option<&DenseMatrix> {
        self.controls.as_ref()
    }
}

/// Where a weight vector came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Fixed ex ante (constant weights or user supplied).
    Fixed,
    Oracle,
    InSample,
    CrossFitted,
}

/// Nonnegative per-observation weights with a positive sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    values: Vec<f64>,
    pub provenance: Provenance,
    pub learner_id: String,
    /// 0-based fold of each observation when the weights were cross-fitted.
    pub fold_of: Option<Vec<usize>>,
}

impl WeightVector {
    pub fn new(values: Vec<f64>, provenance: Provenance, learner_id: impl Into<String>) -> Result<Self> {
        check_weights(&values)?;
        Ok(Self {
            values,
            provenance,
            learner_id: learner_id.into(),
            fold_of: None,
        })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n], Provenance::Fixed, "constant")
    }

    pub fn with_folds(mut self, fold_of: Vec<usize>) -> Result<Self> {
        if fold_of.len() != self.values.len() {
            return Err(Error::dim("fold map length differs from weight length"));
        }
        self.fold_of = Some(fold_of);
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|p| p[0] == p[1])
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Confidence level in `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(level: f64) -> Result<Self> {
        if level > 0.0 && level < 1.0 {
            Ok(Self(level))
        } else {
            Err(Error::domain(format!("confidence level must lie in (0,1), got {level}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Two-sided critical value `Φ⁻¹((1 + level)/2)`.
    pub fn critical_value(self) -> f64 {
        std_normal_quantile(0.5 * (1.0 + self.0)).expect("level validated at construction")
    }
}

impl Default for ConfidenceLevel {
    fn default() -> Self {
        Self(DEFAULT_LEVEL)
    }
}

impl TryFrom<f64> for ConfidenceLevel {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ConfidenceLevel> for f64 {
    fn from(l: ConfidenceLevel) -> f64 {
        l.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvEstimate {
    pub tau_hat: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub level: f64,
    /// Weighted first-stage covariance `Covₙʷ(d, z)` (or `Covₙ(d, h)` for the
    /// interacted estimator).
    pub first_stage: f64,
    /// Instrument mean `p̂`.
    pub p_hat: f64,
    pub n: usize,
}

/// `τ̂ ± Φ⁻¹((1+level)/2)·se`.
pub fn confidence_interval(tau_hat: f64, se: f64, level: ConfidenceLevel) -> (f64, f64) {
    let half = level.critical_value() * se;
    (tau_hat - half, tau_hat + half)
}

fn design_with_weights(n: usize, weight_columns: &[&[f64]], controls: Option<&DenseMatrix>) -> Result<DenseMatrix> {
    let k = controls.map_or(0, DenseMatrix::cols);
    let cols = 1 + weight_columns.len() + k;
    let mut data = Vec::with_capacity(n * cols);
    for i in 0..n {
        data.push(1.0);
        for w in weight_columns {
            data.push(w[i]);
        }
        if let Some(c) = controls {
            data.extend_from_slice(c.row(i));
        }
    }
    DenseMatrix::new(n, cols, data)
}

/// Factorization of `[1, w₁ … w_J, controls]`. Weight columns collinear with
/// what precedes them (constant weights, repeated weights) are dropped;
/// collinear controls are an error.
pub(crate) fn residualizer(
    n: usize,
    weight_columns: &[&[f64]],
    controls: Option<&DenseMatrix>,
) -> Result<QrFactor> {
    for w in weight_columns {
        if w.len() != n {
            return Err(Error::dim("weight length differs from data length"));
        }
    }
    let design = design_with_weights(n, weight_columns, controls)?;
    let droppable: Vec<usize> = (1..=weight_columns.len()).collect();
    QrFactor::with_droppable(&design, &droppable)
}

/// Replaces `y` and `d` by their OLS residuals on `[1, w, controls]`.
pub fn residualize(data: &IvData, w: &WeightVector) -> Result<IvData> {
    let qr = residualizer(data.n(), &[w.values()], data.controls())?;
    Ok(IvData {
        y: qr.residuals(&data.y)?,
        d: qr.residuals(&data.d)?,
        z: data.z.clone(),
        controls: data.controls.clone(),
    })
}

fn check_first_stage(first_stage: f64, sd_d: f64, sd_z: f64) -> Result<()> {
    let tolerance = FIRST_STAGE_TOLERANCE * sd_d * sd_z;
    if first_stage.abs() > tolerance && first_stage.is_finite() {
        Ok(())
    } else {
        Err(Error::WeakFirstStage {
            first_stage,
            tolerance,
        })
    }
}

fn check_len(data: &IvData, w: &WeightVector) -> Result<()> {
    if w.len() != data.n() {
        return Err(Error::dim(format!(
            "{} weights for {} observations",
            w.len(),
            data.n()
        )));
    }
    Ok(())
}

/// Weighted first stage `Covₙʷ(d, z)` with the weak-instrument guard applied.
fn weighted_first_stage(data: &IvData, w: &[f64], total: f64) -> Result<f64> {
    let fs = wcov_unchecked(&data.d, &data.z, w, total);
    let sd_d = wcov_unchecked(&data.d, &data.d, w, total).sqrt();
    let sd_z = wcov_unchecked(&data.z, &data.z, w, total).sqrt();
    check_first_stage(fs, sd_d, sd_z)?;
    Ok(fs)
}

/// Wald estimator `Covₙ(y, z) / Covₙ(d, z)` with a robust standard error.
pub fn wald_iv(data: &IvData, level: ConfidenceLevel) -> Result<IvEstimate> {
    let w = WeightVector::constant(data.n(), 1.0)?;
    weighted_iv(data, &w, level)
}

/// Fully weighted IV estimator `Covₙʷ(y, z) / Covₙʷ(d, z)`.
///
/// Expects `data` already residualized on `[1, w, controls]`.
pub fn weighted_iv(data: &IvData, w: &WeightVector, level: ConfidenceLevel) -> Result<IvEstimate> {
    check_len(data, w)?;
    let wv = w.values();
    let total = check_weights(wv)?;
    let first_stage = weighted_first_stage(data, wv, total)?;
    let tau_hat = wcov_unchecked(&data.y, &data.z, wv, total) / first_stage;
    let rv = robust_variance(data, w, tau_hat)?;
    Ok(IvEstimate {
        tau_hat,
        se: rv.se,
        ci: confidence_interval(tau_hat, rv.se, level),
        level: level.get(),
        first_stage,
        p_hat: crate::mathcore::mean(&data.z),
        n: data.n(),
    })
}

/// IV with the interacted instrument `h = (z − p̂)·w`, `p̂ = mean(z)`:
/// `Covₙ(y, h) / Covₙ(d, h)`.
pub fn interacted_iv(data: &IvData, w: &WeightVector, level: ConfidenceLevel) -> Result<IvEstimate> {
    check_len(data, w)?;
    check_weights(w.values())?;
    let n = data.n() as f64;
    let p_hat = crate::mathcore::mean(&data.z);
    let h: Vec<f64> = data
        .z
        .iter()
        .zip(w.values())
        .map(|(z, wi)| (z - p_hat) * wi)
        .collect();
    let cov = |a: &[f64]| crate::mathcore::cov(a, &h);
    let first_stage = cov(&data.d);
    let sd_d = crate::mathcore::cov(&data.d, &data.d).sqrt();
    let sd_h = crate::mathcore::cov(&h, &h).sqrt();
    check_first_stage(first_stage, sd_d, sd_h)?;
    let tau_hat = cov(&data.y) / first_stage;
    let rv = robust_variance(data, w, tau_hat)?;
    debug_assert!(n > 0.0);
    Ok(IvEstimate {
        tau_hat,
        se: rv.se,
        ci: confidence_interval(tau_hat, rv.se, level),
        level: level.get(),
        first_stage,
        p_hat,
        n: data.n(),
    })
}

/// The constant `mean(α̂²)/mean(α̂)` that shrinkage pulls weights toward.
pub fn shrinkage_level(alpha_hat: &[f64]) -> Result<f64> {
    let n = alpha_hat.len() as f64;
    let m1 = alpha_hat.iter().sum::<f64>() / n;
    if !(m1 != 0.0) {
        return Err(Error::domain("shrinkage needs mean(alpha_hat) != 0"));
    }
    let m2 = alpha_hat.iter().map(|v| v * v).sum::<f64>() / n;
    Ok(m2 / m1)
}

/// `w(x) = (1−λ)·mean(α̂²)/mean(α̂) + λ·α̂(x)`, clipped at zero.
pub fn shrinkage_weights(alpha_hat: &WeightVector, lambda: f64) -> Result<WeightVector> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("shrinkage lambda must lie in [0,1], got {lambda}")));
    }
    let a = alpha_hat.values();
    let level = shrinkage_level(a)?;
    let values = if lambda == 1.0 {
        a.to_vec()
    } else {
        a.iter()
            .map(|v| ((1.0 - lambda) * level + lambda * v).max(0.0))
            .collect()
    };
    let mut out = WeightVector::new(
        values,
        alpha_hat.provenance,
        format!("{}+shrink({lambda})", alpha_hat.learner_id),
    )?;
    out.fold_of = alpha_hat.fold_of.clone();
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobustVariance {
    /// Asymptotic variance `V̂` of `√n(τ̂ − τ)`.
    pub v_hat: f64,
    /// `√(V̂/n)`.
    pub se: f64,
}

/// Heteroscedasticity-robust variance of the weighted IV estimator.
///
/// ```text
/// V̂ = (Eₙ[ŵ²ε̂² | Z=1]/P̂(Z=1) + Eₙ[ŵ²ε̂² | Z=0]/P̂(Z=0)) · Varₙ(Z)²
///     ───────────────────────────────────────────────────────────────
///                     Eₙ[ŵ]² · Covₙʷ(Z, D)²
/// ```
///
/// `ε̂` are residuals of `y − τ̂·d` on `[1, ŵ, controls]`; `P̂(Z=·)` and
/// `Varₙ(Z) = P̂(1−P̂)` are ŵ-weighted. The `Eₙ[ŵ]²` normalization makes
/// `V̂` consistent for `E[w²σ²] / (p(1−p) E[αw]²)`; with constant weights it
/// is the classical HC0 IV sandwich.
pub fn robust_variance(data: &IvData, w: &WeightVector, tau_hat: f64) -> Result<RobustVariance> {
    check_len(data, w)?;
    let wv = w.values();
    let total = check_weights(wv)?;
    let n = data.n();
    let qr = residualizer(n, &[wv], data.controls())?;
    let e: Vec<f64> = data
        .y
        .iter()
        .zip(&data.d)
        .map(|(y, d)| y - tau_hat * d)
        .collect();
    let eps = qr.residuals(&e)?;

    let (mut s1, mut s0, mut n1, mut n0) = (0.0, 0.0, 0usize, 0usize);
    for i in 0..n {
        let v = wv[i] * wv[i] * eps[i] * eps[i];
        if data.z[i] == 1.0 {
            s1 += v;
            n1 += 1;
        } else {
            s0 += v;
            n0 += 1;
        }
    }
    let p1 = wmean_unchecked(&data.z, wv, total);
    if n1 == 0 || n0 == 0 || p1 <= 0.0 || p1 >= 1.0 {
        return Err(Error::DegenerateInstrument(
            "an instrument arm is empty or carries zero weight".into(),
        ));
    }
    let fs = weighted_first_stage(data, wv, total)?;
    let mean_w = total / n as f64;
    let var_z = p1 * (1.0 - p1);
    let m1 = s1 / n1 as f64;
    let m0 = s0 / n0 as f64;
    let v_hat = (m1 / p1 + m0 / (1.0 - p1)) * var_z * var_z / (mean_w * mean_w * fs * fs);
    Ok(RobustVariance {
        v_hat,
        se: (v_hat / n as f64).sqrt(),
    })
}

/// Residualize on the weights, then run [`weighted_iv`].
pub fn estimate_weighted(data: &IvData, w: &WeightVector, level: ConfidenceLevel) -> Result<IvEstimate> {
    let r = residualize(data, w)?;
    weighted_iv(&r, w, level)
}

/// Unweighted IV after residualizing on the controls only.
pub fn estimate_unweighted(data: &IvData, level: ConfidenceLevel) -> Result<IvEstimate> {
    let w = WeightVector::constant(data.n(), 1.0)?;
    let r = residualize(data, &w)?;
    wald_iv(&r, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::{cov, RngStream};
    use proptest::prelude::*;
    use rand::Rng;

    fn level() -> ConfidenceLevel {
        ConfidenceLevel::default()
    }

    fn random_data(seed: u64, n: usize) -> (IvData, Vec<f64>) {
        let mut g = RngStream::new(seed).generator();
        let mut y = Vec::new();
        let mut d = Vec::new();
        let mut z = Vec::new();
        let mut w = Vec::new();
        for i in 0..n {
            let zi = if i % 2 == 0 { 1.0 } else { 0.0 };
            let u: f64 = g.random::<f64>();
            let di = if u < 0.2 + 0.5 * zi { 1.0 } else { 0.0 };
            y.push(1.5 * di + g.random::<f64>() - 0.5 + u);
            d.push(di);
            z.push(zi);
            w.push(g.random::<f64>() * 2.0);
        }
        (IvData::new(y, d, z, None).unwrap(), w)
    }

    #[test]
    fn full_compliance_identity() {
        let z = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let data = IvData::new(z.clone(), z.clone(), z, None).unwrap();
        let est = wald_iv(&data, level()).unwrap();
        assert!((est.tau_hat - 1.0).abs() < 1e-15);
        assert_eq!(est.se, 0.0);
        assert_eq!(est.ci, (est.tau_hat, est.tau_hat));
    }

    #[test]
    fn exact_linear_model() {
        let z = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let d = vec![0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let y: Vec<f64> = d.iter().map(|v| 3.0 + 2.0 * v).collect();
        let est = wald_iv(&IvData::new(y, d, z, None).unwrap(), level()).unwrap();
        assert!((est.tau_hat - 2.0).abs() < 1e-14);
        assert!(est.se.abs() < 1e-12);
    }

    #[test]
    fn eight_observation_hand_table() {
        // one never-taker in the z=1 arm (observation 3)
        let z = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let d = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let y = [3.0, 2.5, 4.0, 1.0, 1.5, 0.5, 1.0, 2.0];
        // Cov(y,z) = (mean y|z=1 − mean y|z=0)·p(1−p) = (2.625 − 1.25)·0.25
        // Cov(d,z) = (0.75 − 0)·0.25
        let expected = (2.625 - 1.25) / 0.75;
        let est = wald_iv(&IvData::new(y.to_vec(), d.to_vec(), z.to_vec(), None).unwrap(), level()).unwrap();
        assert!((est.tau_hat - expected).abs() < 1e-14);
        assert!((est.first_stage - 0.75 * 0.25).abs() < 1e-15);
        assert_eq!(est.p_hat, 0.5);
    }

    #[test]
    fn zero_first_stage_is_weak() {
        let z = vec![0.0, 1.0, 0.0, 1.0];
        let d = vec![1.0, 1.0, 0.0, 0.0];
        let y = vec![1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            wald_iv(&IvData::new(y, d, z, None).unwrap(), level()),
            Err(Error::WeakFirstStage { .. })
        ));
    }

    #[test]
    fn data_validation() {
        assert!(matches!(
            IvData::new(vec![1.0, 2.0], vec![0.0, 1.0], vec![1.0, 1.0], None),
            Err(Error::DegenerateInstrument(_))
        ));
        assert!(IvData::new(vec![1.0, 2.0], vec![0.0, 1.0], vec![0.0, 0.5], None).is_err());
        assert!(IvData::new(vec![1.0], vec![0.0, 1.0], vec![0.0, 1.0], None).is_err());
    }

    #[test]
    fn residualize_constant_weights_demeans() {
        let (data, _) = random_data(1, 40);
        let r = residualize(&data, &WeightVector::constant(40, 0.7).unwrap()).unwrap();
        let my = crate::mathcore::mean(data.y());
        let md = crate::mathcore::mean(data.d());
        for i in 0..40 {
            assert!((r.y()[i] - (data.y()[i] - my)).abs() < 1e-12);
            assert!((r.d()[i] - (data.d()[i] - md)).abs() < 1e-12);
        }
        assert_eq!(r.z(), data.z());
    }

    #[test]
    fn residualize_removes_linear_weight_signal() {
        let (data, w) = random_data(2, 30);
        let y: Vec<f64> = w.iter().map(|v| 1.0 - 3.0 * v).collect();
        let data = IvData::new(y, data.d().to_vec(), data.z().to_vec(), None).unwrap();
        let wv = WeightVector::new(w, Provenance::Fixed, "t").unwrap();
        let r = residualize(&data, &wv).unwrap();
        assert!(r.y().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn residualize_six_point_normal_equations() {
        let y = [1.0, 3.0, 2.0, 5.0, 4.0, 7.0];
        let d = [0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let z = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let w = [0.5, 1.0, 0.0, 2.0, 1.5, 0.25];
        let data = IvData::new(y.to_vec(), d.to_vec(), z.to_vec(), None).unwrap();
        let wv = WeightVector::new(w.to_vec(), Provenance::Fixed, "t").unwrap();
        let r = residualize(&data, &wv).unwrap();
        // hand solve of [n Σw; Σw Σw²] β = [Σy; Σwy]
        let n = 6.0;
        let sw: f64 = w.iter().sum();
        let sww: f64 = w.iter().map(|v| v * v).sum();
        for (orig, res) in [(&y, r.y()), (&d, r.d())] {
            let sy: f64 = orig.iter().sum();
            let swy: f64 = orig.iter().zip(&w).map(|(a, b)| a * b).sum();
            let det = n * sww - sw * sw;
            let b0 = (sww * sy - sw * swy) / det;
            let b1 = (n * swy - sw * sy) / det;
            for i in 0..6 {
                assert!((res[i] - (orig[i] - b0 - b1 * w[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn collinear_controls_error() {
        let (data, w) = random_data(3, 20);
        let c = DenseMatrix::from_columns(&[&w, &w]).unwrap();
        let data = IvData::new(data.y().to_vec(), data.d().to_vec(), data.z().to_vec(), Some(c)).unwrap();
        let wv = WeightVector::constant(20, 1.0).unwrap();
        assert!(matches!(residualize(&data, &wv), Err(Error::RankDeficient { column: 3 })));
    }

    #[test]
    fn weighted_reduces_to_wald_for_constant_weights() {
        let (data, _) = random_data(4, 200);
        let wv = WeightVector::constant(200, 3.0).unwrap();
        let r = residualize(&data, &wv).unwrap();
        let a = weighted_iv(&r, &wv, level()).unwrap();
        let b = wald_iv(&r, level()).unwrap();
        assert!((a.tau_hat - b.tau_hat).abs() < 1e-13 * b.tau_hat.abs().max(1.0));
        assert!((a.se - b.se).abs() < 1e-12 * b.se);
    }

    #[test]
    fn weighted_subsample_support() {
        let (data, _) = random_data(5, 60);
        let w: Vec<f64> = (0..60).map(|i| if i < 30 { 1.0 } else { 0.0 }).collect();
        let wv = WeightVector::new(w, Provenance::Fixed, "t").unwrap();
        let full = weighted_iv(&data, &wv, level()).unwrap();
        let sub = IvData::new(
            data.y()[..30].to_vec(),
            data.d()[..30].to_vec(),
            data.z()[..30].to_vec(),
            None,
        )
        .unwrap();
        let w2 = wald_iv(&sub, level()).unwrap();
        assert!((full.tau_hat - w2.tau_hat).abs() < 1e-12);
    }

    #[test]
    fn interacted_equals_weighted_after_residualization() {
        for seed in 0..20 {
            let (data, w) = random_data(100 + seed, 150);
            let wv = WeightVector::new(w, Provenance::Fixed, "t").unwrap();
            let r = residualize(&data, &wv).unwrap();
            let a = interacted_iv(&r, &wv, level()).unwrap();
            let b = weighted_iv(&r, &wv, level()).unwrap();
            assert!((a.tau_hat - b.tau_hat).abs() <= 1e-10 * b.tau_hat.abs().max(1e-300));
        }
    }

    #[test]
    fn interacted_constant_weights_is_wald() {
        let (data, _) = random_data(6, 100);
        let wv = WeightVector::constant(100, 0.4).unwrap();
        let a = interacted_iv(&data, &wv, level()).unwrap();
        let b = wald_iv(&data, level()).unwrap();
        assert!((a.tau_hat - b.tau_hat).abs() < 1e-12 * b.tau_hat.abs().max(1.0));
    }

    #[test]
    fn shrinkage_examples() {
        let a = WeightVector::new(vec![0.2, 0.4], Provenance::InSample, "a").unwrap();
        assert_eq!(shrinkage_weights(&a, 1.0).unwrap().values(), a.values());
        let zero = shrinkage_weights(&a, 0.0).unwrap();
        // mean(α²)/mean(α) = 0.1/0.3
        for v in zero.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let half = shrinkage_weights(&a, 0.5).unwrap();
        // 0.5·(1/3) + 0.5·α
        assert!((half.values()[0] - 4.0 / 15.0).abs() < 1e-15);
        assert!((half.values()[1] - 11.0 / 30.0).abs() < 1e-15);
        assert!(shrinkage_weights(&a, 1.5).is_err());
    }

    #[test]
    fn robust_variance_constant_weights_is_hc0_sandwich() {
        let (data, _) = random_data(7, 300);
        let wv = WeightVector::constant(300, 1.0).unwrap();
        let est = wald_iv(&data, level()).unwrap();
        let rv = robust_variance(&data, &wv, est.tau_hat).unwrap();
        // textbook: n Σ(z−z̄)²ε² / (Σ(z−z̄)(d−d̄))²
        let n = 300.0;
        let zb = crate::mathcore::mean(data.z());
        let e: Vec<f64> = data.y().iter().zip(data.d()).map(|(y, d)| y - est.tau_hat * d).collect();
        let eb = crate::mathcore::mean(&e);
        let num: f64 = data.z().iter().zip(&e).map(|(z, e)| (z - zb).powi(2) * (e - eb).powi(2)).sum();
        let den = n * cov(data.d(), data.z());
        let v = n * num / (den * den);
        assert!((rv.v_hat - v).abs() < 1e-10 * v);
        assert!((rv.se - (v / n).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn robust_variance_exact_model_is_zero() {
        let z = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let d = vec![0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let y: Vec<f64> = d.iter().map(|v| 1.0 - 0.5 * v).collect();
        let data = IvData::new(y, d, z, None).unwrap();
        let wv = WeightVector::new(vec![1.0, 2.0, 0.5, 1.0, 3.0, 1.0, 0.2, 1.0], Provenance::Fixed, "t").unwrap();
        let r = residualize(&data, &wv).unwrap();
        let est = weighted_iv(&r, &wv, level()).unwrap();
        assert!(est.se.abs() < 1e-12);
    }

    #[test]
    fn robust_variance_empty_arm() {
        let (data, _) = random_data(8, 10);
        // all weight on z = 1 observations
        let w: Vec<f64> = data.z().to_vec();
        let wv = WeightVector::new(w, Provenance::Fixed, "t").unwrap();
        assert!(robust_variance(&data, &wv, 0.0).is_err());
    }

    #[test]
    fn ci_examples() {
        let (lo, hi) = confidence_interval(0.0, 1.0, level());
        assert!((hi - 1.959964).abs() < 1e-5 && (lo + 1.959964).abs() < 1e-5);
        assert_eq!(confidence_interval(0.3, 0.0, level()), (0.3, 0.3));
        let narrow = confidence_interval(0.0, 1.0, ConfidenceLevel::new(0.9).unwrap());
        let wide = confidence_interval(0.0, 1.0, ConfidenceLevel::new(0.99).unwrap());
        assert!(wide.1 - wide.0 > narrow.1 - narrow.0);
        assert!(ConfidenceLevel::new(1.0).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariance(seed in 0u64..500, c in 0.01f64..100.0) {
            let (data, w) = random_data(seed, 80);
            let w1 = WeightVector::new(w.clone(), Provenance::Fixed, "t").unwrap();
            let w2 = WeightVector::new(w.iter().map(|v| c * v).collect(), Provenance::Fixed, "t").unwrap();
            let r1 = residualize(&data, &w1).unwrap();
            let r2 = residualize(&data, &w2).unwrap();
            let a = weighted_iv(&r1, &w1, level()).unwrap();
            let b = weighted_iv(&r2, &w2, level()).unwrap();
            prop_assert!((a.tau_hat - b.tau_hat).abs() <= 1e-12 * a.tau_hat.abs().max(1.0));
            let ia = interacted_iv(&r1, &w1, level()).unwrap();
            let ib = interacted_iv(&r2, &w2, level()).unwrap();
            prop_assert!((ia.tau_hat - ib.tau_hat).abs() <= 1e-12 * ia.tau_hat.abs().max(1.0));
            let va = robust_variance(&r1, &w1, a.tau_hat).unwrap().v_hat;
            let vb = robust_variance(&r2, &w2, a.tau_hat).unwrap().v_hat;
            prop_assert!((va - vb).abs() <= 1e-12 * va);
        }
    }
}
