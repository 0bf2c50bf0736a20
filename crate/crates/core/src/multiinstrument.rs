//! Weighted IV with a finitely supported instrument.
//!
//! For `Z` with support `z₀ < … < z_J` the instrument is replaced by `J`
//! functions `g_j(Z)` that are centred and orthonormal under the distribution
//! of `Z`, and the estimator pools the per-function weighted IV ratios:
//! `τ̂ = Σⱼ Covₙ^{wⱼ}(Y, gⱼ) / Σⱼ Covₙ^{wⱼ}(D, gⱼ)`. Treatment may be
//! continuous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{residualizer, WeightVector, FIRST_STAGE_TOLERANCE};
use crate::mathcore::moments::{check_weights, wcov_unchecked};
use crate::mathcore::DenseMatrix;

/// Probabilities must sum to one within this tolerance.
const PROB_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteSupportInstrument {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl FiniteSupportInstrument {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::dim("support and probabilities differ in length"));
        }
        if support.len() < 2 {
            return Err(Error::domain("instrument support needs at least two points"));
        }
        if support.iter().any(|v| !v.is_finite()) || support.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("support must be finite and strictly increasing"));
        }
        if let Some(k) = probs.iter().position(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::domain(format!(
                "probability of support point {} is {}; all must be positive",
                support[k], probs[k]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { support, probs })
    }

    /// Empirical distribution of `z`.
    pub fn from_sample(z: &[f64]) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("instrument values must be finite"));
        }
        let mut sorted = z.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut support = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for v in sorted {
            if support.last() == Some(&v) {
                *counts.last_mut().expect("nonempty") += 1;
            } else {
                support.push(v);
                counts.push(1);
            }
        }
        let n = z.len() as f64;
        Self::new(support, counts.into_iter().map(|c| c as f64 / n).collect())
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// `values[j][k] = g_{j+1}(z_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthonormalBasis {
    pub support: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl OrthonormalBasis {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn index_of(&self, z: f64) -> Result<usize> {
        self.support
            .binary_search_by(|s| s.total_cmp(&z))
            .map_err(|_| Error::DegenerateInstrument(format!("value {z} is not in the instrument support")))
    }

    /// Columns `g_j(zᵢ)` for every basis function.
    pub fn transform(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let idx = z.iter().map(|&v| self.index_of(v)).collect::<Result<Vec<_>>>()?;
        Ok(self
            .values
            .iter()
            .map(|g| idx.iter().map(|&k| g[k]).collect())
            .collect())
    }
}

/// Centred nested indicators `1{Z = z_j} − P(Z = z_j | Z ≤ z_j)·1{Z ≤ z_j}`,
/// `j = 1..J`, orthonormalized by Gram–Schmidt under `probs`.
pub fn build_orthonormal_basis(inst: &FiniteSupportInstrument) -> Result<OrthonormalBasis> {
    let p = &inst.probs;
    let m = p.len();
    let inner = |a: &[f64], b: &[f64]| -> f64 { (0..m).map(|k| p[k] * a[k] * b[k]).sum() };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m - 1);
    let mut cdf = p[0];
    for j in 1..m {
        cdf += p[j];
        let cond = p[j] / cdf;
        let mut h: Vec<f64> = (0..m)
            .map(|k| {
                let here = if k == j { 1.0 } else { 0.0 };
                let below = if k <= j { 1.0 } else { 0.0 };
                here - cond * below
            })
            .collect();
        for _pass in 0..2 {
            for g in &basis {
                let c = inner(&h, g);
                for k in 0..m {
                    h[k] -= c * g[k];
                }
            }
        }
        let norm = inner(&h, &h).sqrt();
        if !(norm > 0.0) {
            return Err(Error::domain("instrument distribution is degenerate"));
        }
        for v in &mut h {
            *v /= norm;
        }
        basis.push(h);
    }
    Ok(OrthonormalBasis {
        support: inst.support.clone(),
        values: basis,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedIvEstimate {
    pub tau_hat: f64,
    /// `Covₙ^{wⱼ}(D, gⱼ)` per basis function.
    pub first_stages: Vec<f64>,
    /// Per-function ratios `Covₙ^{wⱼ}(Y, gⱼ) / Covₙ^{wⱼ}(D, gⱼ)` (NaN where the
    /// first stage is zero).
    pub components: Vec<f64>,
    pub n: usize,
}

/// Residualizes `y` and `d` on `[1, w₁ … w_J, controls]`; weight columns that
/// are collinear with earlier columns are dropped.
pub fn residualize_multi(
    y: &[f64],
    d: &[f64],
    weights: &[WeightVector],
    controls: Option<&DenseMatrix>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if y.len() != d.len() {
        return Err(Error::dim("y and d differ in length"));
    }
    let cols: Vec<&[f64]> = weights.iter().map(|w| w.values()).collect();
    let qr = residualizer(y.len(), &cols, controls)?;
    Ok((qr.residuals(y)?, qr.residuals(d)?))
}

/// Pooled weighted IV over an orthonormal instrument basis, one weight vector
/// per basis function. Expects `y`, `d` residualized with
/// [`residualize_multi`]. No standard error is reported.
pub fn generalized_weighted_iv(
    y: &[f64],
    d: &[f64],
    z: &[f64],
    weights: &[WeightVector],
    basis: &OrthonormalBasis,
) -> Result<GeneralizedIvEstimate> {
    let n = y.len();
    if d.len() != n || z.len() != n {
        return Err(Error::dim("y, d and z differ in length"));
    }
    if n < 2 {
        return Err(Error::domain("need at least two observations"));
    }
    if weights.len() != basis.len() {
        return Err(Error::dim(format!(
            "{} weight vectors for {} basis functions",
            weights.len(),
            basis.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| w.len() != n) {
        return Err(Error::dim(format!("weight vector of length {} for {n} observations", w.len())));
    }
    let g = basis.transform(z)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut scale = 0.0;
    let mut first_stages = Vec::with_capacity(g.len());
    let mut components = Vec::with_capacity(g.len());
    for (gj, wj) in g.iter().zip(weights) {
        let w = wj.values();
        let total = check_weights(w)?;
        let fs = wcov_unchecked(d, gj, w, total);
        let rf = wcov_unchecked(y, gj, w, total);
        scale += (wcov_unchecked(d, d, w, total) * wcov_unchecked(gj, gj, w, total)).sqrt();
        num += rf;
        den += fs;
        first_stages.push(fs);
        components.push(if fs != 0.0 { rf / fs } else { f64::NAN });
    }
    let tolerance = FIRST_STAGE_TOLERANCE * scale;
    if !(den.abs() > tolerance) {
        return Err(Error::WeakFirstStage {
            first_stage: den,
            tolerance,
        });
    }
    Ok(GeneralizedIvEstimate {
        tau_hat: num / den,
        first_stages,
        components,
        n,
    })
}
