//! Weighted empirical moments, `Eₙʷ[∘] = Σwᵢ∘ᵢ / Σwᵢ`.

use crate::error::{Error, Result};

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Population-style (divide by `n`) covariance.
pub fn cov(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

pub(crate) fn check_weights(w: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        if !(wi >= 0.0) || !wi.is_finite() {
            return Err(Error::DegenerateWeights(format!(
                "weight {i} is {wi}; weights must be finite and nonnegative"
            )));
        }
        total += wi;
    }
    if total <= 0.0 {
        return Err(Error::DegenerateWeights("weights sum to zero".into()));
    }
    Ok(total)
}

pub fn weighted_mean(a: &[f64], w: &[f64]) -> Result<f64> {
    if a.len() != w.len() {
        return Err(Error::dim("weighted_mean: lengths differ"));
    }
    let total = check_weights(w)?;
    Ok(wmean_unchecked(a, w, total))
}

/// `Eₙʷ[(a − Eₙʷa)(b − Eₙʷb)]`. Invariant to positive rescaling of `w`.
pub fn weighted_cov(a: &[f64], b: &[f64], w: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != w.len() {
        return Err(Error::dim(format!(
            "weighted_cov: lengths {}, {}, {} differ",
            a.len(),
            b.len(),
            w.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::domain("weighted_cov needs at least two observations"));
    }
    let total = check_weights(w)?;
    Ok(wcov_unchecked(a, b, w, total))
}

#[inline]
pub(crate) fn wmean_unchecked(a: &[f64], w: &[f64], total: f64) -> f64 {
    a.iter().zip(w).map(|(x, wi)| wi * x).sum::<f64>() / total
}

pub(crate) fn wcov_unchecked(a: &[f64], b: &[f64], w: &[f64], total: f64) -> f64 {
    let ma = wmean_unchecked(a, w, total);
    let mb = wmean_unchecked(b, w, total);
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), wi)| wi * (x - ma) * (y - mb))
        .sum::<f64>()
        / total
}
