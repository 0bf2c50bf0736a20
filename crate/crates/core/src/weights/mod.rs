//! Compliance-weight learners, cross-fitting and in-sample fitting.
//!
//! Learners see only `(x, z, d)`; the outcome never enters a weight.

mod binned;
mod forest;
mod step;

use std::fmt::Debug;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dgp::{alpha_with, DgpConfig};
use crate::error::{Error, Result};
use crate::estimators::{Provenance, WeightVector};
use crate::mathcore::{DenseMatrix, RngStream};

pub use binned::{BinnedModel, BinnedOlsLearner};
pub use forest::{HonestForest, HonestForestLearner, HonestForestParams};
pub use step::StepFunction;

/// A fitted compliance function `x ↦ α̂(x)`; raw predictions may be negative.
pub trait FittedWeightModel: Debug + Send + Sync {
    fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>>;

    fn learner_id(&self) -> &str;

    /// Exact step-function form for univariate piecewise-constant models.
    fn step_function(&self) -> Option<StepFunction> {
        None
    }
}

pub trait WeightLearner: Debug + Send + Sync {
    fn id(&self) -> String;

    /// Fit on `(x, z, d)`. Randomized learners draw only from `stream`.
    fn fit(&self, x: &DenseMatrix, z: &[f64], d: &[f64], stream: &RngStream)
        -> Result<Box<dyn FittedWeightModel>>;
}

pub(crate) fn check_inputs(x: &DenseMatrix, z: &[f64], d: &[f64]) -> Result<()> {
    if x.rows() != z.len() || z.len() != d.len() {
        return Err(Error::dim(format!(
            "x has {} rows, z {} and d {} entries",
            x.rows(),
            z.len(),
            d.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_both_arms(learner: &str, z: &[f64]) -> Result<()> {
    let ones = z.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == z.len() {
        return Err(Error::DegenerateFit {
            learner: learner.to_string(),
            reason: "training data contain a single instrument value".into(),
        });
    }
    Ok(())
}

/// Predicts the same value everywhere, regardless of training data.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantLearner {
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantModel {
    pub value: f64,
}

impl FittedWeightModel for ConstantModel {
    fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        Ok(vec![self.value; x.rows()])
    }

    fn learner_id(&self) -> &str {
        "constant"
    }

    fn step_function(&self) -> Option<StepFunction> {
        Some(StepFunction::constant(self.value))
    }
}

impl WeightLearner for ConstantLearner {
    fn id(&self) -> String {
        "constant".into()
    }

    fn fit(&self, x: &DenseMatrix, z: &[f64], d: &[f64], _: &RngStream) -> Result<Box<dyn FittedWeightModel>> {
        check_inputs(x, z, d)?;
        Ok(Box::new(ConstantModel { value: self.value }))
    }
}

/// Closed-form `α(x)` of a simulation design.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleModel {
    cfg: DgpConfig,
    thresholds: (f64, f64),
}

impl OracleModel {
    pub fn new(cfg: &DgpConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            thresholds: cfg.thresholds(),
        })
    }

    pub fn alpha(&self, x: f64) -> f64 {
        alpha_with(x, &self.cfg, self.thresholds.0, self.thresholds.1)
    }
}

impl FittedWeightModel for OracleModel {
    fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        if x.cols() != 1 {
            return Err(Error::dim("oracle compliance is defined for a single covariate"));
        }
        Ok(x.as_slice().iter().map(|&v| self.alpha(v)).collect())
    }

    fn learner_id(&self) -> &str {
        "oracle"
    }
}

/// `max((1−λ)·level + λ·base(x), 0)` where `level = mean(α̂²)/mean(α̂)` was
/// computed on the sample the base weights came from.
#[derive(Debug)]
pub struct ShrunkModel<'a> {
    pub base: &'a dyn FittedWeightModel,
    pub level: f64,
    pub lambda: f64,
}

impl ShrunkModel<'_> {
    fn apply(&self, v: f64) -> f64 {
        ((1.0 - self.lambda) * self.level + self.lambda * clip_value(v)).max(0.0)
    }
}

impl FittedWeightModel for ShrunkModel<'_> {
    fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        Ok(self.base.predict(x)?.into_iter().map(|v| self.apply(v)).collect())
    }

    fn learner_id(&self) -> &str {
        "shrunk"
    }

    fn step_function(&self) -> Option<StepFunction> {
        self.base.step_function().map(|s| s.map_values(|v| self.apply(v)))
    }
}

/// Fold labels `0..k`; sizes differ by at most one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }

    /// Row indices outside and inside fold `j`.
    pub fn split(&self, j: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.fold_of.iter().enumerate() {
            if f == j {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Uniformly random balanced partition: shuffle `0..n` and deal the shuffled
/// indices round-robin into `k` folds.
pub fn assign_folds(n: usize, k: usize, stream: &RngStream) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::domain(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream.generator());
    let mut fold_of = vec![0; n];
    for (i, &p) in perm.iter().enumerate() {
        fold_of[p] = i % k;
    }
    Ok(FoldAssignment { fold_of, k })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clipped {
    pub values: Vec<f64>,
    pub n_clipped: usize,
    pub all_zero: bool,
}

#[inline]
pub fn clip_value(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Elementwise positive part.
pub fn clip_nonnegative(raw: &[f64]) -> Clipped {
    let values: Vec<f64> = raw.iter().map(|&v| clip_value(v)).collect();
    let n_clipped = raw.iter().filter(|&&v| !(v > 0.0) && v != 0.0).count();
    let all_zero = values.iter().all(|&v| v == 0.0);
    Clipped {
        values,
        n_clipped,
        all_zero,
    }
}

fn into_weight_vector(clipped: Clipped, provenance: Provenance, learner: &str) -> Result<WeightVector> {
    if clipped.all_zero {
        return Err(Error::DegenerateWeights(format!(
            "{learner}: every fitted weight is nonpositive"
        )));
    }
    WeightVector::new(clipped.values, provenance, learner)
}

pub struct CrossFit {
    pub weights: WeightVector,
    /// Model fitted without fold `j`, for each `j`.
    pub models: Vec<Box<dyn FittedWeightModel>>,
    pub n_clipped: usize,
}

impl CrossFit {
    pub fn model_refs(&self) -> Vec<&dyn FittedWeightModel> {
        self.models.iter().map(|m| m.as_ref()).collect()
    }
}

/// Observation `i` gets the clipped prediction of the model fitted on every
/// fold except its own. The model for fold `j` uses `stream.child(j)`.
pub fn crossfit_weights(
    x: &DenseMatrix,
    z: &[f64],
    d: &[f64],
    learner: &dyn WeightLearner,
    folds: &FoldAssignment,
    stream: &RngStream,
) -> Result<CrossFit> {
    check_inputs(x, z, d)?;
    if folds.fold_of.len() != z.len() {
        return Err(Error::dim("fold map length differs from sample size"));
    }
    let n = z.len();
    let mut raw = vec![0.0; n];
    let mut models = Vec::with_capacity(folds.k);
    for j in 0..folds.k {
        let (train, test) = folds.split(j);
        let xt = x.select_rows(&train);
        let zt: Vec<f64> = train.iter().map(|&i| z[i]).collect();
        let dt: Vec<f64> = train.iter().map(|&i| d[i]).collect();
        let model = learner.fit(&xt, &zt, &dt, &stream.child(j as u64))?;
        let pred = model.predict(&x.select_rows(&test))?;
        for (&i, p) in test.iter().zip(pred) {
            raw[i] = p;
        }
        models.push(model);
    }
    let clipped = clip_nonnegative(&raw);
    let n_clipped = clipped.n_clipped;
    let weights = into_weight_vector(clipped, Provenance::CrossFitted, &learner.id())?
        .with_folds(folds.fold_of.clone())?;
    Ok(CrossFit {
        weights,
        models,
        n_clipped,
    })
}

pub struct InSampleFit {
    pub weights: WeightVector,
    pub model: Box<dyn FittedWeightModel>,
    pub n_clipped: usize,
}

/// One fit on the full sample, predicted back on the same rows.
pub fn insample_weights(
    x: &DenseMatrix,
    z: &[f64],
    d: &[f64],
    learner: &dyn WeightLearner,
    stream: &RngStream,
) -> Result<InSampleFit> {
    check_inputs(x, z, d)?;
    let model = learner.fit(x, z, d, stream)?;
    let clipped = clip_nonnegative(&model.predict(x)?);
    let n_clipped = clipped.n_clipped;
    Ok(InSampleFit {
        weights: into_weight_vector(clipped, Provenance::InSample, &learner.id())?,
        model,
        n_clipped,
    })
}

/// Closed-form compliance `α(xᵢ)` as weights.
pub fn oracle_weights(x: &[f64], cfg: &DgpConfig) -> Result<WeightVector> {
    let m = OracleModel::new(cfg)?;
    let w: Vec<f64> = x.iter().map(|&v| m.alpha(v)).collect();
    WeightVector::new(w, Provenance::Oracle, "oracle")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes() {
        let f = assign_folds(10, 5, &RngStream::new(1)).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
        let f = assign_folds(11, 5, &RngStream::new(1)).unwrap();
        let mut s = f.sizes();
        s.sort();
        assert_eq!(s, vec![2, 2, 2, 2, 3]);
        assert_eq!(f, assign_folds(11, 5, &RngStream::new(1)).unwrap());
        assert!(assign_folds(5, 1, &RngStream::new(1)).is_err());
        assert!(assign_folds(3, 4, &RngStream::new(1)).is_err());
    }

    #[test]
    fn clipping() {
        let c = clip_nonnegative(&[-0.1, 0.3]);
        assert_eq!(c.values, vec![0.0, 0.3]);
        assert_eq!(c.n_clipped, 1);
        let c = clip_nonnegative(&[0.0, 0.3]);
        assert_eq!(c.values, vec![0.0, 0.3]);
        assert_eq!(c.n_clipped, 0);
        let c = clip_nonnegative(&[-1.0, -2.0]);
        assert!(c.all_zero);
        assert_eq!(c.values, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_learner_everywhere() {
        let x = DenseMatrix::column_vector((0..20).map(f64::from).collect());
        let z: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let d = z.clone();
        let l = ConstantLearner { value: 0.25 };
        let folds = assign_folds(20, 4, &RngStream::new(3)).unwrap();
        let cf = crossfit_weights(&x, &z, &d, &l, &folds, &RngStream::new(4)).unwrap();
        assert!(cf.weights.values().iter().all(|&v| v == 0.25));
        assert_eq!(cf.weights.provenance, Provenance::CrossFitted);
        assert_eq!(cf.weights.fold_of.as_deref(), Some(&folds.fold_of[..]));
        let ins = insample_weights(&x, &z, &d, &l, &RngStream::new(4)).unwrap();
        assert_eq!(ins.weights.values(), cf.weights.values());
        assert_eq!(ins.weights.provenance, Provenance::InSample);
    }

    #[test]
    fn negative_constant_is_degenerate() {
        let x = DenseMatrix::column_vector(vec![0.0, 1.0, 2.0, 3.0]);
        let z = [0.0, 1.0, 0.0, 1.0];
        let l = ConstantLearner { value: -0.5 };
        assert!(matches!(
            insample_weights(&x, &z, &z, &l, &RngStream::new(0)),
            Err(Error::DegenerateWeights(_))
        ));
    }
}
