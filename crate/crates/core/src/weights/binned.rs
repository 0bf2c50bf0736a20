use super::{check_both_arms, check_inputs, FittedWeightModel, StepFunction, WeightLearner};
use crate::error::{Error, Result};
use crate::mathcore::{ecdf_bins, DenseMatrix, RngStream};

/// Compliance as the per-bin difference of treatment rates between
/// instrument arms, `t̂ⱼ₁ − t̂ⱼ₀`, on `J` equal-count bins of a single
/// covariate.
///
/// A bin missing one instrument arm is merged with the nearest group of
/// adjacent bins that has observations in that arm, moving toward the median
/// bin when both directions are equally near. Merging repeats until every
/// group has both arms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinnedOlsLearner {
    pub bins: usize,
}

impl BinnedOlsLearner {
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::domain("binned learner needs at least one bin"));
        }
        Ok(Self { bins })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinnedModel {
    id: String,
    step: StepFunction,
    /// Inclusive 1-based bin ranges forming each group after merging.
    pub groups: Vec<(usize, usize)>,
}

impl BinnedModel {
    pub fn group_weights(&self) -> &[f64] {
        self.step.values()
    }
}

impl FittedWeightModel for BinnedModel {
    fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        if x.cols() != 1 {
            return Err(Error::dim("binned model takes a single covariate"));
        }
        Ok(x.as_slice().iter().map(|&v| self.step.eval(v)).collect())
    }

    fn learner_id(&self) -> &str {
        &self.id
    }

    fn step_function(&self) -> Option<StepFunction> {
        Some(self.step.clone())
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Cell {
    n: [usize; 2],
    sum_d: [f64; 2],
    max_x: f64,
}

impl WeightLearner for BinnedOlsLearner {
    fn id(&self) -> String {
        format!("binned{}", self.bins)
    }

    fn fit(&self, x: &DenseMatrix, z: &[f64], d: &[f64], _: &RngStream) -> Result<Box<dyn FittedWeightModel>> {
        check_inputs(x, z, d)?;
        if x.cols() != 1 {
            return Err(Error::dim("binned learner takes a single covariate"));
        }
        let id = self.id();
        check_both_arms(&id, z)?;
        let xs = x.as_slice();
        let n = xs.len();
        let j = self.bins.min(n);
        let labels = ecdf_bins(xs, j);
        let mut cells = vec![
            Cell {
                max_x: f64::NEG_INFINITY,
                ..Cell::default()
            };
            j
        ];
        for i in 0..n {
            let c = &mut cells[labels[i] - 1];
            let arm = usize::from(z[i] == 1.0);
            c.n[arm] += 1;
            c.sum_d[arm] += d[i];
            c.max_x = c.max_x.max(xs[i]);
        }
        let groups = merge_groups(&cells);
        let mut edges = Vec::with_capacity(groups.len());
        let mut values = Vec::with_capacity(groups.len());
        for &(lo, hi) in &groups {
            let mut g = Cell {
                max_x: f64::NEG_INFINITY,
                ..Cell::default()
            };
            for c in &cells[lo - 1..hi] {
                for a in 0..2 {
                    g.n[a] += c.n[a];
                    g.sum_d[a] += c.sum_d[a];
                }
                g.max_x = g.max_x.max(c.max_x);
            }
            values.push(g.sum_d[1] / g.n[1] as f64 - g.sum_d[0] / g.n[0] as f64);
            edges.push(g.max_x);
        }
        edges.pop();
        // tied covariate values can give equal edges; keep the first piece
        let mut bp = Vec::with_capacity(edges.len());
        let mut vals = vec![values[0]];
        for (k, e) in edges.into_iter().enumerate() {
            if bp.last().is_some_and(|&last: &f64| e <= last) {
                continue;
            }
            bp.push(e);
            vals.push(values[k + 1]);
        }
        Ok(Box::new(BinnedModel {
            id,
            step: StepFunction::new(bp, vals)?,
            groups,
        }))
    }
}

/// Contiguous bin groups (1-based, inclusive) in which both arms are present.
/// Requires both arms to be present overall.
fn merge_groups(cells: &[Cell]) -> Vec<(usize, usize)> {
    let j = cells.len();
    let mut groups: Vec<(usize, usize, [usize; 2])> = cells
        .iter()
        .enumerate()
        .map(|(k, c)| (k + 1, k + 1, c.n))
        .collect();
    // centre of the bin range, doubled to stay integral
    let median2 = j + 1;
    while let Some(g) = groups.iter().position(|(_, _, n)| n[0] == 0 || n[1] == 0) {
        let missing = usize::from(groups[g].2[1] == 0);
        let left = (0..g).rev().find(|&k| groups[k].2[missing] > 0);
        let right = (g + 1..groups.len()).find(|&k| groups[k].2[missing] > 0);
        let target = match (left, right) {
            (Some(l), Some(r)) => {
                let dl = g - l;
                let dr = r - g;
                if dl < dr {
                    l
                } else if dr < dl {
                    r
                } else {
                    let centre2 = groups[g].0 + groups[g].1;
                    if centre2 < median2 {
                        r
                    } else {
                        l
                    }
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!("both arms are present overall"),
        };
        let (a, b) = if target < g { (target, g) } else { (g, target) };
        let mut n = [0, 0];
        for grp in &groups[a..=b] {
            n[0] += grp.2[0];
            n[1] += grp.2[1];
        }
        let merged = (groups[a].0, groups[b].1, n);
        groups.splice(a..=b, std::iter::once(merged));
    }
    groups.into_iter().map(|(lo, hi, _)| (lo, hi)).collect()
}
