//! Honest forest for `α(x) = E[D | Z=1, X=x] − E[D | Z=0, X=x]`.
//!
//! Each tree draws a subsample without replacement and splits it into a
//! split half, which chooses the partition, and an estimate half, which
//! supplies the leaf values. Splits maximize `N_L·N_R·(Δ_L − Δ_R)²`, where `Δ`
//! is the difference of treatment rates between instrument arms, over
//! midpoints of consecutive distinct covariate values. Every child must keep
//! at least `min_leaf_per_arm` observations of each arm in both halves.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_both_arms, check_inputs, FittedWeightModel, StepFunction, WeightLearner};
use crate::error::{Error, Result};
use crate::mathcore::{DenseMatrix, RngStream, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HonestForestParams {
    pub n_trees: usize,
    pub subsample_fraction: f64,
    pub min_leaf_per_arm: usize,
    /// `None` grows until the leaf constraint binds.
    pub max_depth: Option<usize>,
    /// Features tried per split; `None` tries all.
    pub mtry: Option<usize>,
    /// Candidate `min_leaf_per_arm` values chosen by out-of-bag error.
    pub tuning_grid: Option<Vec<usize>>,
}

impl Default for HonestForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            subsample_fraction: 0.5,
            min_leaf_per_arm: 10,
            max_depth: None,
            mtry: None,
            tuning_grid: None,
        }
    }
}

impl HonestForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "subsample_fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        let leaves = std::iter::once(self.min_leaf_per_arm).chain(self.tuning_grid.iter().flatten().copied());
        for m in leaves {
            if m < 2 {
                return Err(Error::Config(format!("min_leaf_per_arm must be at least 2, got {m}")));
            }
        }
        if self.mtry == Some(0) {
            return Err(Error::Config("mtry must be positive".into()));
        }
        if self.tuning_grid.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::Config("tuning grid is empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HonestForestLearner {
    pub params: HonestForestParams,
}

impl HonestForestLearner {
    pub fn new(params: HonestForestParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Clone, Debug, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    /// Leaf values and thresholds from left to right (single feature only).
    fn in_order(&self, k: usize, thresholds: &mut Vec<f64>, values: &mut Vec<f64>) {
        match self.nodes[k] {
            Node::Leaf(v) => values.push(v),
            Node::Split {
                threshold,
                left,
                right,
                ..
            } => {
                self.in_order(left as usize, thresholds, values);
                thresholds.push(threshold);
                self.in_order(right as usize, thresholds, values);
            }
        }
    }

    fn depth(&self, k: usize) -> usize {
        match self.nodes[k] {
            Node::Leaf(_) => 0,
            Node::Split { left, right, .. } => 1 + self.depth(left as usize).max(self.depth(right as usize)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HonestForest {
    id: String,
    trees: Vec<Tree>,
    features: usize,
    step: Option<StepFunction>,
    /// `min_leaf_per_arm` actually used (after tuning, if any).
    pub min_leaf_per_arm: usize,
}

impl HonestForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(|t| t.depth(0)).max().unwrap_or(0)
    }
}

impl FittedWeightModel for HonestForest {
    fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.features {
            return Err(Error::dim(format!(
                "forest was fitted on {} covariates, got {}",
                self.features,
                x.cols()
            )));
        }
        if let Some(step) = &self.step {
            return Ok(x.as_slice().iter().map(|&v| step.eval(v)).collect());
        }
        let nt = self.trees.len() as f64;
        Ok((0..x.rows())
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / nt
            })
            .collect())
    }

    fn learner_id(&self) -> &str {
        &self.id
    }

    fn step_function(&self) -> Option<StepFunction> {
        self.step.clone()
    }
}

/// Average of univariate trees as one step function: every tree contributes
/// its leftmost leaf value plus a jump at each of its thresholds.
fn compile_step(trees: &[Tree]) -> Result<StepFunction> {
    let mut base = 0.0;
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    let mut th = Vec::new();
    let mut vals = Vec::new();
    for t in trees {
        th.clear();
        vals.clear();
        t.in_order(0, &mut th, &mut vals);
        base += vals[0];
        for (k, &thr) in th.iter().enumerate() {
            jumps.push((thr, vals[k + 1] - vals[k]));
        }
    }
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nt = trees.len() as f64;
    let mut breakpoints = Vec::new();
    let mut values = vec![base / nt];
    let mut acc = base;
    let mut k = 0;
    while k < jumps.len() {
        let thr = jumps[k].0;
        while k < jumps.len() && jumps[k].0 == thr {
            acc += jumps[k].1;
            k += 1;
        }
        breakpoints.push(thr);
        values.push((acc / nt).clamp(-1.0, 1.0));
    }
    StepFunction::new(breakpoints, values)
}

struct Context<'a> {
    /// Feature-major covariates.
    cols: Vec<Vec<f64>>,
    z: &'a [f64],
    d: &'a [f64],
    /// Indices sorted by each feature, ties by index.
    order: Vec<Vec<u32>>,
    /// Training-sample compliance, the last-resort leaf value.
    overall: f64,
}

#[derive(Clone, Copy, Default)]
struct ArmStats {
    n: [usize; 2],
    sum: [f64; 2],
}

impl ArmStats {
    #[inline]
    fn add(&mut self, z: f64, d: f64) {
        let a = usize::from(z == 1.0);
        self.n[a] += 1;
        self.sum[a] += d;
    }

    fn of(idx: &[u32], ctx: &Context<'_>) -> Self {
        let mut s = Self::default();
        for &i in idx {
            s.add(ctx.z[i as usize], ctx.d[i as usize]);
        }
        s
    }

    fn minus(&self, other: &Self) -> Self {
        Self {
            n: [self.n[0] - other.n[0], self.n[1] - other.n[1]],
            sum: [self.sum[0] - other.sum[0], self.sum[1] - other.sum[1]],
        }
    }

    fn has_both(&self) -> bool {
        self.n[0] > 0 && self.n[1] > 0
    }

    fn delta(&self) -> f64 {
        self.sum[1] / self.n[1] as f64 - self.sum[0] / self.n[0] as f64
    }
}

struct Work {
    node: usize,
    sstat: ArmStats,
    estat: ArmStats,
    lo: usize,
    hi: usize,
    elo: usize,
    ehi: usize,
    depth: usize,
}

struct Best {
    crit: f64,
    left: ArmStats,
    eleft: ArmStats,
    feature: usize,
    threshold: f64,
    pos: usize,
    epos: usize,
}

struct Scratch {
    role: Vec<u8>,
    perm: Vec<u32>,
}

fn grow_tree(ctx: &Context<'_>, params: &HonestForestParams, min_leaf: usize, rng: &mut StreamRng, scratch: &mut Scratch) -> Tree {
    let n = ctx.z.len();
    let p = ctx.cols.len();
    let s = ((params.subsample_fraction * n as f64).floor() as usize).clamp(2.min(n), n);
    let s_split = s / 2;
    let role = &mut scratch.role;
    role.fill(0);
    // reset so each tree depends on its own generator only
    scratch.perm.clear();
    scratch.perm.extend(0..n as u32);
    // partial Fisher–Yates; index draws by 64-bit multiply-shift, whose
    // bias is below n/2⁶⁴
    let perm = &mut scratch.perm;
    for k in 0..s {
        let span = (n - k) as u64;
        let j = k + ((u128::from(rng.next_u64()) * u128::from(span)) >> 64) as usize;
        perm.swap(k, j);
        role[perm[k] as usize] = if k < s_split { 1 } else { 2 };
    }
    let mut split: Vec<Vec<u32>> = Vec::with_capacity(p);
    let mut est: Vec<Vec<u32>> = Vec::with_capacity(p);
    for f in 0..p {
        // branch-free filter: roles are random, so a match mispredicts often
        let mut a = vec![0u32; s_split + 1];
        let mut b = vec![0u32; s - s_split + 1];
        let (mut na, mut nb) = (0, 0);
        for &i in &ctx.order[f] {
            let r = role[i as usize];
            a[na] = i;
            na += usize::from(r == 1);
            b[nb] = i;
            nb += usize::from(r == 2);
        }
        a.truncate(na);
        b.truncate(nb);
        split.push(a);
        est.push(b);
    }
    let mtry = params.mtry.unwrap_or(p).min(p);
    let mut features: Vec<usize> = (0..p).collect();
    let mut go_left = vec![false; if p > 1 { n } else { 0 }];
    let mut buffer: Vec<u32> = Vec::new();

    let root_split = ArmStats::of(&split[0], ctx);
    let fallback = if root_split.has_both() {
        root_split.delta()
    } else {
        ctx.overall
    };

    let mut nodes = vec![Node::Leaf(0.0)];
    let mut stack = vec![Work {
        node: 0,
        sstat: root_split,
        estat: ArmStats::of(&est[0], ctx),
        lo: 0,
        hi: split[0].len(),
        elo: 0,
        ehi: est[0].len(),
        depth: 0,
    }];
    while let Some(w) = stack.pop() {
        let (sstat, estat) = (w.sstat, w.estat);
        let leaf_value = if estat.has_both() {
            estat.delta()
        } else if sstat.has_both() {
            sstat.delta()
        } else {
            fallback
        };
        let can_split = params.max_depth.is_none_or(|m| w.depth < m)
            && sstat.n.iter().all(|&c| c >= 2 * min_leaf)
            && estat.n.iter().all(|&c| c >= 2 * min_leaf);
        let best = if can_split {
            if mtry < p {
                for k in 0..mtry {
                    let j = rng.random_range(k..p);
                    features.swap(k, j);
                }
            }
            let mut best: Option<Best> = None;
            for &f in &features[..mtry] {
                search_feature(ctx, f, &split[f][w.lo..w.hi], &est[f][w.elo..w.ehi], sstat, estat, min_leaf, &mut best);
            }
            best
        } else {
            None
        };
        let Some(b) = best else {
            nodes[w.node] = Node::Leaf(leaf_value);
            continue;
        };
        if p > 1 {
            for &i in &split[b.feature][w.lo..w.hi] {
                go_left[i as usize] = false;
            }
            for &i in &split[b.feature][w.lo..w.lo + b.pos] {
                go_left[i as usize] = true;
            }
            for &i in &est[b.feature][w.elo..w.ehi] {
                go_left[i as usize] = false;
            }
            for &i in &est[b.feature][w.elo..w.elo + b.epos] {
                go_left[i as usize] = true;
            }
            for g in 0..p {
                if g == b.feature {
                    continue;
                }
                stable_partition(&mut split[g][w.lo..w.hi], &go_left, &mut buffer);
                stable_partition(&mut est[g][w.elo..w.ehi], &go_left, &mut buffer);
            }
        }
        let left = nodes.len();
        nodes.push(Node::Leaf(0.0));
        nodes.push(Node::Leaf(0.0));
        nodes[w.node] = Node::Split {
            feature: b.feature as u32,
            threshold: b.threshold,
            left: left as u32,
            right: left as u32 + 1,
        };
        stack.push(Work {
            node: left + 1,
            sstat: sstat.minus(&b.left),
            estat: estat.minus(&b.eleft),
            lo: w.lo + b.pos,
            hi: w.hi,
            elo: w.elo + b.epos,
            ehi: w.ehi,
            depth: w.depth + 1,
        });
        stack.push(Work {
            node: left,
            sstat: b.left,
            estat: b.eleft,
            lo: w.lo,
            hi: w.lo + b.pos,
            elo: w.elo,
            ehi: w.elo + b.epos,
            depth: w.depth + 1,
        });
    }
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn search_feature(
    ctx: &Context<'_>,
    f: usize,
    arr: &[u32],
    earr: &[u32],
    total: ArmStats,
    etotal: ArmStats,
    m: usize,
    best: &mut Option<Best>,
) {
    let xs = &ctx.cols[f];
    let mut left = ArmStats::default();
    let mut eleft = ArmStats::default();
    let mut ep = 0;
    for i in 0..arr.len().saturating_sub(1) {
        let id = arr[i] as usize;
        left.add(ctx.z[id], ctx.d[id]);
        let nr = [total.n[0] - left.n[0], total.n[1] - left.n[1]];
        if nr[0] < m || nr[1] < m {
            break;
        }
        if left.n[0] < m || left.n[1] < m {
            continue;
        }
        let xa = xs[id];
        let xb = xs[arr[i + 1] as usize];
        if !(xa < xb) {
            continue;
        }
        let mut thr = 0.5 * (xa + xb);
        if !(thr < xb) {
            thr = xa;
        }
        while ep < earr.len() && xs[earr[ep] as usize] <= thr {
            let e = earr[ep] as usize;
            eleft.add(ctx.z[e], ctx.d[e]);
            ep += 1;
        }
        if etotal.n[0] - eleft.n[0] < m || etotal.n[1] - eleft.n[1] < m {
            break;
        }
        if eleft.n[0] < m || eleft.n[1] < m {
            continue;
        }
        let dl = left.sum[1] / left.n[1] as f64 - left.sum[0] / left.n[0] as f64;
        let dr = (total.sum[1] - left.sum[1]) / nr[1] as f64 - (total.sum[0] - left.sum[0]) / nr[0] as f64;
        let nl = (left.n[0] + left.n[1]) as f64;
        let nrt = (nr[0] + nr[1]) as f64;
        let crit = nl * nrt * (dl - dr) * (dl - dr);
        if crit > 0.0 && best.as_ref().is_none_or(|b| crit > b.crit) {
            *best = Some(Best {
                crit,
                left,
                eleft,
                feature: f,
                threshold: thr,
                pos: i + 1,
                epos: ep,
            });
        }
    }
}

fn stable_partition(v: &mut [u32], go_left: &[bool], scratch: &mut Vec<u32>) {
    scratch.clear();
    let mut k = 0;
    for j in 0..v.len() {
        let i = v[j];
        if go_left[i as usize] {
            v[k] = i;
            k += 1;
        } else {
            scratch.push(i);
        }
    }
    v[k..].copy_from_slice(scratch);
}

impl HonestForestLearner {
    fn grow_forest(&self, ctx: &Context<'_>, min_leaf: usize, stream: &RngStream, keep_roles: bool) -> Vec<(Tree, Vec<u8>)> {
        let n = ctx.z.len();
        (0..self.params.n_trees)
            .into_par_iter()
            .with_min_len(8)
            .map_init(
                || Scratch {
                    role: vec![0u8; n],
                    perm: Vec::with_capacity(n),
                },
                |scratch, t| {
                    let mut rng = stream.child(t as u64).generator();
                    let tree = grow_tree(ctx, &self.params, min_leaf, &mut rng, scratch);
                    let kept = if keep_roles { scratch.role.clone() } else { Vec::new() };
                    (tree, kept)
                },
            )
            .collect()
    }
}

/// Out-of-bag mean squared error against `T = D(Z − p̂)/(p̂(1 − p̂))`, whose
/// conditional mean given `X` is `α(X)`.
fn oob_loss(ctx: &Context<'_>, x: &DenseMatrix, grown: &[(Tree, Vec<u8>)]) -> f64 {
    let n = ctx.z.len();
    let p_hat = ctx.z.iter().sum::<f64>() / n as f64;
    let scale = p_hat * (1.0 - p_hat);
    let mut loss = 0.0;
    let mut used = 0usize;
    for i in 0..n {
        let row = x.row(i);
        let mut sum = 0.0;
        let mut count = 0usize;
        for (t, role) in grown {
            if role[i] == 0 {
                sum += t.predict_row(row);
                count += 1;
            }
        }
        if count > 0 {
            let target = ctx.d[i] * (ctx.z[i] - p_hat) / scale;
            let e = target - sum / count as f64;
            loss += e * e;
            used += 1;
        }
    }
    if used == 0 {
        f64::INFINITY
    } else {
        loss / used as f64
    }
}

impl WeightLearner for HonestForestLearner {
    fn id(&self) -> String {
        "forest".into()
    }

    fn fit(&self, x: &DenseMatrix, z: &[f64], d: &[f64], stream: &RngStream) -> Result<Box<dyn FittedWeightModel>> {
        self.params.validate()?;
        check_inputs(x, z, d)?;
        check_both_arms("forest", z)?;
        let n = x.rows();
        let p = x.cols();
        if p == 0 {
            return Err(Error::dim("forest needs at least one covariate"));
        }
        if n > u32::MAX as usize {
            return Err(Error::domain("sample too large for the forest index type"));
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("covariates must be finite"));
        }
        let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut o: Vec<u32> = (0..n as u32).collect();
                o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        let all: Vec<u32> = (0..n as u32).collect();
        let ctx = Context {
            cols,
            z,
            d,
            order,
            overall: 0.0,
        };
        let overall = ArmStats::of(&all, &ctx).delta();
        let ctx = Context { overall, ..ctx };

        let (trees, min_leaf) = match &self.params.tuning_grid {
            None => {
                let grown = self.grow_forest(&ctx, self.params.min_leaf_per_arm, stream, false);
                (grown.into_iter().map(|(t, _)| t).collect::<Vec<_>>(), self.params.min_leaf_per_arm)
            }
            Some(grid) => {
                let mut best: Option<(f64, usize, Vec<(Tree, Vec<u8>)>)> = None;
                for &m in grid {
                    let grown = self.grow_forest(&ctx, m, stream, true);
                    let loss = oob_loss(&ctx, x, &grown);
                    if best.as_ref().is_none_or(|b| loss < b.0) {
                        best = Some((loss, m, grown));
                    }
                }
                let (_, m, grown) = best.expect("grid validated nonempty");
                (grown.into_iter().map(|(t, _)| t).collect(), m)
            }
        };
        let step = if p == 1 { Some(compile_step(&trees)?) } else { None };
        Ok(Box::new(HonestForest {
            id: self.id(),
            trees,
            features: p,
            step,
            min_leaf_per_arm: min_leaf,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
        let mut g = RngStream::new(seed).generator();
        let mut x = Vec::new();
        let mut z = Vec::new();
        let mut d = Vec::new();
        for _ in 0..n {
            let xi: f64 = g.random_range(-2.0..2.0);
            let zi = if g.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let alpha = if xi > 0.0 { 0.8 } else { 0.1 };
            let di = if g.random::<f64>() < 0.1 + alpha * zi { 1.0 } else { 0.0 };
            x.push(xi);
            z.push(zi);
            d.push(di);
        }
        (DenseMatrix::column_vector(x), z, d)
    }

    #[test]
    fn step_compilation_matches_tree_average() {
        let (x, z, d) = toy(600, 1);
        let learner = HonestForestLearner::new(HonestForestParams {
            n_trees: 40,
            min_leaf_per_arm: 5,
            ..HonestForestParams::default()
        })
        .unwrap();
        let model = learner.fit(&x, &z, &d, &RngStream::new(2)).unwrap();
        let forest = model.step_function().unwrap();
        // re-grow to access trees directly
        let cols = vec![x.column(0)];
        let mut o: Vec<u32> = (0..600).collect();
        o.sort_by(|&a, &b| cols[0][a as usize].total_cmp(&cols[0][b as usize]).then(a.cmp(&b)));
        let ctx = Context {
            cols,
            z: &z,
            d: &d,
            order: vec![o],
            overall: 0.0,
        };
        let grown = learner.grow_forest(&ctx, 5, &RngStream::new(2), false);
        for k in 0..200 {
            let v = -2.5 + k as f64 * 0.025;
            let avg = grown.iter().map(|(t, _)| t.predict_row(&[v])).sum::<f64>() / 40.0;
            assert!((forest.eval(v) - avg).abs() < 1e-12, "x={v}");
        }
    }

    #[test]
    fn recovers_step_compliance() {
        let (x, z, d) = toy(2000, 3);
        let model = HonestForestLearner::new(HonestForestParams {
            n_trees: 100,
            ..HonestForestParams::default()
        })
        .unwrap()
        .fit(&x, &z, &d, &RngStream::new(4))
        .unwrap();
        let p = model.predict(&DenseMatrix::column_vector(vec![-1.5, 1.5])).unwrap();
        assert!((p[0] - 0.1).abs() < 0.1, "{p:?}");
        assert!((p[1] - 0.8).abs() < 0.1, "{p:?}");
    }

    #[test]
    fn stump_predicts_half_compliance() {
        // z = d: every subsample half has compliance exactly 1
        let x = DenseMatrix::column_vector((0..100).map(f64::from).collect());
        let z: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let model = HonestForestLearner::new(HonestForestParams {
            n_trees: 1,
            max_depth: Some(0),
            ..HonestForestParams::default()
        })
        .unwrap()
        .fit(&x, &z, &z, &RngStream::new(0))
        .unwrap();
        assert!(model.predict(&x).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn multivariate_matches_univariate_on_irrelevant_feature() {
        let (x, z, d) = toy(400, 5);
        let noise = vec![0.0; 400];
        let x2 = DenseMatrix::from_columns(&[&x.column(0), &noise]).unwrap();
        let params = HonestForestParams {
            n_trees: 20,
            min_leaf_per_arm: 5,
            ..HonestForestParams::default()
        };
        let l = HonestForestLearner::new(params).unwrap();
        let a = l.fit(&x, &z, &d, &RngStream::new(6)).unwrap();
        let b = l.fit(&x2, &z, &d, &RngStream::new(6)).unwrap();
        assert!(b.step_function().is_none());
        let grid: Vec<f64> = (0..50).map(|k| -2.0 + 0.08 * k as f64).collect();
        let pa = a.predict(&DenseMatrix::column_vector(grid.clone())).unwrap();
        let pb = b
            .predict(&DenseMatrix::from_columns(&[&grid, &vec![0.0; 50]]).unwrap())
            .unwrap();
        for (u, v) in pa.iter().zip(&pb) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn tuning_picks_a_grid_value() {
        let (x, z, d) = toy(500, 7);
        let l = HonestForestLearner::new(HonestForestParams {
            n_trees: 30,
            tuning_grid: Some(vec![5, 20, 60]),
            ..HonestForestParams::default()
        })
        .unwrap();
        let m = l.fit(&x, &z, &d, &RngStream::new(8)).unwrap();
        let id = m.learner_id().to_string();
        assert_eq!(id, "forest");
    }

    #[test]
    fn invalid_params() {
        let bad = |p: HonestForestParams| HonestForestLearner::new(p).is_err();
        assert!(bad(HonestForestParams {
            n_trees: 0,
            ..HonestForestParams::default()
        }));
        assert!(bad(HonestForestParams {
            min_leaf_per_arm: 1,
            ..HonestForestParams::default()
        }));
        assert!(bad(HonestForestParams {
            subsample_fraction: 1.5,
            ..HonestForestParams::default()
        }));
    }
}
