//! Random-forest regression over the four conspicuity values.
//!
//! Every tree draws from its own ChaCha stream (master seed, stream = tree
//! index). The bootstrap is the first thing drawn from that stream, so
//! in-bag membership can be rebuilt from the seed and sample count alone.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::sampling::PixelSample;
use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::field::Field2D;
use crate::scalar::Real;

pub const NUM_FEATURES: usize = 4;

/// Streams above this offset are reserved for importance permutations.
const PERMUTATION_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfParams {
    pub num_trees: usize,
    /// Bootstrap size as a fraction of the training set, drawn with
    /// replacement.
    pub bootstrap_ratio: f64,
    pub min_leaf_samples: usize,
    pub features_per_split: usize,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            num_trees: 100,
            bootstrap_ratio: 1.0 / 3.0,
            min_leaf_samples: 10,
            features_per_split: 2,
            seed: 0,
        }
    }
}

impl RfParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::param("a forest needs at least one tree"));
        }
        if !(self.bootstrap_ratio > 0.0 && self.bootstrap_ratio.is_finite()) {
            return Err(Error::param(format!(
                "bootstrap ratio must be positive, got {}",
                self.bootstrap_ratio
            )));
        }
        if self.min_leaf_samples == 0 {
            return Err(Error::param("minimum leaf size must be at least 1"));
        }
        if !(1..=NUM_FEATURES).contains(&self.features_per_split) {
            return Err(Error::param(format!(
                "features per split must lie in 1..={NUM_FEATURES}, got {}",
                self.features_per_split
            )));
        }
        Ok(())
    }

    /// Smallest training set accepted.
    pub fn min_samples(&self) -> usize {
        10 * self.min_leaf_samples
    }

    pub fn bootstrap_size(&self, n: usize) -> usize {
        ((self.bootstrap_ratio * n as f64).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node<T> {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf(T),
}

/// A binary regression tree stored as a flat node array rooted at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> RegressionTree<T> {
    /// Builds a tree from nodes, checking that children point forward and
    /// features are in range.
    pub fn from_nodes(nodes: Vec<Node<T>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::ModelFormat("tree has no nodes".into()));
        }
        let mut referenced = vec![false; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            match *n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= NUM_FEATURES {
                        return Err(Error::ModelFormat(format!("node {i}: feature {feature} out of range")));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::ModelFormat(format!("node {i}: non-finite threshold")));
                    }
                    for c in [left, right] {
                        if c <= i || c >= nodes.len() || referenced[c] {
                            return Err(Error::ModelFormat(format!("node {i}: bad child index {c}")));
                        }
                        referenced[c] = true;
                    }
                }
                Node::Leaf(v) => {
                    if !v.is_finite() {
                        return Err(Error::ModelFormat(format!("node {i}: non-finite leaf")));
                    }
                }
            }
        }
        if let Some(i) = referenced.iter().skip(1).position(|r| !r) {
            return Err(Error::ModelFormat(format!("node {} is unreachable", i + 1)));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[T; NUM_FEATURES]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                Node::Leaf(_) => return i,
            }
        }
    }

    pub fn predict(&self, x: &[T; NUM_FEATURES]) -> T {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf(v) => v,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// A trained forest. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestModel<T> {
    pub(crate) trees: Vec<RegressionTree<T>>,
    pub(crate) params: RfParams,
    pub(crate) num_train_samples: usize,
    pub(crate) oob_error: f64,
    pub(crate) importances: [f64; NUM_FEATURES],
}

impl<T: Real> RandomForestModel<T> {
    /// Assembles a model from parts, checking consistency.
    pub fn from_parts(
        trees: Vec<RegressionTree<T>>,
        params: RfParams,
        num_train_samples: usize,
        oob_error: f64,
        importances: [f64; NUM_FEATURES],
    ) -> Result<Self> {
        params.validate()?;
        if trees.len() != params.num_trees {
            return Err(Error::ModelFormat(format!(
                "{} trees present but params declare {}",
                trees.len(),
                params.num_trees
            )));
        }
        if !(oob_error.is_finite() && oob_error >= 0.0) {
            return Err(Error::ModelFormat(format!("invalid oob error {oob_error}")));
        }
        if importances.iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(Error::ModelFormat("importances must lie in [0, 1]".into()));
        }
        Ok(Self {
            trees,
            params,
            num_train_samples,
            oob_error,
            importances,
        })
    }

    pub fn trees(&self) -> &[RegressionTree<T>] {
        &self.trees
    }

    pub fn params(&self) -> &RfParams {
        &self.params
    }

    pub fn num_train_samples(&self) -> usize {
        self.num_train_samples
    }

    pub fn oob_error(&self) -> f64 {
        self.oob_error
    }

    /// Relative importance per channel (motion, color, intensity,
    /// orientation), scaled so the strongest is 1.
    pub fn importances(&self) -> [f64; NUM_FEATURES] {
        self.importances
    }

    /// Mean of all tree outputs.
    pub fn predict_one(&self, x: &[T; NUM_FEATURES]) -> T {
        let sum: T = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / T::of_usize(self.trees.len())
    }

    /// Unnormalized per-pixel forest output.
    pub fn predict_raw(&self, stack: &FeatureStack<T>) -> Field2D<T> {
        let (w, h) = stack.dims();
        let mut out = vec![T::zero(); w * h];
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                *o = self.predict_one(&stack.pixel(y * w + x));
            }
        });
        Field2D::new(w, h, out).expect("finite tree outputs")
    }
}

/// In-bag sample indices of tree `tree` (with repetition, in draw order).
pub fn bootstrap_indices(params: &RfParams, tree: usize, n: usize) -> Vec<usize> {
    let mut rng = tree_rng(params.seed, tree);
    draw_bootstrap(&mut rng, params.bootstrap_size(n), n)
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn draw_bootstrap(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(0..n)).collect()
}

/// Indices of samples absent from tree `tree`'s bootstrap.
pub fn out_of_bag_indices(params: &RfParams, tree: usize, n: usize) -> Vec<usize> {
    let mut in_bag = vec![false; n];
    for i in bootstrap_indices(params, tree, n) {
        in_bag[i] = true;
    }
    (0..n).filter(|&i| !in_bag[i]).collect()
}

struct Grower<'a, T> {
    xs: &'a [[T; NUM_FEATURES]],
    ys: &'a [f64],
    params: &'a RfParams,
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    score: f64,
}

impl<T: Real> Grower<'_, T> {
    fn grow(&self, rng: &mut ChaCha8Rng, mut idx: Vec<usize>) -> RegressionTree<T> {
        let mut nodes: Vec<Node<T>> = vec![Node::Leaf(T::zero())];
        // (node slot, start, end) into idx
        let mut work = vec![(0usize, 0usize, idx.len())];
        while let Some((slot, start, end)) = work.pop() {
            let rows = &mut idx[start..end];
            match self.best_split(rng, rows) {
                Some(split) => {
                    let mid = partition(rows, |i| self.xs[i][split.feature] <= split.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf(T::zero()));
                    nodes.push(Node::Leaf(T::zero()));
                    nodes[slot] = Node::Split {
                        feature: split.feature,
                        threshold: split.threshold,
                        left,
                        right: left + 1,
                    };
                    work.push((left + 1, start + mid, end));
                    work.push((left, start, start + mid));
                }
                None => {
                    nodes[slot] = Node::Leaf(T::of(self.leaf_value(rows)));
                }
            }
        }
        RegressionTree { nodes }
    }

    /// Mean target; pure nodes return their value exactly.
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let y0 = self.ys[rows[0]];
        if rows.iter().all(|&i| self.ys[i] == y0) {
            return y0;
        }
        rows.iter().map(|&i| self.ys[i]).sum::<f64>() / rows.len() as f64
    }

    fn best_split(&self, rng: &mut ChaCha8Rng, rows: &[usize]) -> Option<BestSplit<T>> {
        let n = rows.len();
        let min_leaf = self.params.min_leaf_samples;
        if n < 2 * min_leaf {
            return None;
        }
        let y0 = self.ys[rows[0]];
        if rows.iter().all(|&i| self.ys[i] == y0) {
            return None;
        }
        let total: f64 = rows.iter().map(|&i| self.ys[i]).sum();
        let parent_score = total * total / n as f64;

        let mut features = [0, 1, 2, 3];
        for k in 0..self.params.features_per_split {
            let j = rng.random_range(k..NUM_FEATURES);
            features.swap(k, j);
        }

        let mut best: Option<BestSplit<T>> = None;
        let mut sorted: Vec<(T, f64)> = Vec::with_capacity(n);
        for &f in &features[..self.params.features_per_split] {
            sorted.clear();
            sorted.extend(rows.iter().map(|&i| (self.xs[i][f], self.ys[i])));
            sorted.sort_by(|a, b| a.0.cmp_finite(&b.0));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += sorted[k].1;
                let n_left = k + 1;
                let n_right = n - n_left;
                if n_left < min_leaf {
                    continue;
                }
                if n_right < min_leaf {
                    break;
                }
                let (a, b) = (sorted[k].0, sorted[k + 1].0);
                if a >= b {
                    continue;
                }
                let right_sum = total - left_sum;
                // maximizing this is equivalent to maximizing variance reduction
                let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
                if score > parent_score && best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: midpoint(a, b),
                        score,
                    });
                }
            }
        }
        best
    }
}

/// Midpoint of `a < b` that still satisfies `a <= m < b`.
fn midpoint<T: Real>(a: T, b: T) -> T {
    let m = a + (b - a) / (T::one() + T::one());
    if m >= b {
        a
    } else {
        m
    }
}

/// Stable in-place partition; returns the count of rows satisfying `pred`.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| pred(i));
    let mid = yes.len();
    rows[..mid].copy_from_slice(&yes);
    rows[mid..].copy_from_slice(&no);
    mid
}

/// Trains a forest. Trees are grown in parallel; the result depends only
/// on the samples and params.
pub fn rf_train<T: Real>(samples: &[PixelSample<T>], params: &RfParams) -> Result<RandomForestModel<T>> {
    params.validate()?;
    let n = samples.len();
    if n < params.min_samples() {
        return Err(Error::TooFewSamples {
            found: n,
            required: params.min_samples(),
        });
    }
    for (index, s) in samples.iter().enumerate() {
        if s.features.iter().any(|v| !v.is_finite()) || !s.target.is_finite() {
            return Err(Error::InvalidSample { index, value: f64::NAN });
        }
    }
    let xs: Vec<[T; NUM_FEATURES]> = samples.iter().map(|s| s.features).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.target.to_f64_lossy()).collect();
    let grower = Grower {
        xs: &xs,
        ys: &ys,
        params,
    };
    let m = params.bootstrap_size(n);
    let trees: Vec<RegressionTree<T>> = (0..params.num_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let idx = draw_bootstrap(&mut rng, m, n);
            grower.grow(&mut rng, idx)
        })
        .collect();

    let mut model = RandomForestModel {
        trees,
        params: *params,
        num_train_samples: n,
        oob_error: 0.0,
        importances: [0.0; NUM_FEATURES],
    };
    model.oob_error = oob_mse(&model, &xs, &ys)?;
    model.importances = permutation_importance(&model, &xs, &ys)?;
    Ok(model)
}

/// Out-of-bag MSE: each sample is scored by the mean of the trees that did
/// not see it; samples in every bootstrap are skipped.
fn oob_mse<T: Real>(model: &RandomForestModel<T>, xs: &[[T; NUM_FEATURES]], ys: &[f64]) -> Result<f64> {
    let n = xs.len();
    let per_tree: Vec<Vec<(usize, f64)>> = model
        .trees
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            out_of_bag_indices(&model.params, t, n)
                .into_iter()
                .map(|i| (i, tree.predict(&xs[i]).to_f64_lossy() - ys[i]))
                .collect()
        })
        .collect();
    // residuals are averaged directly so exact fits give exactly zero
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for preds in &per_tree {
        for &(i, p) in preds {
            sum[i] += p;
            count[i] += 1;
        }
    }
    let (mut se, mut scored) = (0.0, 0usize);
    for i in 0..n {
        if count[i] > 0 {
            let e = sum[i] / count[i] as f64;
            se += e * e;
            scored += 1;
        }
    }
    if scored == 0 {
        return Err(Error::Unscorable("no out-of-bag samples"));
    }
    Ok(se / scored as f64)
}

fn permutation_importance<T: Real>(
    model: &RandomForestModel<T>,
    xs: &[[T; NUM_FEATURES]],
    ys: &[f64],
) -> Result<[f64; NUM_FEATURES]> {
    let n = xs.len();
    let per_tree: Vec<Option<[f64; NUM_FEATURES]>> = model
        .trees
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            let oob = out_of_bag_indices(&model.params, t, n);
            if oob.is_empty() {
                return None;
            }
            let mse = |rows: &mut dyn Iterator<Item = ([T; NUM_FEATURES], f64)>| {
                let mut acc = 0.0;
                for (x, y) in rows {
                    let e = tree.predict(&x).to_f64_lossy() - y;
                    acc += e * e;
                }
                acc / oob.len() as f64
            };
            let base = mse(&mut oob.iter().map(|&i| (xs[i], ys[i])));
            let mut deltas = [0.0; NUM_FEATURES];
            for (j, d) in deltas.iter_mut().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(model.params.seed);
                rng.set_stream(PERMUTATION_STREAM_BASE + (t * NUM_FEATURES + j) as u64);
                let mut donors = oob.clone();
                donors.shuffle(&mut rng);
                let permuted = mse(&mut oob.iter().zip(&donors).map(|(&i, &k)| {
                    let mut x = xs[i];
                    x[j] = xs[k][j];
                    (x, ys[i])
                }));
                *d = permuted - base;
            }
            Some(deltas)
        })
        .collect();
    let mut total = [0.0; NUM_FEATURES];
    let mut trees_used = 0usize;
    for d in per_tree.into_iter().flatten() {
        for j in 0..NUM_FEATURES {
            total[j] += d[j];
        }
        trees_used += 1;
    }
    if trees_used == 0 {
        return Err(Error::Unscorable("no tree has out-of-bag samples"));
    }
    let raw = total.map(|v| (v / trees_used as f64).max(0.0));
    let top = raw.iter().copied().fold(0.0, f64::max);
    // every feature irrelevant (e.g. a constant target): all zeros
    Ok(if top > 0.0 { raw.map(|v| v / top) } else { raw })
}

/// Recomputes OOB permutation importance for a model on its own training
/// set.
pub fn rf_oob_importance<T: Real>(
    model: &RandomForestModel<T>,
    samples: &[PixelSample<T>],
) -> Result<[f64; NUM_FEATURES]> {
    if samples.len() != model.num_train_samples {
        return Err(Error::LengthMismatch {
            what: "training samples",
            left: samples.len(),
            right: model.num_train_samples,
        });
    }
    let xs: Vec<[T; NUM_FEATURES]> = samples.iter().map(|s| s.features).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.target.to_f64_lossy()).collect();
    permutation_importance(model, &xs, &ys)
}

/// Fused saliency: per-pixel forest mean, then normalized to `[0, 1]`.
pub fn rf_predict<T: Real>(model: &RandomForestModel<T>, stack: &FeatureStack<T>) -> Field2D<T> {
    model.predict_raw(stack).normalize01()
}
