//! From-scratch multiclass gradient-boosted regression trees.
//!
//! One shallow regression tree per class per round is fit to the
//! softmax/cross-entropy pseudo-residuals `z - P`, and the class score
//! vector is updated as `F <- F + nu * h` with fixed shrinkage `nu`.
//! Base scores are the log empirical class frequencies, so the round-zero
//! classifier is the training majority class.
//!
//! Split search is exact: every midpoint between consecutive distinct
//! sorted feature values is a candidate, scored by squared-error
//! reduction, first-best wins (feature order, then position). There is no
//! randomness anywhere — boosting is deterministic by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::BinLabel;
use crate::predictor::BinPredictor;
use crate::scalar::Real;

/// A node needs at least this many samples to be considered for a split.
pub const MIN_SPLIT_SAMPLES: usize = 2;
/// Best squared-error reduction must exceed this to justify a split.
pub const MIN_SPLIT_GAIN: f64 = 1e-12;
/// Class-frequency floor inside the log of the base scores.
pub const FREQ_FLOOR: f64 = 1e-12;

/// One node of a [`RegressionTree`], stored in preorder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode<T> {
    Split { feature: usize, threshold: T, left: usize, right: usize },
    Leaf { value: T },
}

/// Axis-aligned binary regression tree; `x[feature] <= threshold` goes
/// left. Node 0 is the root and children always follow their parent
/// (preorder), so the serialized form is a preorder dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<T> {
    pub nodes: Vec<TreeNode<T>>,
}

impl<T: Real> RegressionTree<T> {
    pub fn predict(&self, x: &[T]) -> T {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Longest root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[TreeNode<T>], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Structural sanity for deserialized trees: child indices in range
    /// and acyclic (preorder implies children follow parents), leaf
    /// values and thresholds finite.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidInput("empty tree".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                TreeNode::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(Error::InvalidInput(format!("leaf {i} not finite")));
                    }
                }
                TreeNode::Split { threshold, left, right, .. } => {
                    if !threshold.is_finite() {
                        return Err(Error::InvalidInput(format!("threshold {i} not finite")));
                    }
                    if *left <= i || *right <= i || *left >= self.nodes.len()
                        || *right >= self.nodes.len()
                    {
                        return Err(Error::InvalidInput(format!("node {i} child indices invalid")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Log empirical class frequencies (floored at [`FREQ_FLOOR`]): the
/// cross-entropy-minimising constant scores, up to the additive constant
/// this choice fixes.
pub fn initial_scores<T: Real>(labels: &[BinLabel], n_classes: usize) -> Result<Vec<T>> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("need at least one label".into()));
    }
    let mut counts = vec![0usize; n_classes];
    for l in labels {
        let c = l.number() as usize;
        if c > n_classes {
            return Err(Error::InvalidInput(format!("label {c} exceeds {n_classes} classes")));
        }
        counts[c - 1] += 1;
    }
    let n = T::of(labels.len() as f64);
    Ok(counts
        .iter()
        .map(|&c| (T::of(c as f64) / n).max(T::of(FREQ_FLOOR)).ln())
        .collect())
}

fn softmax<T: Real>(scores: &[T]) -> Vec<T> {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: T = out.iter().copied().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Pseudo-residual `r = z - P` for one sample: the negative gradient of
/// cross-entropy with respect to the class scores.
pub fn residuals<T: Real>(scores: &[T], true_class: BinLabel) -> Result<Vec<T>> {
    let c = true_class.number() as usize;
    if c > scores.len() {
        return Err(Error::InvalidInput(format!(
            "class {c} out of range for {} scores",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let mut r = softmax(scores);
    for v in &mut r {
        *v = -*v;
    }
    r[c - 1] += T::one();
    Ok(r)
}

struct TreeFitter<'a, T> {
    xs: &'a [Vec<T>],
    targets: &'a [T],
    /// Per feature, all sample indices sorted by that feature's value.
    presorted: &'a [Vec<usize>],
    min_gain: T,
    nodes: Vec<TreeNode<T>>,
    member: Vec<bool>,
}

impl<T: Real> TreeFitter<'_, T> {
    fn fit_node(&mut self, members: &[usize], depth_left: usize) -> usize {
        let n = members.len();
        let total: T = members.iter().map(|&i| self.targets[i]).sum();
        let mean = total / T::of(n as f64);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: mean });
        if depth_left == 0 || n < MIN_SPLIT_SAMPLES {
            return slot;
        }

        self.member.iter_mut().for_each(|m| *m = false);
        for &i in members {
            self.member[i] = true;
        }

        // Best split maximises Sl^2/nl + Sr^2/nr; subtracting S^2/n turns
        // that into the squared-error reduction.
        let mut best: Option<(usize, T, T)> = None; // (feature, threshold, score)
        for (f, order) in self.presorted.iter().enumerate() {
            let mut left_s = T::zero();
            let mut prev: Option<T> = None;
            for (left_n, &i) in order.iter().filter(|&&i| self.member[i]).enumerate() {
                let v = self.xs[i][f];
                if let Some(pv) = prev {
                    if v > pv {
                        let right_n = n - left_n;
                        let right_s = total - left_s;
                        let score = left_s * left_s / T::of(left_n as f64)
                            + right_s * right_s / T::of(right_n as f64);
                        if best.is_none_or(|(_, _, b)| score > b) {
                            // Midpoint of adjacent floats can round up to
                            // the right value; fall back to the left value
                            // so `<=` still partitions as intended.
                            let half = T::of(0.5);
                            let mut thr = (pv + v) * half;
                            if thr >= v {
                                thr = pv;
                            }
                            best = Some((f, thr, score));
                        }
                    }
                }
                left_s += self.targets[i];
                prev = Some(v);
            }
        }

        let Some((feature, threshold, score)) = best else {
            return slot; // all feature values identical
        };
        if !(score - total * total / T::of(n as f64) > self.min_gain) {
            return slot;
        }

        let (left_members, right_members): (Vec<usize>, Vec<usize>) =
            members.iter().partition(|&&i| self.xs[i][feature] <= threshold);
        let left = self.fit_node(&left_members, depth_left - 1);
        let right = self.fit_node(&right_members, depth_left - 1);
        self.nodes[slot] = TreeNode::Split { feature, threshold, left, right };
        slot
    }
}

fn presort_features<T: Real>(xs: &[Vec<T>]) -> Vec<Vec<usize>> {
    let d = xs[0].len();
    (0..d)
        .map(|f| {
            let mut order: Vec<usize> = (0..xs.len()).collect();
            order.sort_by(|&a, &b| {
                xs[a][f].partial_cmp(&xs[b][f]).expect("finite feature values")
            });
            order
        })
        .collect()
}

fn check_matrix<T: Real>(xs: &[Vec<T>]) -> Result<usize> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let d = xs[0].len();
    if d == 0 {
        return Err(Error::InvalidInput("need at least one feature".into()));
    }
    for (i, row) in xs.iter().enumerate() {
        if row.len() != d {
            return Err(Error::InvalidInput(format!("row {i} has {} features, not {d}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("row {i} has non-finite features")));
        }
    }
    Ok(d)
}

/// Fits one greedy regression tree of at most `max_depth` levels to
/// scalar targets. Leaves hold target means; a node splits only when the
/// best squared-error reduction exceeds [`MIN_SPLIT_GAIN`] and it holds
/// at least [`MIN_SPLIT_SAMPLES`] samples.
pub fn fit_tree<T: Real>(
    xs: &[Vec<T>],
    targets: &[T],
    max_depth: usize,
) -> Result<RegressionTree<T>> {
    check_matrix(xs)?;
    if targets.len() != xs.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} targets",
            xs.len(),
            targets.len()
        )));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("targets must be finite".into()));
    }
    let presorted = presort_features(xs);
    Ok(fit_tree_presorted(xs, targets, max_depth, &presorted))
}

/// Core fitting with the per-feature sort orders already computed, so
/// boosting can share one sort across all rounds and classes.
fn fit_tree_presorted<T: Real>(
    xs: &[Vec<T>],
    targets: &[T],
    max_depth: usize,
    presorted: &[Vec<usize>],
) -> RegressionTree<T> {
    let members: Vec<usize> = (0..xs.len()).collect();
    let mut fitter = TreeFitter {
        xs,
        targets,
        presorted,
        min_gain: T::of(MIN_SPLIT_GAIN),
        nodes: Vec::new(),
        member: vec![false; xs.len()],
    };
    fitter.fit_node(&members, max_depth);
    RegressionTree { nodes: fitter.nodes }
}

/// Boosting hyperparameters. Defaults follow the published setup:
/// 100 rounds of depth-3 trees with shrinkage 0.3 over 50 classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtTrainConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    /// Shrinkage nu; zero is allowed and leaves the base scores untouched.
    pub shrinkage: f64,
    pub n_classes: usize,
}

impl Default for GbtTrainConfig {
    fn default() -> Self {
        GbtTrainConfig { n_rounds: 100, max_depth: 3, shrinkage: 0.3, n_classes: 50 }
    }
}

impl GbtTrainConfig {
    fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::InvalidInput("need at least one round".into()));
        }
        if !(self.shrinkage >= 0.0) || !self.shrinkage.is_finite() {
            return Err(Error::InvalidInput("shrinkage must be finite and >= 0".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidInput("need at least two classes".into()));
        }
        Ok(())
    }
}

/// The boosted classifier: base scores plus `n_rounds` batches of one
/// tree per class, combined as `F = F0 + nu * sum h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel<T> {
    pub input_len: usize,
    pub n_classes: usize,
    pub shrinkage: T,
    pub base_scores: Vec<T>,
    /// `rounds[m][c]`: round `m`'s tree for class `c + 1`.
    pub rounds: Vec<Vec<RegressionTree<T>>>,
}

impl<T: Real> GbtModel<T> {
    /// Class score vector `F(x)`.
    pub fn decision_scores(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_len {
            return Err(Error::InvalidInput(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_len
            )));
        }
        let mut scores = self.base_scores.clone();
        for round in &self.rounds {
            for (c, tree) in round.iter().enumerate() {
                scores[c] += self.shrinkage * tree.predict(x);
            }
        }
        Ok(scores)
    }

    /// Softmax of the decision scores.
    pub fn class_probabilities(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.decision_scores(x)?))
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_scores.len() != self.n_classes || self.n_classes < 2 {
            return Err(Error::InvalidInput("base score length must equal n_classes".into()));
        }
        if !self.shrinkage.is_finite() || self.shrinkage < T::zero() {
            return Err(Error::InvalidInput("shrinkage must be finite and >= 0".into()));
        }
        if self.base_scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("base scores must be finite".into()));
        }
        for round in &self.rounds {
            if round.len() != self.n_classes {
                return Err(Error::InvalidInput("each round needs one tree per class".into()));
            }
            for tree in round {
                tree.validate()?;
            }
        }
        Ok(())
    }
}

/// What [`boost`] hands back: the model plus the mean cross-entropy after
/// every round.
#[derive(Clone, Debug, PartialEq)]
pub struct GbtTrainOutput<T> {
    pub model: GbtModel<T>,
    /// `losses[m]`: mean training cross-entropy after round `m + 1`.
    pub losses: Vec<f64>,
}

/// Trains by gradient boosting: each round computes the pseudo-residuals
/// of every sample from the current scores, fits one tree per class to
/// that class's residual column, and applies all trees at once with
/// shrinkage.
pub fn boost<T: Real>(
    xs: &[Vec<T>],
    labels: &[BinLabel],
    cfg: &GbtTrainConfig,
) -> Result<GbtTrainOutput<T>> {
    cfg.validate()?;
    let d = check_matrix(xs)?;
    if labels.len() != xs.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            xs.len(),
            labels.len()
        )));
    }
    let base: Vec<T> = initial_scores(labels, cfg.n_classes)?;
    let n = xs.len();
    let nu = T::of(cfg.shrinkage);
    let presorted = presort_features(xs);

    // Current score matrix F, one row per sample.
    let mut scores: Vec<Vec<T>> = vec![base.clone(); n];
    let mut rounds = Vec::with_capacity(cfg.n_rounds);
    let mut losses = Vec::with_capacity(cfg.n_rounds);
    let mut residual_cols: Vec<Vec<T>> = vec![vec![T::zero(); n]; cfg.n_classes];

    for _ in 0..cfg.n_rounds {
        for (j, row) in scores.iter().enumerate() {
            let r = residuals(row, labels[j])?;
            for (c, col) in residual_cols.iter_mut().enumerate() {
                col[j] = r[c];
            }
        }
        let round: Vec<RegressionTree<T>> = residual_cols
            .iter()
            .map(|col| fit_tree_presorted(xs, col, cfg.max_depth, &presorted))
            .collect();
        for (j, row) in scores.iter_mut().enumerate() {
            for (c, tree) in round.iter().enumerate() {
                row[c] += nu * tree.predict(&xs[j]);
            }
        }
        rounds.push(round);

        let mut loss_sum = T::zero();
        for (j, row) in scores.iter().enumerate() {
            let p = softmax(row)[labels[j].number() as usize - 1];
            loss_sum += -p.max(T::of(FREQ_FLOOR)).ln();
        }
        losses.push((loss_sum / T::of(n as f64)).as_f64());
    }

    Ok(GbtTrainOutput {
        model: GbtModel {
            input_len: d,
            n_classes: cfg.n_classes,
            shrinkage: nu,
            base_scores: base,
            rounds,
        },
        losses,
    })
}

crate::predictor::value_via_bin!(GbtModel);

impl<T: Real> BinPredictor<T> for GbtModel<T> {
    fn input_len(&self) -> usize {
        self.input_len
    }

    /// Argmax of softmax(F(x)); exact ties go to the lowest class.
    fn predict_bin(&self, features: &[T]) -> Result<BinLabel> {
        let probs = self.class_probabilities(features)?;
        let mut best = 0usize;
        for (i, p) in probs.iter().enumerate().skip(1) {
            if *p > probs[best] {
                best = i;
            }
        }
        Ok(BinLabel::of(best as u32 + 1))
    }
}
