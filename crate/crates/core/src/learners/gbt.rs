//! Multiclass gradient-boosted regression trees with second-order leaf
//! values.
//!
//! Each round computes softmax probabilities `p` from the current scores,
//! gradients `g_k = p_k − 1[y = k]` and hessians `h_k = p_k (1 − p_k)`, and
//! fits one tree per class. Leaves take the Newton value `−G / (H + λ)` and
//! splits maximize `½·[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CoarseLabel, ProbDist, NUM_CLASSES};
use crate::learners::tree::{grow, ColumnIndex, Criterion, GrowParams, Tree};
use crate::sparse::{CsrMatrix, RowView};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    /// Minimum hessian sum in each child of a split.
    pub min_child_weight: f64,
    /// Boosting uses no row or column subsampling, so the fit does not
    /// depend on the seed; it is kept so ensembles can reseed members
    /// uniformly.
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_rounds: 200,
            learning_rate: 0.1,
            max_depth: 6,
            lambda: 1.0,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

impl GbtConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("gbt learning_rate must be >= 0".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("gbt lambda must be >= 0".into()));
        }
        if !(self.min_child_weight >= 0.0) {
            return Err(Error::Config("gbt min_child_weight must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: [f64; NUM_CLASSES],
    /// `rounds[r][k]` is round `r`'s tree for class `k`; leaves already
    /// include the learning rate.
    pub rounds: Vec<Vec<Tree<f64>>>,
    pub dim: usize,
}

impl GbtModel {
    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn scores(&self, x: RowView<'_>) -> [f64; NUM_CLASSES] {
        let mut s = self.base_score;
        for round in &self.rounds {
            for (k, t) in round.iter().enumerate() {
                s[k] += t.leaf(x);
            }
        }
        s
    }

    pub fn predict_proba(&self, x: RowView<'_>) -> ProbDist {
        ProbDist::softmax(&self.scores(x))
    }
}

struct Newton<'a> {
    grad: &'a [f64],
    hess: &'a [f64],
    lambda: f64,
    min_child_weight: f64,
}

impl Newton<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.lambda)
    }
}

impl Criterion for Newton<'_> {
    /// `(G, H, rows)`
    type Stats = [f64; 3];
    type Leaf = f64;

    fn add_row(&self, s: &mut Self::Stats, row: usize) {
        s[0] += self.grad[row];
        s[1] += self.hess[row];
        s[2] += 1.0;
    }

    fn add(&self, a: &mut Self::Stats, b: &Self::Stats) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }

    fn sub(&self, a: &Self::Stats, b: &Self::Stats) -> Self::Stats {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    fn weight(&self, s: &Self::Stats) -> f64 {
        s[2]
    }

    fn child_ok(&self, s: &Self::Stats) -> bool {
        s[2] > 0.0 && s[1] >= self.min_child_weight
    }

    fn is_pure(&self, _: &Self::Stats) -> bool {
        false
    }

    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> f64 {
        0.5 * (self.score(left[0], left[1]) + self.score(right[0], right[1]) - self.score(parent[0], parent[1]))
    }

    fn leaf(&self, s: &Self::Stats) -> f64 {
        -s[0] / (s[1] + self.lambda)
    }
}

fn log_loss(scores: &[[f64; NUM_CLASSES]], y: &[CoarseLabel]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(y)
        .map(|(s, l)| {
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - s[l.index()]
        })
        .sum();
    total / y.len() as f64
}

/// Returns the model and the training log-loss before the first round and
/// after each round.
pub(crate) fn fit(x: &CsrMatrix, y: &[CoarseLabel], config: &GbtConfig) -> Result<(GbtModel, Vec<f64>)> {
    let n = y.len();
    let cols = ColumnIndex::new(x);
    let rows: Vec<usize> = (0..n).collect();
    let params = GrowParams {
        max_depth: config.max_depth,
        min_split_weight: 2.0,
        min_gain: f64::MIN_POSITIVE,
    };
    let base_score = [0.0; NUM_CLASSES];
    let mut scores = vec![base_score; n];
    let mut losses = vec![log_loss(&scores, y)];
    let mut rounds = Vec::with_capacity(config.n_rounds);
    for round in 0..config.n_rounds {
        let probs: Vec<ProbDist> = scores.iter().map(ProbDist::softmax).collect();
        let trees = util::par_map(NUM_CLASSES, |k| {
            let grad: Vec<f64> = probs
                .iter()
                .zip(y)
                .map(|(p, l)| p.0[k] - if l.index() == k { 1.0 } else { 0.0 })
                .collect();
            let hess: Vec<f64> = probs.iter().map(|p| p.0[k] * (1.0 - p.0[k])).collect();
            let crit = Newton {
                grad: &grad,
                hess: &hess,
                lambda: config.lambda,
                min_child_weight: config.min_child_weight,
            };
            let (tree, row_leaf) = grow(x, &cols, &rows, &crit, params, None);
            (tree.map_leaves(|w| config.learning_rate * w), row_leaf)
        });
        let mut round_trees = Vec::with_capacity(NUM_CLASSES);
        for (k, (tree, row_leaf)) in trees.into_iter().enumerate() {
            let leaf_value = |i: usize| match &tree.nodes[i] {
                crate::learners::tree::Node::Leaf(v) => *v,
                crate::learners::tree::Node::Split { .. } => unreachable!("rows end in leaves"),
            };
            if tree
                .nodes
                .iter()
                .any(|nd| matches!(nd, crate::learners::tree::Node::Leaf(v) if !v.is_finite()))
            {
                return Err(Error::Fit(format!(
                    "gbt round {} class {}: non-finite leaf value",
                    round + 1,
                    k
                )));
            }
            for (s, &leaf) in scores.iter_mut().zip(&row_leaf) {
                s[k] += leaf_value(leaf as usize);
            }
            round_trees.push(tree);
        }
        rounds.push(round_trees);
        losses.push(log_loss(&scores, y));
    }
    Ok((
        GbtModel {
            base_score,
            rounds,
            dim: x.n_cols(),
        },
        losses,
    ))
}
