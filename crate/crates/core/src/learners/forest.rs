//! Random forest of CART trees.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CoarseLabel, ProbDist, NUM_CLASSES};
use crate::learners::tree::{grow, smoothed, ColumnIndex, Gini, GrowParams, Tree};
use crate::sparse::{CsrMatrix, RowView};
use crate::util;

/// How many features each split may consider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRule {
    /// `⌈√d⌉`
    Sqrt,
    /// `⌈fraction·d⌉`, at least one.
    Fraction(f64),
}

impl FeatureRule {
    pub fn features_per_split(&self, d: usize) -> usize {
        let k = match self {
            FeatureRule::Sqrt => (d as f64).sqrt().ceil() as usize,
            FeatureRule::Fraction(f) => (f * d as f64).ceil() as usize,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub feature_rule: FeatureRule,
    pub seed: u64,
    pub bootstrap: bool,
    pub min_samples_split: usize,
    pub min_gain: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: 40,
            feature_rule: FeatureRule::Sqrt,
            seed: 0,
            bootstrap: true,
            min_samples_split: 2,
            min_gain: 1e-7,
        }
    }
}

impl ForestConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("forest n_trees must be at least 1".into()));
        }
        if let FeatureRule::Fraction(f) = self.feature_rule {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!(
                    "forest feature fraction must be in (0, 1], got {f}"
                )));
            }
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("forest min_samples_split must be at least 2".into()));
        }
        if !(self.min_gain >= 0.0) {
            return Err(Error::Config("forest min_gain must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree<[f64; NUM_CLASSES]>>,
    pub dim: usize,
}

impl ForestModel {
    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn predict_proba(&self, x: RowView<'_>) -> ProbDist {
        let mut acc = [0.0; NUM_CLASSES];
        for t in &self.trees {
            let p = smoothed(t.leaf(x));
            for (a, v) in acc.iter_mut().zip(p.0) {
                *a += v;
            }
        }
        let n = self.trees.len() as f64;
        ProbDist(acc.map(|a| a / n))
    }
}

pub(crate) fn fit(x: &CsrMatrix, y: &[CoarseLabel], config: &ForestConfig) -> ForestModel {
    let cols = ColumnIndex::new(x);
    let n = y.len();
    let d = x.n_cols();
    // Columns that are zero in every row can never split, so they do not
    // count towards the per-split feature budget.
    let used = cols.n_nonempty_cols();
    let k = config.feature_rule.features_per_split(used);
    let params = GrowParams {
        max_depth: config.max_depth,
        min_split_weight: config.min_samples_split as f64,
        min_gain: config.min_gain,
    };
    let trees = util::par_map(config.n_trees, |t| {
        let mut rng = util::rng(config.seed, t as u64);
        let weights = config.bootstrap.then(|| {
            let mut w = vec![0.0; n];
            for _ in 0..n {
                w[rng.gen_range(0..n)] += 1.0;
            }
            w
        });
        let active: Vec<usize> = match &weights {
            Some(w) => (0..n).filter(|&i| w[i] > 0.0).collect(),
            None => (0..n).collect(),
        };
        let crit = Gini {
            labels: y,
            weights: weights.as_deref(),
            total_weight: n as f64,
        };
        let sampler = (k < used).then_some((&mut rng, k));
        grow(x, &cols, &active, &crit, params, sampler).0
    });
    ForestModel { trees, dim: d }
}
