//! Multinomial naive Bayes with TF-IDF weights as fractional counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CoarseLabel, ProbDist, NUM_CLASSES};
use crate::sparse::{CsrMatrix, RowView};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbConfig {
    pub alpha: f64,
}

impl Default for NbConfig {
    fn default() -> Self {
        NbConfig { alpha: 1.0 }
    }
}

impl NbConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("nb alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    /// `ln(count_k / n)`; negative infinity for classes absent from training.
    pub log_prior: [f64; NUM_CLASSES],
    /// Row-major `[class][feature]` log-likelihoods.
    pub log_likelihood: Vec<f64>,
    pub dim: usize,
}

pub(crate) fn fit(x: &CsrMatrix, y: &[CoarseLabel], config: &NbConfig) -> Result<NbModel> {
    let d = x.n_cols();
    let n = y.len() as f64;
    let mut counts = [0usize; NUM_CLASSES];
    let mut feature = vec![0.0; NUM_CLASSES * d];
    for (row, label) in x.rows().zip(y) {
        let k = label.index();
        counts[k] += 1;
        for (j, v) in row.iter() {
            feature[k * d + j] += v;
        }
    }
    let log_prior = counts.map(|c| if c == 0 { f64::NEG_INFINITY } else { (c as f64 / n).ln() });
    let alpha = config.alpha;
    let mut log_likelihood = feature;
    for k in 0..NUM_CLASSES {
        let block = &mut log_likelihood[k * d..(k + 1) * d];
        let denom = (block.iter().sum::<f64>() + alpha * d as f64).ln();
        for v in block.iter_mut() {
            *v = (*v + alpha).ln() - denom;
        }
    }
    Ok(NbModel {
        log_prior,
        log_likelihood,
        dim: d,
    })
}

impl NbModel {
    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn joint_log_scores(&self, x: RowView<'_>) -> [f64; NUM_CLASSES] {
        let mut s = self.log_prior;
        for (k, score) in s.iter_mut().enumerate() {
            if *score == f64::NEG_INFINITY {
                continue;
            }
            let block = &self.log_likelihood[k * self.dim..(k + 1) * self.dim];
            *score += x.dot(block);
        }
        s
    }

    pub fn predict_proba(&self, x: RowView<'_>) -> ProbDist {
        ProbDist::softmax(&self.joint_log_scores(x))
    }

    pub fn log_likelihood(&self, class: CoarseLabel, feature: usize) -> f64 {
        self.log_likelihood[class.index() * self.dim + feature]
    }
}
