//! Probabilistic multiclass classifiers over sparse TF-IDF rows.
//!
//! Every learner is fitted with [`LearnerConfig::fit`] and produces a
//! [`TrainedLearner`] whose `predict_proba` always returns a valid
//! [`ProbDist`].

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CoarseLabel, ProbDist, NUM_CLASSES};
use crate::sparse::{CsrMatrix, RowView};
use crate::util;

pub mod forest;
pub mod gbt;
pub mod logistic;
pub mod naive_bayes;
pub mod svm;
pub mod tree;

pub use forest::{FeatureRule, ForestConfig, ForestModel};
pub use gbt::{GbtConfig, GbtModel};
pub use logistic::{logreg_gradient, logreg_objective, LogRegConfig, LogRegModel};
pub use naive_bayes::{NbConfig, NbModel};
pub use svm::{Calibration, SvmConfig, SvmModel};
pub use tree::{TreeConfig, TreeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    #[serde(rename = "nb")]
    NaiveBayes(NbConfig),
    #[serde(rename = "logreg")]
    LogReg(LogRegConfig),
    Svm(SvmConfig),
    Tree(TreeConfig),
    Forest(ForestConfig),
    Gbt(GbtConfig),
}

impl LearnerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerConfig::NaiveBayes(_) => "nb",
            LearnerConfig::LogReg(_) => "logreg",
            LearnerConfig::Svm(_) => "svm",
            LearnerConfig::Tree(_) => "tree",
            LearnerConfig::Forest(_) => "forest",
            LearnerConfig::Gbt(_) => "gbt",
        }
    }

    /// Default configuration for a learner name as printed by [`Self::name`].
    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "nb" => LearnerConfig::NaiveBayes(NbConfig::default()),
            "logreg" => LearnerConfig::LogReg(LogRegConfig::default()),
            "svm" => LearnerConfig::Svm(SvmConfig::default()),
            "tree" => LearnerConfig::Tree(TreeConfig::default()),
            "forest" => LearnerConfig::Forest(ForestConfig::default()),
            "gbt" => LearnerConfig::Gbt(GbtConfig::default()),
            _ => return None,
        })
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            LearnerConfig::Svm(c) => Some(c.seed),
            LearnerConfig::Forest(c) => Some(c.seed),
            LearnerConfig::Gbt(c) => Some(c.seed),
            _ => None,
        }
    }

    /// Same config with its seed (if any) replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        match &mut c {
            LearnerConfig::Svm(s) => s.seed = seed,
            LearnerConfig::Forest(f) => f.seed = seed,
            LearnerConfig::Gbt(g) => g.seed = seed,
            _ => {}
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerConfig::NaiveBayes(c) => c.validate(),
            LearnerConfig::LogReg(c) => c.validate(),
            LearnerConfig::Svm(c) => c.validate(),
            LearnerConfig::Tree(c) => c.validate(),
            LearnerConfig::Forest(c) => c.validate(),
            LearnerConfig::Gbt(c) => c.validate(),
        }
    }

    pub fn fit(&self, x: &CsrMatrix, y: &[CoarseLabel]) -> Result<(TrainedLearner, FitReport)> {
        self.validate()?;
        check_training_set(x, y)?;
        let start = util::now();
        let mut report = FitReport::new(self.name());
        report.absent_classes = absent_classes(y);
        let model = match self {
            LearnerConfig::NaiveBayes(c) => TrainedLearner::NaiveBayes(naive_bayes::fit(x, y, c)?),
            LearnerConfig::LogReg(c) => {
                let (m, loss) = logistic::fit(x, y, c)?;
                report.final_loss = Some(loss);
                TrainedLearner::LogReg(m)
            }
            LearnerConfig::Svm(c) => {
                let (m, notes) = svm::fit(x, y, c)?;
                report.degradations.extend(notes);
                TrainedLearner::Svm(m)
            }
            LearnerConfig::Tree(c) => TrainedLearner::Tree(tree::fit(x, y, c)),
            LearnerConfig::Forest(c) => TrainedLearner::Forest(forest::fit(x, y, c)),
            LearnerConfig::Gbt(c) => {
                let (m, losses) = gbt::fit(x, y, c)?;
                report.final_loss = losses.last().copied();
                TrainedLearner::Gbt(m)
            }
        };
        if !report.absent_classes.is_empty() {
            let names: Vec<&str> = report.absent_classes.iter().map(|c| c.name()).collect();
            report
                .degradations
                .push(format!("classes absent from training labels: {}", names.join(", ")));
        }
        report.train_seconds = util::elapsed_secs(start);
        Ok((model, report))
    }
}

/// Training summary. Never part of a saved model, so timings do not affect
/// bundle bytes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub train_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub absent_classes: Vec<CoarseLabel>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub degradations: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<FitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<FoldReport>,
}

impl FitReport {
    pub fn new(model: &str) -> Self {
        FitReport {
            model: model.to_string(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldReport {
    pub k: usize,
    pub stratified: bool,
    pub fold_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainedLearner {
    #[serde(rename = "nb")]
    NaiveBayes(NbModel),
    #[serde(rename = "logreg")]
    LogReg(LogRegModel),
    Svm(SvmModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Gbt(GbtModel),
}

impl TrainedLearner {
    pub fn name(&self) -> &'static str {
        match self {
            TrainedLearner::NaiveBayes(_) => "nb",
            TrainedLearner::LogReg(_) => "logreg",
            TrainedLearner::Svm(_) => "svm",
            TrainedLearner::Tree(_) => "tree",
            TrainedLearner::Forest(_) => "forest",
            TrainedLearner::Gbt(_) => "gbt",
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            TrainedLearner::NaiveBayes(m) => m.feature_dim(),
            TrainedLearner::LogReg(m) => m.feature_dim(),
            TrainedLearner::Svm(m) => m.feature_dim(),
            TrainedLearner::Tree(m) => m.feature_dim(),
            TrainedLearner::Forest(m) => m.feature_dim(),
            TrainedLearner::Gbt(m) => m.feature_dim(),
        }
    }

    /// Parameter shapes agree with the feature dimension and trees are well
    /// formed. Used after deserializing a model.
    pub fn validate(&self) -> Result<()> {
        let len = |what: &str, actual: usize, expected: usize| {
            if actual == expected {
                Ok(())
            } else {
                Err(Error::Format(format!(
                    "{what} has {actual} values, expected {expected}"
                )))
            }
        };
        match self {
            TrainedLearner::NaiveBayes(m) => len("nb likelihood table", m.log_likelihood.len(), NUM_CLASSES * m.dim),
            TrainedLearner::LogReg(m) => len("logreg weights", m.weights.len(), NUM_CLASSES * m.dim),
            TrainedLearner::Svm(m) => len("svm weights", m.weights.len(), NUM_CLASSES * (m.dim + 1)),
            TrainedLearner::Tree(m) => m.tree.check(m.dim),
            TrainedLearner::Forest(m) => {
                if m.trees.is_empty() {
                    return Err(Error::Format("forest has no trees".into()));
                }
                m.trees.iter().try_for_each(|t| t.check(m.dim))
            }
            TrainedLearner::Gbt(m) => {
                for round in &m.rounds {
                    len("gbt round", round.len(), NUM_CLASSES)?;
                    round.iter().try_for_each(|t| t.check(m.dim))?;
                }
                Ok(())
            }
        }
    }

    pub fn predict_proba(&self, x: RowView<'_>) -> Result<ProbDist> {
        check_dim(self.feature_dim(), x.dim)?;
        Ok(self.predict_proba_unchecked(x))
    }

    pub(crate) fn predict_proba_unchecked(&self, x: RowView<'_>) -> ProbDist {
        match self {
            TrainedLearner::NaiveBayes(m) => m.predict_proba(x),
            TrainedLearner::LogReg(m) => m.predict_proba(x),
            TrainedLearner::Svm(m) => m.predict_proba(x),
            TrainedLearner::Tree(m) => m.predict_proba(x),
            TrainedLearner::Forest(m) => m.predict_proba(x),
            TrainedLearner::Gbt(m) => m.predict_proba(x),
        }
    }

    pub fn predict(&self, x: RowView<'_>) -> Result<CoarseLabel> {
        Ok(self.predict_proba(x)?.argmax())
    }

    pub fn predict_proba_all(&self, x: &CsrMatrix) -> Result<Vec<ProbDist>> {
        check_dim(self.feature_dim(), x.n_cols())?;
        Ok(util::par_map(x.n_rows(), |i| self.predict_proba_unchecked(x.row(i))))
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) fn check_training_set(x: &CsrMatrix, y: &[CoarseLabel]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::Fit("training set is empty".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Fit(format!(
            "{} feature rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    Ok(())
}

pub fn class_counts(y: &[CoarseLabel]) -> [usize; NUM_CLASSES] {
    let mut c = [0; NUM_CLASSES];
    for l in y {
        c[l.index()] += 1;
    }
    c
}

fn absent_classes(y: &[CoarseLabel]) -> Vec<CoarseLabel> {
    let c = class_counts(y);
    CoarseLabel::ALL.into_iter().filter(|l| c[l.index()] == 0).collect()
}

/// Seeded k-fold partition. With `stratify`, each class is shuffled and
/// dealt round-robin so class proportions match across folds; the result
/// reports `stratified = false` when that would leave some fold without a
/// class present in the data, in which case rows are dealt unstratified.
pub fn k_folds(y: &[CoarseLabel], k: usize, seed: u64, stratify: bool) -> Result<(Vec<Vec<usize>>, bool)> {
    if k < 2 {
        return Err(Error::Config("k_folds must be at least 2".into()));
    }
    if y.len() < k {
        return Err(Error::Fit(format!("{} rows cannot be split into {k} folds", y.len())));
    }
    let mut rng = util::rng(seed, 0xF01D);
    if stratify {
        let counts = class_counts(y);
        if counts.iter().all(|&c| c == 0 || c >= k) {
            let mut folds = vec![Vec::new(); k];
            let mut offset = 0;
            for class in CoarseLabel::ALL {
                let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
                rows.shuffle(&mut rng);
                for (j, r) in rows.iter().enumerate() {
                    folds[(offset + j) % k].push(*r);
                }
                offset += rows.len();
            }
            for f in &mut folds {
                f.sort_unstable();
            }
            return Ok((folds, true));
        }
    }
    let mut rows: Vec<usize> = (0..y.len()).collect();
    rows.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (j, r) in rows.into_iter().enumerate() {
        folds[j % k].push(r);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok((folds, false))
}

/// Rows not in `fold`, ascending.
pub fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; n];
    for &i in fold {
        mark[i] = true;
    }
    (0..n).filter(|&i| !mark[i]).collect()
}
