//! Voting, bagging and stacking over the learners, plus the [`TrainedModel`]
//! union used by the rest of the crate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CoarseLabel, ProbDist, NUM_CLASSES};
use crate::learners::{
    check_dim, check_training_set, complement, k_folds, FitReport, FoldReport, GbtConfig, LearnerConfig, LogRegConfig,
    SvmConfig, TrainedLearner,
};
use crate::learners::{ForestConfig, NbConfig, TreeConfig};
use crate::sparse::{CsrMatrix, RowView, SparseVector};
use crate::util;

/// Weight of the summed-probability tie-breaker in hard-vote
/// distributions; smaller than any difference of one vote.
const HARD_TIE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VotingConfig {
    pub members: Vec<LearnerConfig>,
    pub mode: VoteMode,
    pub weights: Option<Vec<f64>>,
}

impl Default for VotingConfig {
    fn default() -> Self {
        VotingConfig {
            members: vec![
                LearnerConfig::Gbt(GbtConfig::default()),
                LearnerConfig::LogReg(LogRegConfig::default()),
                LearnerConfig::Svm(SvmConfig::default()),
            ],
            mode: VoteMode::Soft,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaggingConfig {
    pub base: LearnerConfig,
    pub n_estimators: usize,
    pub seed: u64,
    /// When false every member trains on the unmodified training set with
    /// the base config as given.
    pub bootstrap: bool,
}

impl Default for BaggingConfig {
    fn default() -> Self {
        BaggingConfig {
            base: LearnerConfig::Svm(SvmConfig::default()),
            n_estimators: 10,
            seed: 0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackingConfig {
    pub bases: Vec<LearnerConfig>,
    pub meta: LearnerConfig,
    pub k_folds: usize,
    pub seed: u64,
}

impl Default for StackingConfig {
    fn default() -> Self {
        StackingConfig {
            bases: vec![
                LearnerConfig::Forest(ForestConfig::default()),
                LearnerConfig::Gbt(GbtConfig::default()),
                LearnerConfig::Svm(SvmConfig::default()),
            ],
            meta: LearnerConfig::LogReg(LogRegConfig::default()),
            k_folds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleConfig {
    Voting(VotingConfig),
    Bagging(BaggingConfig),
    Stacking(StackingConfig),
}

/// Any trainable model: one learner or an ensemble. In JSON both share the
/// `kind` tag namespace (`"nb"`, ..., `"voting"`, `"bagging"`,
/// `"stacking"`).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Learner(LearnerConfig),
    Ensemble(EnsembleConfig),
}

impl<'de> Deserialize<'de> for ModelConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let value = serde_json::Value::deserialize(d)?;
        let kind = value
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| D::Error::custom("model config needs a string \"kind\" field"))?;
        let parsed = match kind {
            "voting" | "bagging" | "stacking" => serde_json::from_value(value).map(ModelConfig::Ensemble),
            _ => serde_json::from_value(value).map(ModelConfig::Learner),
        };
        parsed.map_err(D::Error::custom)
    }
}

/// The named model kinds the command line can train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    NaiveBayes,
    LogReg,
    Svm,
    Tree,
    Forest,
    Gbt,
    Voting,
    BaggingSvm,
    BaggingGbt,
    BaggingLogReg,
    Stacking,
}

impl ModelKind {
    pub const ALL: [ModelKind; 11] = [
        ModelKind::NaiveBayes,
        ModelKind::LogReg,
        ModelKind::Svm,
        ModelKind::Tree,
        ModelKind::Forest,
        ModelKind::Gbt,
        ModelKind::Voting,
        ModelKind::BaggingSvm,
        ModelKind::BaggingGbt,
        ModelKind::BaggingLogReg,
        ModelKind::Stacking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "nb",
            ModelKind::LogReg => "logreg",
            ModelKind::Svm => "svm",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Gbt => "gbt",
            ModelKind::Voting => "voting",
            ModelKind::BaggingSvm => "bagging-svm",
            ModelKind::BaggingGbt => "bagging-gbt",
            ModelKind::BaggingLogReg => "bagging-logreg",
            ModelKind::Stacking => "stacking",
        }
    }

    pub fn default_config(self) -> ModelConfig {
        let bagging = |base| {
            ModelConfig::Ensemble(EnsembleConfig::Bagging(BaggingConfig {
                base,
                ..Default::default()
            }))
        };
        match self {
            ModelKind::NaiveBayes => ModelConfig::Learner(LearnerConfig::NaiveBayes(NbConfig::default())),
            ModelKind::LogReg => ModelConfig::Learner(LearnerConfig::LogReg(LogRegConfig::default())),
            ModelKind::Svm => ModelConfig::Learner(LearnerConfig::Svm(SvmConfig::default())),
            ModelKind::Tree => ModelConfig::Learner(LearnerConfig::Tree(TreeConfig::default())),
            ModelKind::Forest => ModelConfig::Learner(LearnerConfig::Forest(ForestConfig::default())),
            ModelKind::Gbt => ModelConfig::Learner(LearnerConfig::Gbt(GbtConfig::default())),
            ModelKind::Voting => ModelConfig::Ensemble(EnsembleConfig::Voting(VotingConfig::default())),
            ModelKind::BaggingSvm => bagging(LearnerConfig::Svm(SvmConfig::default())),
            ModelKind::BaggingGbt => bagging(LearnerConfig::Gbt(GbtConfig::default())),
            ModelKind::BaggingLogReg => bagging(LearnerConfig::LogReg(LogRegConfig::default())),
            ModelKind::Stacking => ModelConfig::Ensemble(EnsembleConfig::Stacking(StackingConfig::default())),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
            Error::Config(format!(
                "unknown model kind {s:?} (expected one of {})",
                names.join(", ")
            ))
        })
    }
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Learner(l) => l.name(),
            ModelConfig::Ensemble(EnsembleConfig::Voting(_)) => "voting",
            ModelConfig::Ensemble(EnsembleConfig::Bagging(_)) => "bagging",
            ModelConfig::Ensemble(EnsembleConfig::Stacking(_)) => "stacking",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Learner(l) => l.validate(),
            ModelConfig::Ensemble(EnsembleConfig::Voting(v)) => {
                if v.members.is_empty() {
                    return Err(Error::Config("voting needs at least one member".into()));
                }
                if let Some(w) = &v.weights {
                    if w.len() != v.members.len() {
                        return Err(Error::Config(format!(
                            "voting has {} members but {} weights",
                            v.members.len(),
                            w.len()
                        )));
                    }
                    if w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                        return Err(Error::Config("voting weights must be positive".into()));
                    }
                }
                v.members.iter().try_for_each(LearnerConfig::validate)
            }
            ModelConfig::Ensemble(EnsembleConfig::Bagging(b)) => {
                if b.n_estimators == 0 {
                    return Err(Error::Config("bagging n_estimators must be at least 1".into()));
                }
                b.base.validate()
            }
            ModelConfig::Ensemble(EnsembleConfig::Stacking(s)) => {
                if s.bases.is_empty() {
                    return Err(Error::Config("stacking needs at least one base learner".into()));
                }
                if s.k_folds < 2 {
                    return Err(Error::Config("stacking k_folds must be at least 2".into()));
                }
                s.bases.iter().try_for_each(LearnerConfig::validate)?;
                s.meta.validate()
            }
        }
    }

    pub fn fit(&self, x: &CsrMatrix, y: &[CoarseLabel]) -> Result<(TrainedModel, FitReport)> {
        self.validate()?;
        check_training_set(x, y)?;
        let start = util::now();
        let (model, mut report) = match self {
            ModelConfig::Learner(l) => {
                let (m, r) = l.fit(x, y)?;
                (TrainedModel::Learner(m), r)
            }
            ModelConfig::Ensemble(EnsembleConfig::Voting(v)) => {
                let (m, r) = voting_fit(x, y, v)?;
                (TrainedModel::Voting(m), r)
            }
            ModelConfig::Ensemble(EnsembleConfig::Bagging(b)) => {
                let (m, r) = bagging_fit(x, y, b)?;
                (TrainedModel::Bagging(m), r)
            }
            ModelConfig::Ensemble(EnsembleConfig::Stacking(s)) => {
                let (m, r) = stacking_fit(x, y, s)?;
                (TrainedModel::Stacking(m), r)
            }
        };
        report.train_seconds = util::elapsed_secs(start);
        Ok((model, report))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingModel {
    pub members: Vec<TrainedLearner>,
    pub mode: VoteMode,
    /// Normalized to sum to one.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggingModel {
    pub members: Vec<TrainedLearner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingModel {
    pub bases: Vec<TrainedLearner>,
    pub meta: TrainedLearner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainedModel {
    Learner(TrainedLearner),
    Voting(VotingModel),
    Bagging(BaggingModel),
    Stacking(StackingModel),
}

/// Weighted mean of distributions. `weights` must sum to one.
pub fn vote_soft(dists: &[ProbDist], weights: &[f64]) -> ProbDist {
    let mut acc = [0.0; NUM_CLASSES];
    for (p, w) in dists.iter().zip(weights) {
        for (a, v) in acc.iter_mut().zip(p.0) {
            *a += w * v;
        }
    }
    let total: f64 = acc.iter().sum();
    ProbDist(acc.map(|a| a / total))
}

/// Majority label over member argmaxes; ties go to the label with the
/// larger summed member probability, then to the lowest class index.
pub fn vote_hard(dists: &[ProbDist]) -> CoarseLabel {
    hard_distribution(dists).argmax()
}

/// Vote shares with a tiny summed-probability tie-breaker, so that the
/// argmax of the result is exactly the hard-vote winner.
fn hard_distribution(dists: &[ProbDist]) -> ProbDist {
    let mut votes = [0.0; NUM_CLASSES];
    let mut mass = [0.0; NUM_CLASSES];
    for p in dists {
        votes[p.argmax().index()] += 1.0;
        for (m, v) in mass.iter_mut().zip(p.0) {
            *m += v;
        }
    }
    let m = dists.len() as f64;
    ProbDist::from_weights(std::array::from_fn(|k| votes[k] + HARD_TIE_EPS * mass[k] / m))
}

fn mean(dists: &[ProbDist]) -> ProbDist {
    let mut acc = [0.0; NUM_CLASSES];
    for p in dists {
        for (a, v) in acc.iter_mut().zip(p.0) {
            *a += v;
        }
    }
    let n = dists.len() as f64;
    ProbDist(acc.map(|a| a / n))
}

impl VotingModel {
    pub fn predict_proba(&self, x: RowView<'_>) -> ProbDist {
        let dists: Vec<ProbDist> = self.members.iter().map(|m| m.predict_proba_unchecked(x)).collect();
        match self.mode {
            VoteMode::Soft => vote_soft(&dists, &self.weights),
            VoteMode::Hard => hard_distribution(&dists),
        }
    }
}

impl BaggingModel {
    pub fn predict_proba(&self, x: RowView<'_>) -> ProbDist {
        let dists: Vec<ProbDist> = self.members.iter().map(|m| m.predict_proba_unchecked(x)).collect();
        mean(&dists)
    }
}

impl StackingModel {
    pub fn meta_features(&self, x: RowView<'_>) -> SparseVector {
        let dense: Vec<f64> = self.bases.iter().flat_map(|b| b.predict_proba_unchecked(x).0).collect();
        SparseVector::from_dense(&dense)
    }

    pub fn predict_proba(&self, x: RowView<'_>) -> ProbDist {
        self.meta.predict_proba_unchecked(self.meta_features(x).view())
    }
}

impl TrainedModel {
    pub fn name(&self) -> &'static str {
        match self {
            TrainedModel::Learner(l) => l.name(),
            TrainedModel::Voting(_) => "voting",
            TrainedModel::Bagging(_) => "bagging",
            TrainedModel::Stacking(_) => "stacking",
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            TrainedModel::Learner(l) => l.feature_dim(),
            TrainedModel::Voting(v) => v.members[0].feature_dim(),
            TrainedModel::Bagging(b) => b.members[0].feature_dim(),
            TrainedModel::Stacking(s) => s.bases[0].feature_dim(),
        }
    }

    /// Structural checks used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let dims = |ms: &[TrainedLearner]| -> Result<()> {
            if ms.is_empty() {
                return Err(Error::Format("ensemble has no members".into()));
            }
            let d = ms[0].feature_dim();
            for m in ms {
                check_dim(d, m.feature_dim())?;
                m.validate()?;
            }
            Ok(())
        };
        match self {
            TrainedModel::Learner(l) => l.validate(),
            TrainedModel::Voting(v) => {
                dims(&v.members)?;
                if v.weights.len() != v.members.len() {
                    return Err(Error::Format("voting weights do not match members".into()));
                }
                Ok(())
            }
            TrainedModel::Bagging(b) => dims(&b.members),
            TrainedModel::Stacking(s) => {
                dims(&s.bases)?;
                s.meta.validate()?;
                check_dim(s.bases.len() * NUM_CLASSES, s.meta.feature_dim())
            }
        }
    }

    pub fn predict_proba(&self, x: RowView<'_>) -> Result<ProbDist> {
        check_dim(self.feature_dim(), x.dim)?;
        Ok(self.predict_proba_unchecked(x))
    }

    fn predict_proba_unchecked(&self, x: RowView<'_>) -> ProbDist {
        match self {
            TrainedModel::Learner(l) => l.predict_proba_unchecked(x),
            TrainedModel::Voting(v) => v.predict_proba(x),
            TrainedModel::Bagging(b) => b.predict_proba(x),
            TrainedModel::Stacking(s) => s.predict_proba(x),
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

fn fit_members(
    configs: &[LearnerConfig],
    x: &CsrMatrix,
    y: &[CoarseLabel],
) -> Result<(Vec<TrainedLearner>, Vec<FitReport>)> {
    let results = util::par_map(configs.len(), |i| configs[i].fit(x, y));
    let mut models = Vec::with_capacity(configs.len());
    let mut reports = Vec::with_capacity(configs.len());
    for r in results {
        let (m, rep) = r?;
        models.push(m);
        reports.push(rep);
    }
    Ok((models, reports))
}

fn voting_fit(x: &CsrMatrix, y: &[CoarseLabel], config: &VotingConfig) -> Result<(VotingModel, FitReport)> {
    let (members, reports) = fit_members(&config.members, x, y)?;
    let raw = config.weights.clone().unwrap_or_else(|| vec![1.0; members.len()]);
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let mut report = FitReport::new("voting");
    report.members = reports;
    Ok((
        VotingModel {
            members,
            mode: config.mode,
            weights,
        },
        report,
    ))
}

/// Row indices of bootstrap sample `member` (size n, with replacement).
pub fn bootstrap_rows(n: usize, seed: u64, member: u64) -> Vec<usize> {
    let mut rng = util::rng(seed, 0xBA66 + member);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

fn bagging_fit(x: &CsrMatrix, y: &[CoarseLabel], config: &BaggingConfig) -> Result<(BaggingModel, FitReport)> {
    let n = y.len();
    let results = util::par_map(config.n_estimators, |i| {
        if config.bootstrap {
            let rows = bootstrap_rows(n, config.seed, i as u64);
            let xs = x.select_rows(&rows);
            let ys: Vec<CoarseLabel> = rows.iter().map(|&r| y[r]).collect();
            let base_seed = config.base.seed().unwrap_or(0);
            config
                .base
                .with_seed(util::mix_seed(base_seed ^ config.seed, i as u64))
                .fit(&xs, &ys)
        } else {
            config.base.fit(x, y)
        }
    });
    let mut members = Vec::new();
    let mut report = FitReport::new("bagging");
    for r in results {
        let (m, rep) = r?;
        members.push(m);
        report.members.push(rep);
    }
    Ok((BaggingModel { members }, report))
}

/// Out-of-fold meta-features: row `i`, block `b` holds base `b`'s
/// distribution for row `i` from a model fitted without row `i`'s fold.
#[derive(Debug, Clone)]
pub struct OofMetaFeatures {
    /// `n × (bases · 7)` dense rows.
    pub rows: Vec<Vec<f64>>,
    pub folds: Vec<Vec<usize>>,
    /// Training rows used for each fold's base models.
    pub train_rows: Vec<Vec<usize>>,
    pub stratified: bool,
}

pub fn oof_meta_features(x: &CsrMatrix, y: &[CoarseLabel], config: &StackingConfig) -> Result<OofMetaFeatures> {
    let n = y.len();
    let (folds, stratified) = k_folds(y, config.k_folds, config.seed, true)?;
    let train_rows: Vec<Vec<usize>> = folds.iter().map(|f| complement(n, f)).collect();
    let n_bases = config.bases.len();
    let jobs = util::par_map(folds.len() * n_bases, |job| {
        let (f, b) = (job / n_bases, job % n_bases);
        let rows = &train_rows[f];
        let xs = x.select_rows(rows);
        let ys: Vec<CoarseLabel> = rows.iter().map(|&r| y[r]).collect();
        let (m, _) = config.bases[b].fit(&xs, &ys)?;
        Ok::<_, Error>(
            folds[f]
                .iter()
                .map(|&i| m.predict_proba_unchecked(x.row(i)))
                .collect::<Vec<_>>(),
        )
    });
    let mut meta = vec![vec![0.0; n_bases * NUM_CLASSES]; n];
    for (job, result) in jobs.into_iter().enumerate() {
        let (f, b) = (job / n_bases, job % n_bases);
        for (&i, p) in folds[f].iter().zip(result?) {
            meta[i][b * NUM_CLASSES..(b + 1) * NUM_CLASSES].copy_from_slice(&p.0);
        }
    }
    Ok(OofMetaFeatures {
        rows: meta,
        folds,
        train_rows,
        stratified,
    })
}

fn stacking_fit(x: &CsrMatrix, y: &[CoarseLabel], config: &StackingConfig) -> Result<(StackingModel, FitReport)> {
    let oof = oof_meta_features(x, y, config)?;
    let meta_x = CsrMatrix::from_dense(&oof.rows);
    let mut report = FitReport::new("stacking");
    if !oof.stratified {
        report
            .degradations
            .push("stratified folds impossible (a class has fewer rows than folds); used unstratified folds".into());
    }
    report.folds = Some(FoldReport {
        k: oof.folds.len(),
        stratified: oof.stratified,
        fold_sizes: oof.folds.iter().map(Vec::len).collect(),
    });
    let (meta, meta_report) = config.meta.fit(&meta_x, y)?;
    let (bases, base_reports) = fit_members(&config.bases, x, y)?;
    report.members = base_reports;
    report.members.push(meta_report);
    Ok((StackingModel { bases, meta }, report))
}
