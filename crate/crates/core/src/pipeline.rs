//! End-to-end glue: prepared corpora, bundle training, and the prediction
//! response shared by the command line and the HTTP service.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusPaths, DistributionReport, Split};
use crate::ensembles::{EnsembleConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::features::{TfIdfConfig, TfIdfModel};
use crate::labels::{CoarseLabel, LabelMap};
use crate::learners::FitReport;
use crate::modelstore::{BundleMetadata, ModelBundle};
use crate::textnorm::{normalize_full, normalize_raw, NormResources, PipelineMode, TokenizedDoc};
use crate::util;

impl ModelConfig {
    /// Same config with every seed it carries set to `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            ModelConfig::Learner(l) => ModelConfig::Learner(l.with_seed(seed)),
            ModelConfig::Ensemble(EnsembleConfig::Voting(v)) => {
                let mut v = v.clone();
                v.members = v.members.iter().map(|m| m.with_seed(seed)).collect();
                ModelConfig::Ensemble(EnsembleConfig::Voting(v))
            }
            ModelConfig::Ensemble(EnsembleConfig::Bagging(b)) => {
                let mut b = b.clone();
                b.seed = seed;
                b.base = b.base.with_seed(seed);
                ModelConfig::Ensemble(EnsembleConfig::Bagging(b))
            }
            ModelConfig::Ensemble(EnsembleConfig::Stacking(s)) => {
                let mut s = s.clone();
                s.seed = seed;
                s.bases = s.bases.iter().map(|m| m.with_seed(seed)).collect();
                s.meta = s.meta.with_seed(seed);
                ModelConfig::Ensemble(EnsembleConfig::Stacking(s))
            }
        }
    }
}

/// CRC-32 over the split files (and the mapping file, if any), as hex.
pub fn dataset_digest(paths: &CorpusPaths) -> Result<String> {
    let mut h = crc32fast::Hasher::new();
    let files = [
        Some(&paths.train),
        Some(&paths.validation),
        Some(&paths.test),
        paths.mapping.as_ref(),
    ];
    for p in files.into_iter().flatten() {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update(&(bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(format!("{:08x}", h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedExample {
    pub id: String,
    pub label: CoarseLabel,
    pub raw: Vec<String>,
    pub full: Vec<String>,
}

impl PreparedExample {
    pub fn doc(&self, mode: PipelineMode) -> TokenizedDoc {
        match mode {
            PipelineMode::Raw => TokenizedDoc::new(self.raw.clone(), mode),
            PipelineMode::Full => TokenizedDoc::new(self.full.clone(), mode),
        }
    }
}

/// Resolved, deduplicated splits with both normalizations precomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedCorpus {
    pub dataset_digest: String,
    pub resources_digest: String,
    pub distribution: DistributionReport,
    pub train: Vec<PreparedExample>,
    pub validation: Vec<PreparedExample>,
    pub test: Vec<PreparedExample>,
}

impl PreparedCorpus {
    pub fn from_corpus(corpus: &Corpus, resources: &NormResources, dataset_digest: &str) -> Self {
        let prep = |split: Split| {
            let examples = corpus.split(split);
            util::par_map(examples.len(), |i| {
                let e = &examples[i];
                PreparedExample {
                    id: e.id.clone(),
                    label: e.coarse_label,
                    raw: normalize_raw(&e.text).tokens,
                    full: normalize_full(&e.text, resources).tokens,
                }
            })
        };
        PreparedCorpus {
            dataset_digest: dataset_digest.to_string(),
            resources_digest: resources.digest(),
            distribution: corpus.distribution_report(),
            train: prep(Split::Train),
            validation: prep(Split::Validation),
            test: prep(Split::Test),
        }
    }

    pub fn split(&self, split: Split) -> &[PreparedExample] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn docs(&self, split: Split, mode: PipelineMode) -> Vec<TokenizedDoc> {
        self.split(split).iter().map(|e| e.doc(mode)).collect()
    }

    pub fn labels(&self, split: Split) -> Vec<CoarseLabel> {
        self.split(split).iter().map(|e| e.label).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self).expect("prepared corpus serializes");
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))
    }
}

/// Fits the vectorizer and the model on `docs`, `labels` and packs them
/// with the normalization resources.
pub fn train_bundle(
    docs: &[TokenizedDoc],
    labels: &[CoarseLabel],
    mode: PipelineMode,
    resources: &NormResources,
    tfidf: &TfIdfConfig,
    model: &ModelConfig,
    metadata: BundleMetadata,
) -> Result<(ModelBundle, FitReport)> {
    let vectorizer = TfIdfModel::fit(docs, tfidf)?;
    let x = vectorizer.transform_all(docs);
    let (trained, report) = model.fit(&x, labels)?;
    let bundle = ModelBundle {
        pipeline_mode: mode,
        resources: resources.clone(),
        tfidf: vectorizer,
        model: trained,
        metadata,
    };
    Ok((bundle, report))
}

/// Emoji shown for each label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmojiTable(pub LabelMap<String>);

impl Default for EmojiTable {
    fn default() -> Self {
        EmojiTable(LabelMap(["😠", "🤢", "😨", "😄", "😢", "😮", "😐"].map(String::from)))
    }
}

impl EmojiTable {
    pub fn get(&self, label: CoarseLabel) -> &str {
        self.0.get(label)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("emoji table: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub text: String,
    pub label: CoarseLabel,
    pub emoji: String,
    pub probabilities: LabelMap<f64>,
    pub elapsed_ms: f64,
    pub model_name: String,
    pub empty_input: bool,
}

pub fn predict_response(bundle: &ModelBundle, text: &str, emoji: &EmojiTable) -> Result<PredictResponse> {
    let start = util::now();
    let p = bundle.predict_text(text)?;
    Ok(PredictResponse {
        text: text.to_string(),
        label: p.label,
        emoji: emoji.get(p.label).to_string(),
        probabilities: LabelMap(p.probabilities.0),
        elapsed_ms: util::elapsed_secs(start) * 1000.0,
        model_name: bundle.metadata.model_name.clone(),
        empty_input: p.empty_input,
    })
}
