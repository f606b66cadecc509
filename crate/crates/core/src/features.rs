//! TF-IDF vectorizer.
//!
//! Weights use smoothed inverse document frequency,
//! `idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1`, multiplied by the raw
//! term count and L2-normalized per document. Terms are token n-grams
//! joined by a single space; column indices follow lexicographic term order.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SparseVector};
use crate::textnorm::TokenizedDoc;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfIdfConfig {
    pub min_df: u32,
    pub max_features: Option<usize>,
    pub ngram_max: usize,
    /// Use `1 + ln(tf)` instead of the raw count.
    pub sublinear_tf: bool,
}

impl Default for TfIdfConfig {
    fn default() -> Self {
        TfIdfConfig {
            min_df: 2,
            max_features: Some(50_000),
            ngram_max: 1,
            sublinear_tf: false,
        }
    }
}

impl TfIdfConfig {
    fn validate(&self) -> Result<()> {
        if self.min_df < 1 {
            return Err(Error::Config("min_df must be at least 1".into()));
        }
        if self.ngram_max < 1 {
            return Err(Error::Config("ngram_max must be at least 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::Config("max_features must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TfIdfData {
    terms: Vec<String>,
    df: Vec<u32>,
    idf: Vec<f64>,
    n_docs: usize,
    config: TfIdfConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "TfIdfData", into = "TfIdfData")]
pub struct TfIdfModel {
    data: TfIdfData,
    vocab: HashMap<String, u32>,
}

impl PartialEq for TfIdfModel {
    fn eq(&self, other: &Self) -> bool {
        self.data.terms == other.data.terms
            && self.data.df == other.data.df
            && self.data.n_docs == other.data.n_docs
            && self.data.config == other.data.config
            && self
                .data
                .idf
                .iter()
                .map(|v| v.to_bits())
                .eq(other.data.idf.iter().map(|v| v.to_bits()))
    }
}

impl From<TfIdfData> for TfIdfModel {
    fn from(data: TfIdfData) -> Self {
        let vocab = data
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        TfIdfModel { data, vocab }
    }
}

impl From<TfIdfModel> for TfIdfData {
    fn from(m: TfIdfModel) -> Self {
        m.data
    }
}

pub fn smoothed_idf(n_docs: usize, df: u32) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

fn doc_terms(tokens: &[String], ngram_max: usize) -> impl Iterator<Item = String> + '_ {
    (1..=ngram_max).flat_map(move |n| tokens.windows(n).map(|w| w.join(" ")))
}

impl TfIdfModel {
    pub fn fit(docs: &[TokenizedDoc], config: &TfIdfConfig) -> Result<Self> {
        config.validate()?;
        if docs.is_empty() {
            return Err(Error::Fit("cannot fit TF-IDF on zero documents".into()));
        }
        let mut df: HashMap<String, u32> = HashMap::new();
        let mut seen = std::collections::HashSet::new();
        for doc in docs {
            seen.clear();
            for term in doc_terms(&doc.tokens, config.ngram_max) {
                if seen.insert(term.clone()) {
                    *df.entry(term).or_insert(0) += 1;
                }
            }
        }
        let mut kept: Vec<(String, u32)> = df.into_iter().filter(|(_, d)| *d >= config.min_df).collect();
        if let Some(cap) = config.max_features {
            if kept.len() > cap {
                kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                kept.truncate(cap);
            }
        }
        if kept.is_empty() {
            return Err(Error::Fit(format!(
                "empty vocabulary after filtering (min_df = {})",
                config.min_df
            )));
        }
        kept.sort_by(|a, b| a.0.cmp(&b.0));
        let n_docs = docs.len();
        let (terms, df): (Vec<String>, Vec<u32>) = kept.into_iter().unzip();
        let idf = df.iter().map(|&d| smoothed_idf(n_docs, d)).collect();
        Ok(TfIdfModel::from(TfIdfData {
            terms,
            df,
            idf,
            n_docs,
            config: config.clone(),
        }))
    }

    pub fn dim(&self) -> usize {
        self.data.terms.len()
    }

    pub fn n_docs(&self) -> usize {
        self.data.n_docs
    }

    pub fn config(&self) -> &TfIdfConfig {
        &self.data.config
    }

    pub fn terms(&self) -> &[String] {
        &self.data.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.vocab.get(term).map(|&i| i as usize)
    }

    pub fn df(&self, term: &str) -> Option<u32> {
        self.index_of(term).map(|i| self.data.df[i])
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index_of(term).map(|i| self.data.idf[i])
    }

    pub fn idf_weights(&self) -> &[f64] {
        &self.data.idf
    }

    /// Out-of-vocabulary tokens are ignored; an all-OOV document maps to the
    /// zero vector.
    /// Consistency check for deserialized models.
    pub(crate) fn check(&self) -> Result<()> {
        let d = &self.data;
        if d.df.len() != d.terms.len() || d.idf.len() != d.terms.len() {
            return Err(Error::Format("tf-idf tables have different lengths".into()));
        }
        if d.terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("tf-idf terms are not sorted and unique".into()));
        }
        if d.idf.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("tf-idf weights are not finite".into()));
        }
        Ok(())
    }

    pub fn transform(&self, doc: &TokenizedDoc) -> SparseVector {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for term in doc_terms(&doc.tokens, self.data.config.ngram_max) {
            if let Some(&idx) = self.vocab.get(&term) {
                *counts.entry(idx).or_insert(0.0) += 1.0;
            }
        }
        let sublinear = self.data.config.sublinear_tf;
        let (indices, mut values): (Vec<u32>, Vec<f64>) = counts
            .into_iter()
            .map(|(i, tf)| {
                let tf = if sublinear { 1.0 + tf.ln() } else { tf };
                (i, tf * self.data.idf[i as usize])
            })
            .unzip();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        SparseVector::new(indices, values, self.dim()).expect("indices come from a sorted map")
    }

    pub fn transform_all(&self, docs: &[TokenizedDoc]) -> CsrMatrix {
        let mut m = CsrMatrix::empty(self.dim());
        for d in docs {
            m.push_row(self.transform(d).view()).expect("same dimension");
        }
        m
    }
}

pub fn fit_transform(docs: &[TokenizedDoc], config: &TfIdfConfig) -> Result<(TfIdfModel, CsrMatrix)> {
    let model = TfIdfModel::fit(docs, config)?;
    let matrix = model.transform_all(docs);
    Ok((model, matrix))
}
