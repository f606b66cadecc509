//! GoEmotions ingestion: split files, the fine-to-Ekman mapping,
//! single-label resolution, deduplication and class distributions.
//!
//! Split files use the public "simplified" layout: one comment per line,
//! three tab-separated fields (text, comma-separated fine label ids,
//! comment id).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CoarseLabel, LabelMap, NUM_CLASSES};

const GOEMOTIONS_LABELS: &str = include_str!("../resources/emotions.txt");
const DEFAULT_MAPPING: &str = include_str!("../resources/ekman_mapping.json");

/// The 28 fine-grained GoEmotions labels (27 emotions plus neutral).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    names: Vec<String>,
    neutral: usize,
}

impl Taxonomy {
    pub fn goemotions() -> Self {
        Self::from_names(GOEMOTIONS_LABELS.lines()).expect("bundled taxonomy is valid")
    }

    /// Builds a taxonomy from label names in id order. Names must be
    /// unique and include `neutral`.
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let names: Vec<String> = names
            .into_iter()
            .map(|s| s.as_ref().trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Mapping(format!("duplicate fine label {n:?}")));
            }
        }
        if names.len() > u8::MAX as usize {
            return Err(Error::Mapping("too many fine labels".into()));
        }
        let neutral = names
            .iter()
            .position(|n| n == "neutral")
            .ok_or_else(|| Error::Mapping("taxonomy has no neutral label".into()))?;
        Ok(Taxonomy { names, neutral })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: u8) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<u8> {
        self.names.iter().position(|n| n == name).map(|i| i as u8)
    }

    pub fn neutral(&self) -> u8 {
        self.neutral as u8
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

/// Total function from fine label ids to coarse labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EkmanMapping {
    table: Vec<CoarseLabel>,
}

impl EkmanMapping {
    /// The canonical GoEmotions-to-Ekman mapping.
    pub fn goemotions_default(taxonomy: &Taxonomy) -> Result<Self> {
        Self::from_json(DEFAULT_MAPPING, taxonomy)
    }

    pub fn from_path(path: &Path, taxonomy: &Taxonomy) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, taxonomy).map_err(|e| Error::Mapping(format!("{}: {e}", path.display())))
    }

    /// Parses a `{fine_label_name: coarse_label_name}` object. Every fine
    /// label must be present, no unknown keys are allowed, and neutral must
    /// map to neutral.
    pub fn from_json(text: &str, taxonomy: &Taxonomy) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text).map_err(|e| Error::Mapping(e.to_string()))?;
        let mut table: Vec<Option<CoarseLabel>> = vec![None; taxonomy.len()];
        for (fine, coarse) in &raw {
            let id = taxonomy
                .id(fine)
                .ok_or_else(|| Error::Mapping(format!("unknown fine label {fine:?}")))?;
            let coarse: CoarseLabel = coarse.parse()?;
            table[id as usize] = Some(coarse);
        }
        let missing: Vec<&str> = taxonomy
            .names()
            .zip(&table)
            .filter(|(_, c)| c.is_none())
            .map(|(n, _)| n)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Mapping(format!("unmapped fine labels: {}", missing.join(", "))));
        }
        let table: Vec<CoarseLabel> = table.into_iter().map(|c| c.expect("checked")).collect();
        if table[taxonomy.neutral() as usize] != CoarseLabel::Neutral {
            return Err(Error::Mapping("neutral must map to neutral".into()));
        }
        Ok(EkmanMapping { table })
    }

    pub fn map(&self, fine: u8) -> CoarseLabel {
        self.table[fine as usize]
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// One line of a split file, before label resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub text: String,
    /// Sorted, deduplicated fine label ids.
    pub fine_label_ids: Vec<u8>,
    pub example_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub fine_labels: Vec<u8>,
    pub coarse_label: CoarseLabel,
    pub split_origin: Split,
}

pub fn load_split(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<RawRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_split(&text, path, taxonomy)
}

/// Parses split-file contents; `path` is only used in error messages.
pub fn parse_split(contents: &str, path: &Path, taxonomy: &Taxonomy) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (idx, line) in contents.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let text = fields[0];
        if text.trim().is_empty() {
            return Err(parse_err("empty comment text".into()));
        }
        let mut ids = Vec::new();
        for part in fields[1].split(',') {
            let id: u32 = part
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("label id {part:?} is not an integer")))?;
            if id as usize >= taxonomy.len() {
                return Err(Error::Taxonomy {
                    path: path.to_path_buf(),
                    line: line_no,
                    id,
                    size: taxonomy.len(),
                });
            }
            ids.push(id as u8);
        }
        ids.sort_unstable();
        ids.dedup();
        records.push(RawRecord {
            text: text.to_string(),
            fine_label_ids: ids,
            example_id: fields[2].trim().to_string(),
        });
    }
    Ok(records)
}

/// Per-coarse-label counts used to break multiplicity ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TiePriors(pub [u64; NUM_CLASSES]);

impl TiePriors {
    /// Counts every mapped fine label occurrence in `records`.
    pub fn from_records(records: &[RawRecord], mapping: &EkmanMapping) -> Self {
        let mut counts = [0u64; NUM_CLASSES];
        for r in records {
            for &id in &r.fine_label_ids {
                counts[mapping.map(id).index()] += 1;
            }
        }
        TiePriors(counts)
    }
}

/// Picks the coarse label with the highest multiplicity after mapping.
/// Ties go to the label with the larger prior count, then the lower index.
pub fn resolve_single_label(fine_labels: &[u8], mapping: &EkmanMapping, tie_priors: &TiePriors) -> Result<CoarseLabel> {
    if fine_labels.is_empty() {
        return Err(Error::Corpus("cannot resolve an empty label set".into()));
    }
    let mut multiplicity = [0usize; NUM_CLASSES];
    for &id in fine_labels {
        multiplicity[mapping.map(id).index()] += 1;
    }
    let best = (0..NUM_CLASSES)
        .max_by(|&a, &b| {
            multiplicity[a]
                .cmp(&multiplicity[b])
                .then(tie_priors.0[a].cmp(&tie_priors.0[b]))
                .then(b.cmp(&a))
        })
        .expect("non-empty range");
    Ok(CoarseLabel::ALL[best])
}

/// Keeps the first occurrence of every `(text, coarse_label)` pair.
pub fn deduplicate(examples: Vec<Example>) -> Vec<Example> {
    let mut seen: HashSet<(String, CoarseLabel)> = HashSet::with_capacity(examples.len());
    examples
        .into_iter()
        .filter(|e| seen.insert((e.text.clone(), e.coarse_label)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: LabelMap<u64>,
    pub proportions: LabelMap<f64>,
    pub total: u64,
    /// False when there are no examples; proportions are then all zero.
    pub proportions_defined: bool,
}

pub fn class_distribution<'a, I>(labels: I) -> ClassDistribution
where
    I: IntoIterator<Item = &'a CoarseLabel>,
{
    let mut counts = [0u64; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    let total: u64 = counts.iter().sum();
    let proportions = if total > 0 {
        counts.map(|c| c as f64 / total as f64)
    } else {
        [0.0; NUM_CLASSES]
    };
    ClassDistribution {
        counts: LabelMap(counts),
        proportions: LabelMap(proportions),
        total,
        proportions_defined: total > 0,
    }
}

pub fn examples_distribution(examples: &[Example]) -> ClassDistribution {
    class_distribution(examples.iter().map(|e| &e.coarse_label))
}

/// `{split: {label: count}}`, the data behind the per-split distribution
/// chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub train: LabelMap<u64>,
    pub validation: LabelMap<u64>,
    pub test: LabelMap<u64>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
    pub taxonomy: Taxonomy,
    pub mapping: EkmanMapping,
    pub tie_priors: TiePriors,
}

impl Corpus {
    /// Resolves, deduplicates and assembles already-loaded splits. Tie
    /// priors come from the training split.
    pub fn from_records(
        train: Vec<RawRecord>,
        validation: Vec<RawRecord>,
        test: Vec<RawRecord>,
        taxonomy: Taxonomy,
        mapping: EkmanMapping,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Corpus("training split is empty".into()));
        }
        if mapping.len() != taxonomy.len() {
            return Err(Error::Mapping("mapping does not cover the taxonomy".into()));
        }
        let mut ids = HashSet::new();
        for (split, records) in [("train", &train), ("validation", &validation), ("test", &test)] {
            let mut local = HashSet::new();
            for r in records.iter() {
                if !local.insert(r.example_id.as_str()) {
                    continue;
                }
                if !ids.insert(r.example_id.clone()) {
                    return Err(Error::Corpus(format!(
                        "example id {:?} in {split} also appears in an earlier split",
                        r.example_id
                    )));
                }
            }
        }
        let tie_priors = TiePriors::from_records(&train, &mapping);
        let resolve = |records: Vec<RawRecord>, split: Split| -> Result<Vec<Example>> {
            let examples = records
                .into_iter()
                .map(|r| {
                    let coarse_label = resolve_single_label(&r.fine_label_ids, &mapping, &tie_priors)?;
                    Ok(Example {
                        id: r.example_id,
                        text: r.text,
                        fine_labels: r.fine_label_ids,
                        coarse_label,
                        split_origin: split,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(deduplicate(examples))
        };
        let train = resolve(train, Split::Train)?;
        let validation = resolve(validation, Split::Validation)?;
        let test = resolve(test, Split::Test)?;
        Ok(Corpus {
            train,
            validation,
            test,
            taxonomy,
            mapping,
            tie_priors,
        })
    }

    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn distribution_report(&self) -> DistributionReport {
        DistributionReport {
            train: examples_distribution(&self.train).counts,
            validation: examples_distribution(&self.validation).counts,
            test: examples_distribution(&self.test).counts,
        }
    }
}

/// File locations for [`build_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub train: PathBuf,
    pub validation: PathBuf,
    pub test: PathBuf,
    /// `None` uses the bundled canonical mapping.
    pub mapping: Option<PathBuf>,
}

impl CorpusPaths {
    /// The default file names (`train.tsv`, `dev.tsv`, `test.tsv`) under `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        CorpusPaths {
            train: dir.join("train.tsv"),
            validation: dir.join("dev.tsv"),
            test: dir.join("test.tsv"),
            mapping: None,
        }
    }
}

pub fn build_corpus(paths: &CorpusPaths) -> Result<Corpus> {
    let taxonomy = Taxonomy::goemotions();
    // The mapping is validated before any split is read.
    let mapping = match &paths.mapping {
        Some(p) => EkmanMapping::from_path(p, &taxonomy)?,
        None => EkmanMapping::goemotions_default(&taxonomy)?,
    };
    let train = load_split(&paths.train, &taxonomy)?;
    let validation = load_split(&paths.validation, &taxonomy)?;
    let test = load_split(&paths.test, &taxonomy)?;
    if train.is_empty() {
        return Err(Error::Corpus(format!(
            "training split {} is empty",
            paths.train.display()
        )));
    }
    Corpus::from_records(train, validation, test, taxonomy, mapping)
}
