use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EMOJI: &str = include_str!("../../resources/emoji.json");
const CONTRACTIONS: &str = include_str!("../../resources/contractions.json");
const ABBREVIATIONS: &str = include_str!("../../resources/abbreviations.json");
const STOPWORDS: &str = include_str!("../../resources/stopwords.txt");
const LEMMA_EXCEPTIONS: &str = include_str!("../../resources/lemma_exceptions.json");

/// Words that must never appear in the stop word list; removing them would
/// erase negation.
pub const PROTECTED_WORDS: &[&str] = &[
    "no", "nor", "not", "never", "none", "nothing", "nobody", "nowhere", "neither", "cannot", "without", "against",
    "don", "ain", "aren", "couldn", "didn", "doesn", "hadn", "hasn", "haven", "isn", "mightn", "mustn", "needn",
    "shan", "shouldn", "wasn", "weren", "won", "wouldn",
];

pub const DEFAULT_REPEAT_CAP: usize = 2;

/// Serialized form of [`NormResources`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceData {
    pub emoji: BTreeMap<String, String>,
    pub contractions: BTreeMap<String, String>,
    pub abbreviations: BTreeMap<String, String>,
    pub stopwords: BTreeSet<String>,
    pub lemma_exceptions: BTreeMap<String, String>,
    pub repeat_cap: usize,
}

/// Lexicons and tables used by the full normalization pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ResourceData", into = "ResourceData")]
pub struct NormResources {
    data: ResourceData,
    emoji_max_chars: usize,
    emoji_first_chars: HashSet<char>,
}

impl TryFrom<ResourceData> for NormResources {
    type Error = Error;

    fn try_from(data: ResourceData) -> Result<Self> {
        validate(&data)?;
        let emoji_max_chars = data.emoji.keys().map(|k| k.chars().count()).max().unwrap_or(0);
        let emoji_first_chars = data.emoji.keys().filter_map(|k| k.chars().next()).collect();
        Ok(NormResources {
            data,
            emoji_max_chars,
            emoji_first_chars,
        })
    }
}

impl From<NormResources> for ResourceData {
    fn from(r: NormResources) -> Self {
        r.data
    }
}

fn validate(data: &ResourceData) -> Result<()> {
    let bad = |name: &str, message: String| Error::Resource {
        name: name.to_string(),
        message,
    };
    if data.repeat_cap == 0 {
        return Err(bad("repeat_cap", "must be at least 1".into()));
    }
    let tables = [
        ("emoji", &data.emoji),
        ("contractions", &data.contractions),
        ("abbreviations", &data.abbreviations),
        ("lemma_exceptions", &data.lemma_exceptions),
    ];
    for (name, table) in tables {
        for (k, v) in table {
            if k.is_empty() {
                return Err(bad(name, "empty key".into()));
            }
            if v.to_lowercase() != *v {
                return Err(bad(name, format!("value for {k:?} is not lowercase: {v:?}")));
            }
        }
    }
    for (k, v) in &data.lemma_exceptions {
        if v.is_empty() || v.chars().any(char::is_whitespace) {
            return Err(bad("lemma_exceptions", format!("{k:?} maps to an invalid lemma {v:?}")));
        }
    }
    for w in &data.stopwords {
        if w.to_lowercase() != *w || w.chars().any(char::is_whitespace) {
            return Err(bad("stopwords", format!("invalid entry {w:?}")));
        }
        if PROTECTED_WORDS.contains(&w.as_str()) {
            return Err(bad(
                "stopwords",
                format!("{w:?} carries negation and may not be a stop word"),
            ));
        }
    }
    Ok(())
}

fn parse_table(name: &str, text: &str) -> Result<BTreeMap<String, String>> {
    serde_json::from_str(text).map_err(|e| Error::Resource {
        name: name.to_string(),
        message: e.to_string(),
    })
}

fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Optional overrides for each resource file; `None` keeps the bundled
/// default.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResourcePaths {
    pub emoji: Option<PathBuf>,
    pub contractions: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub lemma_exceptions: Option<PathBuf>,
    pub repeat_cap: Option<usize>,
}

fn read_or(path: &Option<PathBuf>, default: &'static str) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e)),
        None => Ok(default.to_string()),
    }
}

impl NormResources {
    /// The lexicons shipped with the crate.
    pub fn bundled() -> Self {
        Self::load(&ResourcePaths::default()).expect("bundled resources are valid")
    }

    pub fn load(paths: &ResourcePaths) -> Result<Self> {
        let data = ResourceData {
            emoji: parse_table("emoji", &read_or(&paths.emoji, EMOJI)?)?,
            contractions: parse_table("contractions", &read_or(&paths.contractions, CONTRACTIONS)?)?,
            abbreviations: parse_table("abbreviations", &read_or(&paths.abbreviations, ABBREVIATIONS)?)?,
            stopwords: parse_stopwords(&read_or(&paths.stopwords, STOPWORDS)?),
            lemma_exceptions: parse_table("lemma_exceptions", &read_or(&paths.lemma_exceptions, LEMMA_EXCEPTIONS)?)?,
            repeat_cap: paths.repeat_cap.unwrap_or(DEFAULT_REPEAT_CAP),
        };
        Self::try_from(data)
    }

    pub fn from_dir(dir: &Path) -> Result<Self> {
        let pick = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self::load(&ResourcePaths {
            emoji: pick("emoji.json"),
            contractions: pick("contractions.json"),
            abbreviations: pick("abbreviations.json"),
            stopwords: pick("stopwords.txt"),
            lemma_exceptions: pick("lemma_exceptions.json"),
            repeat_cap: None,
        })
    }

    pub fn data(&self) -> &ResourceData {
        &self.data
    }

    pub fn emoji(&self) -> &BTreeMap<String, String> {
        &self.data.emoji
    }

    pub fn contractions(&self) -> &BTreeMap<String, String> {
        &self.data.contractions
    }

    pub fn abbreviations(&self) -> &BTreeMap<String, String> {
        &self.data.abbreviations
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.data.stopwords
    }

    pub fn lemma_exceptions(&self) -> &BTreeMap<String, String> {
        &self.data.lemma_exceptions
    }

    pub fn repeat_cap(&self) -> usize {
        self.data.repeat_cap
    }

    pub(crate) fn emoji_max_chars(&self) -> usize {
        self.emoji_max_chars
    }

    pub(crate) fn may_start_emoji(&self, c: char) -> bool {
        self.emoji_first_chars.contains(&c)
    }

    /// CRC-32 over the canonical JSON encoding of all tables, as hex.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.data).expect("resource data serializes");
        format!("{:08x}", crc32fast::hash(&bytes))
    }
}

impl Default for NormResources {
    fn default() -> Self {
        Self::bundled()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_resources_load_and_respect_curation() {
        let r = NormResources::bundled();
        assert!(r.emoji().len() > 3000);
        assert_eq!(r.emoji().get("\u{1F622}").map(String::as_str), Some("crying face"));
        assert_eq!(
            r.abbreviations().get("lmao").map(String::as_str),
            Some("laughing my ass off")
        );
        assert_eq!(r.contractions().get("i'm").map(String::as_str), Some("i am"));
        for w in PROTECTED_WORDS {
            assert!(!r.stopwords().contains(*w), "{w}");
        }
        assert!(r.stopwords().contains("the"));
        assert!(r.lemma_exceptions().len() >= 200);
        assert_eq!(r.repeat_cap(), 2);
    }

    #[test]
    fn negation_in_stopwords_is_rejected() {
        let mut data = NormResources::bundled().data().clone();
        data.stopwords.insert("not".into());
        assert!(NormResources::try_from(data).is_err());
    }

    #[test]
    fn uppercase_values_are_rejected() {
        let mut data = NormResources::bundled().data().clone();
        data.abbreviations.insert("brb".into(), "Be Right Back".into());
        assert!(NormResources::try_from(data).is_err());
    }

    #[test]
    fn digest_is_stable_and_content_sensitive() {
        let a = NormResources::bundled();
        assert_eq!(a.digest(), NormResources::bundled().digest());
        let mut data = a.data().clone();
        data.repeat_cap = 3;
        assert_ne!(NormResources::try_from(data).unwrap().digest(), a.digest());
    }
}
