//! Self-contained `.emb` model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "EKMANEMB"
//! header_len u32
//! header     header_len bytes of JSON (BundleHeader)
//! header_crc u32      CRC-32 of the header bytes
//! payload    sections, each: name_len u32, name, data_len u64, data
//! ```
//!
//! Section data is postcard. The header records every section's length
//! and the CRC-32 of the whole payload, so it can be inspected without
//! decoding any weights.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensembles::TrainedModel;
use crate::error::{Error, Result};
use crate::features::TfIdfModel;
use crate::labels::{CoarseLabel, ProbDist};
use crate::textnorm::{normalize, NormResources, PipelineMode};

pub const MAGIC: &[u8; 8] = b"EKMANEMB";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "emb";

const SECTIONS: [&str; 3] = ["resources", "tfidf", "model"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub model_name: String,
    /// Unix seconds.
    pub trained_at: u64,
    pub dataset_digest: String,
    /// The configuration the model was trained with, as given.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionInfo {
    pub name: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub format_version: u32,
    pub pipeline_mode: PipelineMode,
    pub norm_resources_digest: String,
    pub model_kind: String,
    pub feature_dim: usize,
    pub vocabulary_size: usize,
    pub metadata: BundleMetadata,
    pub sections: Vec<SectionInfo>,
    pub payload_checksum: u32,
}

/// Everything needed to go from raw text to a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub pipeline_mode: PipelineMode,
    pub resources: NormResources,
    pub tfidf: TfIdfModel,
    pub model: TrainedModel,
    pub metadata: BundleMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextPrediction {
    pub label: CoarseLabel,
    pub probabilities: ProbDist,
    /// Normalization left no tokens; the model saw an all-zero row.
    pub empty_input: bool,
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        self.tfidf.check()?;
        self.model.validate()?;
        if self.tfidf.dim() != self.model.feature_dim() {
            return Err(Error::Format(format!(
                "vectorizer has {} features but the model expects {}",
                self.tfidf.dim(),
                self.model.feature_dim()
            )));
        }
        Ok(())
    }

    pub fn predict_text(&self, text: &str) -> Result<TextPrediction> {
        let doc = normalize(text, self.pipeline_mode, &self.resources);
        let row = self.tfidf.transform(&doc);
        let probabilities = self.model.predict_proba(row.view())?;
        Ok(TextPrediction {
            label: probabilities.argmax(),
            probabilities,
            empty_input: doc.is_empty(),
        })
    }

    pub fn header(&self) -> Result<BundleHeader> {
        Ok(encode(self)?.0)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (header, payload) = encode(self)?;
        Ok(assemble(&header, &payload))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = split_header(bytes)?;
        check_payload(&header, payload)?;
        decode(header, payload)
    }
}

fn postcard_section<T: Serialize>(name: &str, value: &T) -> Result<Vec<u8>> {
    postcard::to_allocvec(value).map_err(|e| Error::Format(format!("cannot encode {name}: {e}")))
}

fn encode(bundle: &ModelBundle) -> Result<(BundleHeader, Vec<u8>)> {
    bundle.validate()?;
    let sections = [
        postcard_section("resources", &bundle.resources)?,
        postcard_section("tfidf", &bundle.tfidf)?,
        postcard_section("model", &bundle.model)?,
    ];
    let mut payload = Vec::new();
    let mut infos = Vec::new();
    for (name, data) in SECTIONS.iter().zip(&sections) {
        payload.extend_from_slice(&(name.len() as u32).to_le_bytes());
        payload.extend_from_slice(name.as_bytes());
        payload.extend_from_slice(&(data.len() as u64).to_le_bytes());
        payload.extend_from_slice(data);
        infos.push(SectionInfo {
            name: name.to_string(),
            bytes: data.len() as u64,
        });
    }
    let header = BundleHeader {
        format_version: FORMAT_VERSION,
        pipeline_mode: bundle.pipeline_mode,
        norm_resources_digest: bundle.resources.digest(),
        model_kind: bundle.model.name().to_string(),
        feature_dim: bundle.model.feature_dim(),
        vocabulary_size: bundle.tfidf.dim(),
        metadata: bundle.metadata.clone(),
        sections: infos,
        payload_checksum: crc32fast::hash(&payload),
    };
    Ok((header, payload))
}

fn assemble(header: &BundleHeader, payload: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&crc32fast::hash(&json).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!(
                "{what} needs {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Verifies magic, header checksum and version; returns the header and
/// the remaining payload bytes.
fn split_header(bytes: &[u8]) -> Result<(BundleHeader, &[u8])> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Format("not an .emb model file (bad magic)".into()));
    }
    let len = r.u32("header length")? as usize;
    let json = r.take(len, "header")?;
    let expected = r.u32("header checksum")?;
    let actual = crc32fast::hash(json);
    if expected != actual {
        return Err(Error::Checksum {
            section: "header",
            expected,
            actual,
        });
    }
    let header: BundleHeader =
        serde_json::from_slice(json).map_err(|e| Error::Format(format!("header is not valid JSON: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: header.format_version,
            supported: FORMAT_VERSION,
        });
    }
    Ok((header, &bytes[r.pos..]))
}

fn check_payload(header: &BundleHeader, payload: &[u8]) -> Result<()> {
    let declared: u64 = header
        .sections
        .iter()
        .map(|s| 4 + s.name.len() as u64 + 8 + s.bytes)
        .sum();
    if (payload.len() as u64) < declared {
        return Err(Error::Truncated(format!(
            "payload has {} bytes, header declares {declared}",
            payload.len()
        )));
    }
    if payload.len() as u64 > declared {
        return Err(Error::Format(format!(
            "{} unexpected bytes after the last section",
            payload.len() as u64 - declared
        )));
    }
    let actual = crc32fast::hash(payload);
    if actual != header.payload_checksum {
        return Err(Error::Checksum {
            section: "payload",
            expected: header.payload_checksum,
            actual,
        });
    }
    Ok(())
}

fn decode(header: BundleHeader, payload: &[u8]) -> Result<ModelBundle> {
    let mut r = Reader { bytes: payload, pos: 0 };
    let mut sections = Vec::new();
    for expected in SECTIONS {
        let name_len = r.u32("section name length")? as usize;
        let name = r.take(name_len, "section name")?;
        if name != expected.as_bytes() {
            return Err(Error::Format(format!(
                "expected section {expected:?}, found {:?}",
                String::from_utf8_lossy(name)
            )));
        }
        let len = r.u64("section length")?;
        let len = usize::try_from(len).map_err(|_| Error::Format("section too large".into()))?;
        sections.push(r.take(len, expected)?);
    }
    let section = |i: usize| sections[i];
    let bad = |name: &str, e: postcard::Error| Error::Format(format!("cannot decode {name}: {e}"));
    let resources: NormResources = postcard::from_bytes(section(0)).map_err(|e| bad("resources", e))?;
    let tfidf: TfIdfModel = postcard::from_bytes(section(1)).map_err(|e| bad("tfidf", e))?;
    let model: TrainedModel = postcard::from_bytes(section(2)).map_err(|e| bad("model", e))?;
    if resources.digest() != header.norm_resources_digest {
        return Err(Error::Format(
            "normalization resources do not match the header digest".into(),
        ));
    }
    let bundle = ModelBundle {
        pipeline_mode: header.pipeline_mode,
        resources,
        tfidf,
        model,
        metadata: header.metadata,
    };
    bundle.validate()?;
    if bundle.model.name() != header.model_kind {
        return Err(Error::Format(format!(
            "header says {}, payload holds {}",
            header.model_kind,
            bundle.model.name()
        )));
    }
    Ok(bundle)
}

pub fn save(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let bytes = bundle.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelBundle> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_bytes(&bytes)
}

/// Reads and verifies only the header; weights are neither checked nor
/// decoded.
pub fn inspect(path: &Path) -> Result<BundleHeader> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(split_header(&bytes)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{ModelConfig, ModelKind};
    use crate::features::TfIdfConfig;
    use crate::learners::{LearnerConfig, LogRegConfig};
    use crate::synth;
    use crate::textnorm::TokenizedDoc;

    fn bundle_for(config: &ModelConfig) -> ModelBundle {
        let resources = NormResources::bundled();
        let data = synth::labelled_texts(120, 4);
        let docs: Vec<TokenizedDoc> = data
            .iter()
            .map(|(t, _)| normalize(t, PipelineMode::Full, &resources))
            .collect();
        let y: Vec<CoarseLabel> = data.iter().map(|(_, l)| *l).collect();
        let (tfidf, x) = crate::features::fit_transform(&docs, &TfIdfConfig::default()).unwrap();
        let (model, _) = config.fit(&x, &y).unwrap();
        ModelBundle {
            pipeline_mode: PipelineMode::Full,
            resources,
            tfidf,
            model,
            metadata: BundleMetadata {
                model_name: config.name().to_string(),
                trained_at: 1_700_000_000,
                dataset_digest: "00000000".into(),
                config: serde_json::to_value(config).unwrap(),
            },
        }
    }

    fn small_logreg() -> ModelConfig {
        ModelConfig::Learner(LearnerConfig::LogReg(LogRegConfig {
            epochs: 30,
            ..Default::default()
        }))
    }

    #[test]
    fn round_trip_is_bitwise() {
        let b = bundle_for(&small_logreg());
        let bytes = b.to_bytes().unwrap();
        let back = ModelBundle::from_bytes(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        for (text, _) in synth::labelled_texts(100, 99) {
            let p = b.predict_text(&text).unwrap().probabilities;
            let q = back.predict_text(&text).unwrap().probabilities;
            assert!(p.0.iter().zip(q.0).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn every_single_byte_corruption_is_rejected() {
        let bytes = bundle_for(&small_logreg()).to_bytes().unwrap();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x5a;
            assert!(ModelBundle::from_bytes(&bad).is_err(), "flip at {i} accepted");
        }
    }

    #[test]
    fn errors_are_specific() {
        let b = bundle_for(&small_logreg());
        let bytes = b.to_bytes().unwrap();
        let (header, payload) = encode(&b).unwrap();
        let header_end = bytes.len() - payload.len();

        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() ^= 1;
        assert!(matches!(
            ModelBundle::from_bytes(&bad),
            Err(Error::Checksum { section: "payload", .. })
        ));

        bad = bytes.clone();
        bad[20] ^= 1;
        assert!(matches!(
            ModelBundle::from_bytes(&bad),
            Err(Error::Checksum { section: "header", .. })
        ));

        assert!(matches!(
            ModelBundle::from_bytes(&bytes[..bytes.len() - 10]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(
            ModelBundle::from_bytes(&bytes[..header_end - 2]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(ModelBundle::from_bytes(&bytes[..3]), Err(Error::Truncated(_))));
        assert!(matches!(
            ModelBundle::from_bytes(b"PK\x03\x04 not a model"),
            Err(Error::Format(_))
        ));

        let future = BundleHeader {
            format_version: FORMAT_VERSION + 1,
            ..header
        };
        assert!(matches!(
            ModelBundle::from_bytes(&assemble(&future, &payload)),
            Err(Error::Version { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn save_load_inspect() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.emb");
        let b = bundle_for(&small_logreg());
        save(&b, &path).unwrap();
        assert_eq!(load(&path).unwrap(), b);
        let h = inspect(&path).unwrap();
        assert_eq!(h.format_version, FORMAT_VERSION);
        assert_eq!(h.model_kind, "logreg");
        assert_eq!(h.feature_dim, b.tfidf.dim());
        assert_eq!(h.metadata.trained_at, 1_700_000_000);
        assert_eq!(h.sections.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(), SECTIONS);
        assert!(matches!(load(&dir.path().join("missing.emb")), Err(Error::Io { .. })));
    }

    #[test]
    fn every_model_kind_round_trips() {
        for kind in ModelKind::ALL {
            let cfg = synth::fast_config(kind);
            let b = bundle_for(&cfg);
            let back = ModelBundle::from_bytes(&b.to_bytes().unwrap()).unwrap();
            assert_eq!(back, b, "{kind}");
        }
    }

    #[test]
    fn empty_input_is_flagged() {
        let b = bundle_for(&small_logreg());
        let p = b.predict_text("").unwrap();
        assert!(p.empty_input);
        assert!(p.probabilities.is_valid(1e-9));
        assert!(!b.predict_text("i am so happy today").unwrap().empty_input);
    }
}
