//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The page can train a small model on the built-in synthetic corpus or load
//! an `.emb` bundle produced by the command line, classify text with it, and
//! show each stage of text normalization.

use ekmanlab::ensembles::ModelKind;
use ekmanlab::features::TfIdfConfig;
use ekmanlab::modelstore::{BundleMetadata, ModelBundle};
use ekmanlab::pipeline::{predict_response, train_bundle, EmojiTable};
use ekmanlab::synth;
use ekmanlab::textnorm::{normalize_full, normalize_full_traced, NormResources, PipelineMode};
use ekmanlab::CoarseLabel;
use wasm_bindgen::prelude::*;

/// Largest synthetic training set the demo will build.
pub const MAX_DEMO_EXAMPLES: usize = 5_000;

#[wasm_bindgen]
pub struct Demo {
    bundle: ModelBundle,
    emoji: EmojiTable,
}

impl Demo {
    /// Trains `kind` on `n` synthetic comments.
    pub fn train(kind: &str, n: usize, seed: u64) -> Result<Demo, String> {
        let kind: ModelKind = kind.parse().map_err(|e: ekmanlab::Error| e.to_string())?;
        if n < 50 || n > MAX_DEMO_EXAMPLES {
            return Err(format!("training set size must be between 50 and {MAX_DEMO_EXAMPLES}"));
        }
        let resources = NormResources::bundled();
        let data = synth::labelled_texts(n, seed);
        let docs: Vec<_> = data.iter().map(|(t, _)| normalize_full(t, &resources)).collect();
        let labels: Vec<CoarseLabel> = data.iter().map(|(_, l)| *l).collect();
        let config = synth::fast_config(kind).with_seed(seed);
        let metadata = BundleMetadata {
            model_name: kind.name().to_string(),
            trained_at: 0,
            dataset_digest: format!("synthetic:{n}:{seed}"),
            config: serde_json::to_value(&config).map_err(|e| e.to_string())?,
        };
        let tfidf = TfIdfConfig {
            min_df: 1,
            ..Default::default()
        };
        let (bundle, _) = train_bundle(&docs, &labels, PipelineMode::Full, &resources, &tfidf, &config, metadata)
            .map_err(|e| e.to_string())?;
        Ok(Demo {
            bundle,
            emoji: EmojiTable::default(),
        })
    }

    pub fn load(bytes: &[u8]) -> Result<Demo, String> {
        let bundle = ModelBundle::from_bytes(bytes).map_err(|e| e.to_string())?;
        Ok(Demo {
            bundle,
            emoji: EmojiTable::default(),
        })
    }

    /// Prediction for `text` as the JSON object the HTTP service returns.
    pub fn predict_json(&self, text: &str) -> Result<String, String> {
        let r = predict_response(&self.bundle, text, &self.emoji).map_err(|e| e.to_string())?;
        serde_json::to_string(&r).map_err(|e| e.to_string())
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(js_name = train)]
    pub fn js_train(kind: &str, n: usize, seed: u32) -> Result<Demo, JsError> {
        Demo::train(kind, n, seed as u64).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = load)]
    pub fn js_load(bytes: &[u8]) -> Result<Demo, JsError> {
        Demo::load(bytes).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = predict)]
    pub fn js_predict(&self, text: &str) -> Result<String, JsError> {
        self.predict_json(text).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(getter, js_name = modelName)]
    pub fn model_name(&self) -> String {
        self.bundle.metadata.model_name.clone()
    }

    #[wasm_bindgen(getter, js_name = vocabularySize)]
    pub fn vocabulary_size(&self) -> usize {
        self.bundle.tfidf.dim()
    }
}

/// Names accepted by [`Demo::train`].
#[wasm_bindgen(js_name = modelKinds)]
pub fn model_kinds() -> Vec<String> {
    ModelKind::ALL.iter().map(|k| k.name().to_string()).collect()
}

/// Every intermediate stage of the full normalization pipeline, as JSON.
#[wasm_bindgen(js_name = normalizeTrace)]
pub fn normalize_trace(text: &str) -> String {
    let trace = normalize_full_traced(text, &NormResources::bundled());
    serde_json::to_string(&trace).expect("trace serializes")
}
