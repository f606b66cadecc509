//! Emotion detection for short social-media comments.
//!
//! The crate covers the whole classical pipeline: loading GoEmotions
//! splits and collapsing their 28 fine labels onto Ekman's six basic
//! emotions plus neutral ([`corpus`]), text normalization ([`textnorm`]),
//! TF-IDF features ([`features`]), six probabilistic learners
//! ([`learners`]), voting/bagging/stacking ensembles ([`ensembles`]),
//! evaluation ([`metrics`]) and a self-contained model file format
//! ([`modelstore`]).

pub mod corpus;
pub mod ensembles;
mod error;
pub mod features;
pub mod labels;
pub mod learners;
pub mod metrics;
pub mod modelstore;
pub mod pipeline;
pub mod sparse;
pub mod synth;
pub mod textnorm;
mod util;

pub use error::{Error, Result};
pub use labels::{CoarseLabel, LabelMap, ProbDist, NUM_CLASSES};
