//! Coarse emotion labels and probability distributions over them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 7;

/// Ekman's six basic emotions plus neutral.
///
/// The discriminant is the class index used everywhere a model emits a
/// vector over labels: anger=0, disgust=1, fear=2, joy=3, sadness=4,
/// surprise=5, neutral=6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseLabel {
    Anger = 0,
    Disgust = 1,
    Fear = 2,
    Joy = 3,
    Sadness = 4,
    Surprise = 5,
    Neutral = 6,
}

impl CoarseLabel {
    pub const ALL: [CoarseLabel; NUM_CLASSES] = [
        CoarseLabel::Anger,
        CoarseLabel::Disgust,
        CoarseLabel::Fear,
        CoarseLabel::Joy,
        CoarseLabel::Sadness,
        CoarseLabel::Surprise,
        CoarseLabel::Neutral,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<CoarseLabel> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CoarseLabel::Anger => "anger",
            CoarseLabel::Disgust => "disgust",
            CoarseLabel::Fear => "fear",
            CoarseLabel::Joy => "joy",
            CoarseLabel::Sadness => "sadness",
            CoarseLabel::Surprise => "surprise",
            CoarseLabel::Neutral => "neutral",
        }
    }
}

impl fmt::Display for CoarseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CoarseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Mapping(format!("unknown coarse label {s:?}")))
    }
}

/// A probability vector over the seven coarse labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbDist(pub [f64; NUM_CLASSES]);

impl ProbDist {
    pub fn uniform() -> Self {
        ProbDist([1.0 / NUM_CLASSES as f64; NUM_CLASSES])
    }

    pub fn one_hot(label: CoarseLabel) -> Self {
        let mut p = [0.0; NUM_CLASSES];
        p[label.index()] = 1.0;
        ProbDist(p)
    }

    /// Normalizes non-negative weights. All-zero weights give the uniform
    /// distribution.
    pub fn from_weights(weights: [f64; NUM_CLASSES]) -> Self {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Self::uniform();
        }
        ProbDist(weights.map(|w| w / total))
    }

    /// Numerically stable softmax. `-inf` scores get probability zero.
    pub fn softmax(scores: &[f64; NUM_CLASSES]) -> Self {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Self::uniform();
        }
        let mut p = [0.0; NUM_CLASSES];
        let mut total = 0.0;
        for (out, &s) in p.iter_mut().zip(scores) {
            *out = (s - max).exp();
            total += *out;
        }
        ProbDist(p.map(|v| v / total))
    }

    #[inline]
    pub fn get(&self, label: CoarseLabel) -> f64 {
        self.0[label.index()]
    }

    pub fn as_array(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    /// Highest-probability label; ties go to the lowest class index.
    pub fn argmax(&self) -> CoarseLabel {
        let mut best = 0;
        for k in 1..NUM_CLASSES {
            if self.0[k] > self.0[best] {
                best = k;
            }
        }
        CoarseLabel::ALL[best]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Entries non-negative, finite, and summing to one within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|p| p.is_finite() && *p >= 0.0) && (self.sum() - 1.0).abs() <= tol
    }
}

impl Default for ProbDist {
    fn default() -> Self {
        Self::uniform()
    }
}

/// One value per coarse label, serialized as a JSON object keyed by label
/// name in class-index order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelMap<T>(pub [T; NUM_CLASSES]);

impl<T> LabelMap<T> {
    pub fn get(&self, label: CoarseLabel) -> &T {
        &self.0[label.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (CoarseLabel, &T)> {
        CoarseLabel::ALL.iter().copied().zip(self.0.iter())
    }
}

impl<T: Serialize> Serialize for LabelMap<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(NUM_CLASSES))?;
        for (label, value) in self.iter() {
            map.serialize_entry(label.name(), value)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for LabelMap<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = std::collections::BTreeMap::<String, T>::deserialize(deserializer)?;
        let mut slots: [Option<T>; NUM_CLASSES] = Default::default();
        for (key, value) in raw {
            let label: CoarseLabel = key.parse().map_err(D::Error::custom)?;
            slots[label.index()] = Some(value);
        }
        let mut missing = Vec::new();
        for (label, slot) in CoarseLabel::ALL.iter().zip(&slots) {
            if slot.is_none() {
                missing.push(label.name());
            }
        }
        if !missing.is_empty() {
            return Err(D::Error::custom(format!("missing labels: {}", missing.join(", "))));
        }
        Ok(LabelMap(slots.map(|s| s.expect("checked above"))))
    }
}
