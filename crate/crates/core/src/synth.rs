//! Small synthetic comment corpora for tests, demos and smoke runs when
//! the real splits are not at hand.
//!
//! Each comment mixes a few cue words of its class with filler words and,
//! sometimes, an emoji; a share of labels is flipped. Class frequencies
//! loosely follow GoEmotions, with joy and neutral the most common.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{EkmanMapping, Taxonomy};
use crate::ensembles::{BaggingConfig, EnsembleConfig, ModelConfig, ModelKind, StackingConfig, VotingConfig};
use crate::labels::{CoarseLabel, NUM_CLASSES};
use crate::learners::{ForestConfig, GbtConfig, LearnerConfig, LogRegConfig, SvmConfig};
use crate::util;

const CUES: [&[&str]; NUM_CLASSES] = [
    &[
        "angry",
        "furious",
        "hate",
        "annoyed",
        "mad",
        "rage",
        "outraged",
        "irritating",
        "stupid",
        "ridiculous",
    ],
    &[
        "gross",
        "disgusting",
        "nasty",
        "vile",
        "revolting",
        "sick",
        "creepy",
        "yuck",
        "awful",
        "repulsive",
    ],
    &[
        "scared",
        "afraid",
        "terrified",
        "nervous",
        "worried",
        "anxious",
        "frightening",
        "panic",
        "horror",
        "dread",
    ],
    &[
        "love",
        "happy",
        "great",
        "awesome",
        "thanks",
        "glad",
        "amazing",
        "wonderful",
        "fun",
        "beautiful",
    ],
    &[
        "sad",
        "sorry",
        "miss",
        "cry",
        "lonely",
        "depressed",
        "heartbroken",
        "unfortunately",
        "grief",
        "lost",
    ],
    &[
        "wow",
        "whoa",
        "surprised",
        "unexpected",
        "shocked",
        "omg",
        "amazed",
        "unbelievable",
        "realize",
        "really",
    ],
    &[
        "think", "probably", "game", "today", "post", "people", "thing", "actually", "said", "read",
    ],
];

const EMOJI: [&str; NUM_CLASSES] = ["😠", "🤢", "😨", "😄", "😢", "😮", "🙂"];

const FILLER: &[&str] = &[
    "the", "this", "is", "a", "that", "it", "was", "so", "just", "my", "you", "i", "and", "of", "to", "with", "for",
    "about", "reddit", "comment", "guy", "team", "week", "year", "movie", "song", "city", "dog",
];

/// Relative class frequencies, in class-index order.
const CLASS_WEIGHTS: [u32; NUM_CLASSES] = [12, 3, 3, 33, 8, 10, 31];

fn pick_class<R: Rng>(rng: &mut R) -> usize {
    let total: u32 = CLASS_WEIGHTS.iter().sum();
    let mut t = rng.gen_range(0..total);
    for (k, w) in CLASS_WEIGHTS.iter().enumerate() {
        if t < *w {
            return k;
        }
        t -= w;
    }
    NUM_CLASSES - 1
}

/// `n` labelled comments, deterministic in `seed`.
pub fn labelled_texts(n: usize, seed: u64) -> Vec<(String, CoarseLabel)> {
    let mut rng = util::rng(seed, 0x5947);
    (0..n)
        .map(|_| {
            let class = pick_class(&mut rng);
            let mut words: Vec<&str> = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                words.push(CUES[class].choose(&mut rng).expect("non-empty"));
            }
            for _ in 0..rng.gen_range(2..=6) {
                words.push(FILLER.choose(&mut rng).expect("non-empty"));
            }
            if rng.gen_bool(0.15) {
                let other = rng.gen_range(0..NUM_CLASSES);
                words.push(CUES[other].choose(&mut rng).expect("non-empty"));
            }
            words.shuffle(&mut rng);
            let mut text = words.join(" ");
            if rng.gen_bool(0.2) {
                text.push(' ');
                text.push_str(EMOJI[class]);
            }
            if rng.gen_bool(0.3) {
                text.push('!');
            }
            let label = if rng.gen_bool(0.1) {
                rng.gen_range(0..NUM_CLASSES)
            } else {
                class
            };
            (text, CoarseLabel::ALL[label])
        })
        .collect()
}

/// Renders labelled comments as a split file in the simplified GoEmotions
/// layout, choosing for each comment a fine label that maps to its class.
pub fn goemotions_tsv(rows: &[(String, CoarseLabel)], id_prefix: &str, seed: u64) -> String {
    let taxonomy = Taxonomy::goemotions();
    let mapping = EkmanMapping::goemotions_default(&taxonomy).expect("bundled mapping is valid");
    let mut by_class: [Vec<u8>; NUM_CLASSES] = Default::default();
    for id in 0..taxonomy.len() as u8 {
        by_class[mapping.map(id).index()].push(id);
    }
    let mut rng = util::rng(seed, 0x75F);
    let mut out = String::new();
    for (i, (text, label)) in rows.iter().enumerate() {
        let fine = by_class[label.index()]
            .choose(&mut rng)
            .expect("every class has a fine label");
        let _ = writeln!(out, "{text}\t{fine}\t{id_prefix}{i:06}");
    }
    out
}

/// Default configuration for `kind` scaled down so that it trains in
/// well under a second on a few hundred short comments.
pub fn fast_config(kind: ModelKind) -> ModelConfig {
    let logreg = LearnerConfig::LogReg(LogRegConfig {
        epochs: 60,
        ..Default::default()
    });
    let svm = LearnerConfig::Svm(SvmConfig {
        epochs: 8,
        ..Default::default()
    });
    let gbt = LearnerConfig::Gbt(GbtConfig {
        n_rounds: 15,
        max_depth: 4,
        ..Default::default()
    });
    let forest = LearnerConfig::Forest(ForestConfig {
        n_trees: 20,
        ..Default::default()
    });
    let bagging = |base: LearnerConfig| {
        ModelConfig::Ensemble(EnsembleConfig::Bagging(BaggingConfig {
            base,
            n_estimators: 4,
            ..Default::default()
        }))
    };
    match kind {
        ModelKind::LogReg => ModelConfig::Learner(logreg),
        ModelKind::Svm => ModelConfig::Learner(svm),
        ModelKind::Gbt => ModelConfig::Learner(gbt),
        ModelKind::Forest => ModelConfig::Learner(forest),
        ModelKind::Voting => ModelConfig::Ensemble(EnsembleConfig::Voting(VotingConfig {
            members: vec![gbt, logreg, svm],
            ..Default::default()
        })),
        ModelKind::BaggingSvm => bagging(svm),
        ModelKind::BaggingGbt => bagging(gbt),
        ModelKind::BaggingLogReg => bagging(logreg),
        ModelKind::Stacking => ModelConfig::Ensemble(EnsembleConfig::Stacking(StackingConfig {
            bases: vec![forest, gbt, svm],
            meta: logreg,
            k_folds: 3,
            seed: 0,
        })),
        ModelKind::NaiveBayes | ModelKind::Tree => kind.default_config(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_split;
    use std::path::Path;

    #[test]
    fn deterministic_and_joy_neutral_lead() {
        let a = labelled_texts(2000, 1);
        assert_eq!(a, labelled_texts(2000, 1));
        assert_ne!(a, labelled_texts(2000, 2));
        let mut counts = [0usize; NUM_CLASSES];
        for (_, l) in &a {
            counts[l.index()] += 1;
        }
        let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
        order.sort_by_key(|&k| std::cmp::Reverse(counts[k]));
        let top: Vec<CoarseLabel> = order[..2].iter().map(|&k| CoarseLabel::ALL[k]).collect();
        assert!(top.contains(&CoarseLabel::Joy) && top.contains(&CoarseLabel::Neutral));
    }

    #[test]
    fn tsv_parses_back_to_the_same_classes() {
        let rows = labelled_texts(200, 3);
        let tsv = goemotions_tsv(&rows, "t", 0);
        let taxonomy = Taxonomy::goemotions();
        let mapping = EkmanMapping::goemotions_default(&taxonomy).unwrap();
        let records = parse_split(&tsv, Path::new("synthetic.tsv"), &taxonomy).unwrap();
        assert_eq!(records.len(), 200);
        for (r, (text, label)) in records.iter().zip(&rows) {
            assert_eq!(&r.text, text);
            assert_eq!(mapping.map(r.fine_label_ids[0]), *label);
        }
    }

    #[test]
    fn fast_configs_validate() {
        for kind in ModelKind::ALL {
            fast_config(kind).validate().unwrap();
        }
    }
}
