//! Text normalization.
//!
//! Two variants exist. The raw variant only applies Unicode NFC,
//! whitespace collapsing and lowercase tokenization. The full variant
//! runs these stages, always in this order:
//!
//! 1. minimal normalization
//! 2. lowercase
//! 3. emoji to descriptive text
//! 4. contraction expansion
//! 5. abbreviation expansion
//! 6. repeated-letter condensing
//! 7. punctuation spacing (`. , ! ?` kept, other symbols dropped)
//! 8. whitespace tokenization
//! 9. lemmatization
//! 10. stop word removal

mod lemma;
mod resources;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub use lemma::lemmatize;
pub use resources::{NormResources, ResourceData, ResourcePaths, DEFAULT_REPEAT_CAP, PROTECTED_WORDS};

use std::collections::{BTreeMap, BTreeSet};

pub const RETAINED_PUNCTUATION: [char; 4] = ['.', ',', '!', '?'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    Raw,
    #[default]
    Full,
}

impl std::str::FromStr for PipelineMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "raw" => Ok(PipelineMode::Raw),
            "full" => Ok(PipelineMode::Full),
            other => Err(crate::Error::Config(format!("unknown pipeline mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub tokens: Vec<String>,
    pub source_mode: PipelineMode,
}

impl TokenizedDoc {
    pub fn new(tokens: Vec<String>, source_mode: PipelineMode) -> Self {
        TokenizedDoc { tokens, source_mode }
    }

    /// Every token was removed (or the input was empty).
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// NFC, whitespace collapse and trim. Case, emoji and punctuation are kept.
pub fn normalize_minimal(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    collapse_whitespace(&nfc)
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

fn is_emoji_component(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2300..=0x23FF
        | 0x2B00..=0x2BFF
        | 0xFE00..=0xFE0F
        | 0x200D
        | 0x20E3
        | 0xE0020..=0xE007F)
}

/// Replaces emoji sequences with their descriptive names, longest match
/// first, scanning left to right. Emoji without a lexicon entry are dropped.
pub fn emoji_to_text(text: &str, resources: &NormResources) -> String {
    let chars: Vec<char> = text.chars().collect();
    let lexicon = resources.emoji();
    let max_len = resources.emoji_max_chars();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut key = String::new();
    while i < chars.len() {
        let c = chars[i];
        if resources.may_start_emoji(c) {
            let mut matched = None;
            let upper = max_len.min(chars.len() - i);
            for len in (1..=upper).rev() {
                key.clear();
                key.extend(&chars[i..i + len]);
                if let Some(name) = lexicon.get(key.as_str()) {
                    matched = Some((len, name));
                    break;
                }
            }
            if let Some((len, name)) = matched {
                out.push(' ');
                out.push_str(name);
                out.push(' ');
                i += len;
                continue;
            }
        }
        if is_emoji_component(c) {
            out.push(' ');
        } else {
            out.push(c);
        }
        i += 1;
    }
    collapse_whitespace(&out)
}

/// Rewrites maximal runs of characters accepted by `in_word` through `f`.
fn rewrite_words(text: &str, in_word: impl Fn(char) -> bool, mut f: impl FnMut(&str, &mut String)) -> String {
    let mut out = String::with_capacity(text.len());
    let mut start = None;
    for (i, c) in text.char_indices() {
        if in_word(c) {
            start.get_or_insert(i);
        } else {
            if let Some(s) = start.take() {
                f(&text[s..i], &mut out);
            }
            out.push(c);
        }
    }
    if let Some(s) = start {
        f(&text[s..], &mut out);
    }
    out
}

fn normalize_apostrophes(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' | '\u{02BC}' | '`' => '\'',
            other => other,
        })
        .collect()
}

/// Expands contractions on word boundaries. A word is a run of letters,
/// digits and apostrophes; quotes around a word are preserved.
pub fn expand_contractions(text: &str, contractions: &BTreeMap<String, String>) -> String {
    let text = normalize_apostrophes(text);
    rewrite_words(
        &text,
        |c| c.is_alphanumeric() || c == '\'',
        |word, out| {
            if let Some(exp) = contractions.get(word) {
                out.push_str(exp);
                return;
            }
            let core = word.trim_matches('\'');
            if !core.is_empty() && core.len() != word.len() {
                if let Some(exp) = contractions.get(core) {
                    let lead = word.len() - word.trim_start_matches('\'').len();
                    let trail = word.len() - word.trim_end_matches('\'').len();
                    out.push_str(&word[..lead]);
                    out.push_str(exp);
                    out.push_str(&word[word.len() - trail..]);
                    return;
                }
            }
            out.push_str(word);
        },
    )
}

/// Whole-word abbreviation expansion; a word is a run of letters and digits.
pub fn expand_abbreviations(text: &str, abbreviations: &BTreeMap<String, String>) -> String {
    rewrite_words(text, char::is_alphanumeric, |word, out| {
        out.push_str(abbreviations.get(word).map(String::as_str).unwrap_or(word));
    })
}

/// Shortens runs of the same letter longer than `cap` to exactly `cap`.
/// Digits and punctuation are never condensed.
pub fn condense_repeats(text: &str, cap: usize) -> String {
    let cap = cap.max(1);
    let mut out = String::with_capacity(text.len());
    let mut prev = None;
    let mut run = 0;
    for c in text.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if !c.is_alphabetic() || run <= cap {
            out.push(c);
        }
    }
    out
}

/// Surrounds each retained punctuation mark with single spaces and
/// replaces every other non-alphanumeric symbol with a space.
pub fn space_punctuation(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 8);
    for c in text.chars() {
        if c.is_alphanumeric() {
            out.push(c);
        } else if RETAINED_PUNCTUATION.contains(&c) {
            out.push(' ');
            out.push(c);
            out.push(' ');
        } else {
            out.push(' ');
        }
    }
    collapse_whitespace(&out)
}

pub fn remove_stopwords(tokens: Vec<String>, stopwords: &BTreeSet<String>) -> Vec<String> {
    tokens.into_iter().filter(|t| !stopwords.contains(t)).collect()
}

/// Intermediate output of each stage of [`normalize_full`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormTrace {
    pub minimal: String,
    pub lowercase: String,
    pub emoji: String,
    pub contractions: String,
    pub abbreviations: String,
    pub condensed: String,
    pub punctuation: String,
    pub tokens: Vec<String>,
    pub lemmas: Vec<String>,
    pub filtered: Vec<String>,
}

pub fn normalize_full_traced(text: &str, resources: &NormResources) -> NormTrace {
    let minimal = normalize_minimal(text);
    let lowercase = minimal.to_lowercase();
    let emoji = emoji_to_text(&lowercase, resources);
    let contractions = expand_contractions(&emoji, resources.contractions());
    let abbreviations = expand_abbreviations(&contractions, resources.abbreviations());
    let condensed = condense_repeats(&abbreviations, resources.repeat_cap());
    let punctuation = space_punctuation(&condensed);
    let tokens = tokenize(&punctuation);
    let lemmas: Vec<String> = tokens
        .iter()
        .map(|t| lemmatize(t, resources.lemma_exceptions()))
        .collect();
    let filtered = remove_stopwords(lemmas.clone(), resources.stopwords());
    NormTrace {
        minimal,
        lowercase,
        emoji,
        contractions,
        abbreviations,
        condensed,
        punctuation,
        tokens,
        lemmas,
        filtered,
    }
}

pub fn normalize_full(text: &str, resources: &NormResources) -> TokenizedDoc {
    TokenizedDoc::new(normalize_full_traced(text, resources).filtered, PipelineMode::Full)
}

/// Minimal normalization followed by lowercase whitespace tokenization.
pub fn normalize_raw(text: &str) -> TokenizedDoc {
    TokenizedDoc::new(tokenize(&normalize_minimal(text).to_lowercase()), PipelineMode::Raw)
}

pub fn normalize(text: &str, mode: PipelineMode, resources: &NormResources) -> TokenizedDoc {
    match mode {
        PipelineMode::Raw => normalize_raw(text),
        PipelineMode::Full => normalize_full(text, resources),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn res() -> NormResources {
        NormResources::bundled()
    }

    #[test]
    fn minimal() {
        assert_eq!(normalize_minimal("Hi   there "), "Hi there");
        assert_eq!(normalize_minimal(""), "");
        assert_eq!(normalize_minimal("LMAO 😂"), "LMAO 😂");
        // e + combining acute composes under NFC.
        assert_eq!(normalize_minimal("cafe\u{301}"), "caf\u{e9}");
    }

    #[test]
    fn emoji() {
        let r = res();
        assert_eq!(emoji_to_text("ok 😢", &r), "ok crying face");
        assert_eq!(emoji_to_text("plain text", &r), "plain text");
        assert_eq!(
            emoji_to_text("lol😂😂", &r),
            "lol face with tears of joy face with tears of joy"
        );
        // Unassigned codepoint inside the pictograph block is dropped.
        assert_eq!(emoji_to_text("hi \u{1FAFF} there", &r), "hi there");
        // A ZWJ family sequence matches as one unit.
        let family = "\u{1F468}\u{200D}\u{1F469}\u{200D}\u{1F467}";
        let out = emoji_to_text(family, &r);
        assert_eq!(out, r.emoji()[family]);
    }

    #[test]
    fn contractions() {
        let r = res();
        assert_eq!(expand_contractions("i'm sad", r.contractions()), "i am sad");
        assert_eq!(expand_contractions("can't stop", r.contractions()), "cannot stop");
        assert_eq!(expand_contractions("i\u{2019}m here", r.contractions()), "i am here");
        assert_eq!(expand_contractions("dogs' toys", r.contractions()), "dogs' toys");
        assert_eq!(
            expand_contractions("'i'm' she said", r.contractions()),
            "'i am' she said"
        );
        assert_eq!(expand_contractions("", r.contractions()), "");
    }

    #[test]
    fn abbreviations() {
        let r = res();
        assert_eq!(expand_abbreviations("lmao", r.abbreviations()), "laughing my ass off");
        assert_eq!(expand_abbreviations("llama", r.abbreviations()), "llama");
        assert_eq!(
            expand_abbreviations("idk lol", r.abbreviations()),
            "i do not know laughing out loud"
        );
        assert_eq!(expand_abbreviations("omg!", r.abbreviations()), "oh my god!");
    }

    #[test]
    fn condense() {
        assert_eq!(condense_repeats("soooooo", 2), "soo");
        assert_eq!(condense_repeats("good", 2), "good");
        assert_eq!(condense_repeats("aaaa!!!!", 2), "aa!!!!");
        assert_eq!(condense_repeats("10000", 2), "10000");
        assert_eq!(condense_repeats("yesss", 1), "yes");
    }

    #[test]
    fn punctuation() {
        assert_eq!(space_punctuation("what?!"), "what ? !");
        assert_eq!(space_punctuation("a,b"), "a , b");
        assert_eq!(space_punctuation("a~b"), "a b");
        assert_eq!(space_punctuation("[name] is here..."), "name is here . . .");
    }

    #[test]
    fn stopwords() {
        let r = res();
        let toks = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(
            remove_stopwords(toks(&["i", "am", "happy"]), r.stopwords()),
            toks(&["happy"])
        );
        assert!(remove_stopwords(vec![], r.stopwords()).is_empty());
        assert_eq!(
            remove_stopwords(toks(&["not", "happy"]), r.stopwords()),
            toks(&["not", "happy"])
        );
    }

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("a b"), vec!["a", "b"]);
        assert!(tokenize(" ").is_empty());
        assert_eq!(tokenize("a  b"), vec!["a", "b"]);
    }

    #[test]
    fn full_pipeline_golden_trace() {
        let r = res();
        let t = normalize_full_traced("I'm sooo HAPPY!!! 😂", &r);
        assert_eq!(t.minimal, "I'm sooo HAPPY!!! 😂");
        assert_eq!(t.lowercase, "i'm sooo happy!!! 😂");
        assert_eq!(t.emoji, "i'm sooo happy!!! face with tears of joy");
        assert_eq!(t.contractions, "i am sooo happy!!! face with tears of joy");
        assert_eq!(t.abbreviations, t.contractions);
        assert_eq!(t.condensed, "i am soo happy!!! face with tears of joy");
        assert_eq!(t.punctuation, "i am soo happy ! ! ! face with tears of joy");
        assert_eq!(
            t.tokens,
            vec!["i", "am", "soo", "happy", "!", "!", "!", "face", "with", "tears", "of", "joy"]
        );
        assert_eq!(
            t.lemmas,
            vec!["i", "be", "soo", "happy", "!", "!", "!", "face", "with", "tear", "of", "joy"]
        );
        assert_eq!(t.filtered, vec!["soo", "happy", "!", "!", "!", "face", "tear", "joy"]);
    }

    #[test]
    fn full_pipeline_edge_cases() {
        let r = res();
        let empty = normalize_full("", &r);
        assert!(empty.is_empty());
        assert_eq!(empty.source_mode, PipelineMode::Full);
        assert!(normalize_full("the a an", &r).is_empty());
        assert_eq!(
            normalize_full("LMAO that's hilarious", &r).tokens,
            vec!["laugh", "ass", "hilarious"]
        );
    }

    #[test]
    fn raw_mode_keeps_everything_but_case() {
        let d = normalize_raw("LMAO   😂 ok!");
        assert_eq!(d.tokens, vec!["lmao", "😂", "ok!"]);
        assert_eq!(d.source_mode, PipelineMode::Raw);
    }

    const WORDS: &[&str] = &[
        "I", "you", "love", "LOVED", "hate", "running", "sooo", "happy", "sad", "can't", "won't", "i'm", "lol", "lmao",
        "idk", "the", "a", "not", "never", "cats", "babies", "crying", "!!!", "?", "...", "[NAME]", "😂", "😢", "❤️",
        "👍🏽", "great", "stories", "what?!", "so", "very", "AMAZING", "ugh", "hmm", "x~y", "café", "tried", "loooove",
        "100%", "#1", "dogs'", "excited", "worried", "went",
    ];

    fn sentence() -> impl Strategy<Value = String> {
        proptest::collection::vec(proptest::sample::select(WORDS), 0..12).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn full_pipeline_is_idempotent(text in sentence()) {
            let r = res();
            let once = normalize_full(&text, &r);
            let twice = normalize_full(&once.tokens.join(" "), &r);
            prop_assert_eq!(once.tokens, twice.tokens);
        }

        #[test]
        fn tokens_never_contain_whitespace(text in any::<String>()) {
            let r = res();
            for t in normalize_full(&text, &r).tokens {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
            for t in normalize_raw(&text).tokens {
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }

        #[test]
        fn full_tokens_avoid_stopwords_and_long_runs(text in sentence()) {
            let r = res();
            for t in normalize_full(&text, &r).tokens {
                prop_assert!(!r.stopwords().contains(&t));
                let chars: Vec<char> = t.chars().collect();
                for w in chars.windows(r.repeat_cap() + 1) {
                    prop_assert!(!(w[0].is_alphabetic() && w.iter().all(|&c| c == w[0])), "{}", t);
                }
            }
        }

        #[test]
        fn condense_never_lengthens(text in any::<String>(), cap in 1usize..5) {
            prop_assert!(condense_repeats(&text, cap).chars().count() <= text.chars().count());
        }

        #[test]
        fn stopword_filter_preserves_order(tokens in proptest::collection::vec(proptest::sample::select(WORDS), 0..20)) {
            let r = res();
            let input: Vec<String> = tokens.iter().map(|s| s.to_lowercase()).collect();
            let out = remove_stopwords(input.clone(), r.stopwords());
            let mut it = input.iter();
            for t in &out {
                prop_assert!(it.any(|x| x == t));
            }
        }
    }
}
