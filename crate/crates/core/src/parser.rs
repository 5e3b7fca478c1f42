//! Normalization of free-text completions into canonical stance labels.
//!
//! A completion is "good" when its tokens hit keywords from exactly one
//! stance category. Anything else (no keywords, or keywords from several
//! categories) is "bad" and scored as neutral.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CanonicalLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Validity {
    Good,
    Bad,
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("keyword {keyword:?} is listed under both {first} and {second}")]
    Overlap {
        keyword: String,
        first: CanonicalLabel,
        second: CanonicalLabel,
    },
    #[error("keyword {0:?} is not a single lowercase word")]
    BadKeyword(String),
    #[error("invalid vocab file: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Per-label keyword lists. Matching is case-insensitive on whole tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StanceVocab {
    keywords: BTreeMap<String, CanonicalLabel>,
}

impl Default for StanceVocab {
    fn default() -> Self {
        Self::new(BTreeMap::from([
            (
                CanonicalLabel::Agree,
                vec!["for", "supports", "support", "agree", "favor"],
            ),
            (
                CanonicalLabel::Disagree,
                vec!["against", "denies", "deny", "disagree", "oppose"],
            ),
            (
                CanonicalLabel::Neutral,
                vec!["neutral", "unrelated", "none", "comment"],
            ),
        ]))
        .expect("default vocab is disjoint")
    }
}

impl StanceVocab {
    pub fn new<S: AsRef<str>>(lists: BTreeMap<CanonicalLabel, Vec<S>>) -> Result<Self, VocabError> {
        let mut keywords = BTreeMap::new();
        for (label, words) in lists {
            for w in words {
                let w = w.as_ref().trim().to_lowercase();
                if w.is_empty() || w.chars().any(char::is_whitespace) {
                    return Err(VocabError::BadKeyword(w));
                }
                if let Some(prev) = keywords.insert(w.clone(), label) {
                    if prev != label {
                        return Err(VocabError::Overlap {
                            keyword: w,
                            first: prev,
                            second: label,
                        });
                    }
                }
            }
        }
        Ok(Self { keywords })
    }

    /// Reads `{"agree": [...], "disagree": [...], "neutral": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        let lists: BTreeMap<CanonicalLabel, Vec<String>> =
            serde_json::from_str(text).map_err(|e| VocabError::Parse(e.to_string()))?;
        Self::new(lists)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut lists: BTreeMap<CanonicalLabel, Vec<&str>> = BTreeMap::new();
        for (w, l) in &self.keywords {
            lists.entry(*l).or_default().push(w);
        }
        serde_json::to_string_pretty(&lists).expect("vocab serializes")
    }

    pub fn lookup(&self, token: &str) -> Option<CanonicalLabel> {
        self.keywords.get(token).copied()
    }

    pub fn keywords(&self) -> impl Iterator<Item = (&str, CanonicalLabel)> {
        self.keywords.iter().map(|(w, l)| (w.as_str(), *l))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOutcome {
    pub label: CanonicalLabel,
    pub validity: Validity,
    pub matched_categories: BTreeSet<CanonicalLabel>,
    pub word_count: usize,
    pub non_stance_word_count: usize,
}

/// Whitespace tokens, lowercased, with leading and trailing punctuation
/// removed. Tokens that are pure punctuation become empty and are kept so
/// that token counts still equal the whitespace word count.
fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(|t| {
        t.trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase()
    })
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn non_stance_word_count(text: &str, vocab: &StanceVocab) -> usize {
    tokens(text).filter(|t| vocab.lookup(t).is_none()).count()
}

pub fn parse(text: &str, vocab: &StanceVocab) -> ParsedOutcome {
    let mut matched = BTreeSet::new();
    let mut words = 0;
    let mut stance_words = 0;
    for tok in tokens(text) {
        words += 1;
        if let Some(label) = vocab.lookup(&tok) {
            stance_words += 1;
            matched.insert(label);
        }
    }
    let (label, validity) = match matched.len() {
        1 => (*matched.iter().next().unwrap(), Validity::Good),
        _ => (CanonicalLabel::Neutral, Validity::Bad),
    };
    ParsedOutcome {
        label,
        validity,
        matched_categories: matched,
        word_count: words,
        non_stance_word_count: words - stance_words,
    }
}
