//! Benchmark corpora: record ingestion, label standardization and few-shot
//! exemplar supply.
//!
//! Every dataset keeps its native label vocabulary on disk. A
//! [`DatasetConfig`] carries the raw-to-canonical map so that evaluation can
//! compare datasets on the shared three-class set while prompts keep each
//! dataset's own option words.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The shared three-class stance vocabulary used for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CanonicalLabel {
    Agree,
    Disagree,
    Neutral,
}

impl CanonicalLabel {
    /// Fixed label order used by every metric and report.
    pub const ALL: [CanonicalLabel; 3] = [Self::Agree, Self::Disagree, Self::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Agree => "agree",
            Self::Disagree => "disagree",
            Self::Neutral => "neutral",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Agree => 0,
            Self::Disagree => 1,
            Self::Neutral => 2,
        }
    }
}

impl fmt::Display for CanonicalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CanonicalLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "agree" => Ok(Self::Agree),
            "disagree" => Ok(Self::Disagree),
            "neutral" => Ok(Self::Neutral),
            _ => Err(CorpusError::UnknownRawLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("raw label {0:?} has no canonical mapping")]
    UnknownRawLabel(String),
    #[error("duplicate record id {id:?} on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("need {requested} exemplars but only {available} are available")]
    InsufficientExemplars { requested: usize, available: usize },
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("reading {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One labeled statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StanceRecord {
    pub id: String,
    pub statement: String,
    pub target: String,
    pub raw_label: String,
    pub canonical_gold: CanonicalLabel,
}

/// On-disk JSONL shape of a record.
#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    id: Option<String>,
    statement: Option<String>,
    target: Option<String>,
    label: Option<String>,
}

/// Per-dataset prompt vocabulary and label map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    /// Noun used for the target in prompts, e.g. `entity` or `rumor`.
    pub target_kind: String,
    /// Plural of `target_kind` for the few-shot preamble. Derived when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_kind_plural: Option<String>,
    /// Prompt option words in (agree, disagree, neutral, unrelated) order.
    pub stance_options: Vec<String>,
    pub label_map: BTreeMap<String, CanonicalLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_file: Option<PathBuf>,
}

impl DatasetConfig {
    /// Reads a config file. A relative `exemplar_file` is resolved against
    /// the config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        if let Some(file) = &config.exemplar_file {
            if file.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                config.exemplar_file = Some(base.join(file));
            }
        }
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let mut config: DatasetConfig =
            serde_json::from_str(text).map_err(|e| CorpusError::InvalidConfig(e.to_string()))?;
        config.label_map = config
            .label_map
            .into_iter()
            .map(|(raw, label)| (normalize_raw(&raw), label))
            .collect();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.name.trim().is_empty() {
            return Err(CorpusError::InvalidConfig("name is empty".into()));
        }
        if self.target_kind.trim().is_empty() {
            return Err(CorpusError::InvalidConfig("target_kind is empty".into()));
        }
        if self.stance_options.len() != 4 {
            return Err(CorpusError::InvalidConfig(format!(
                "stance_options must have exactly 4 entries, got {}",
                self.stance_options.len()
            )));
        }
        if self.label_map.is_empty() {
            return Err(CorpusError::InvalidConfig("label_map is empty".into()));
        }
        Ok(())
    }

    pub fn target_kind_plural(&self) -> String {
        match &self.target_kind_plural {
            Some(p) => p.clone(),
            None => pluralize(&self.target_kind),
        }
    }

    /// The prompt option word corresponding to a canonical label. Neutral
    /// maps to the third option; the fourth ("unrelated") is only produced
    /// when a raw label names it directly.
    pub fn option_for(&self, label: CanonicalLabel) -> &str {
        &self.stance_options[label.index()]
    }

    /// Option word for a raw label: the raw label itself when it is one of
    /// the prompt options, otherwise the option of its canonical class.
    pub fn stance_word_for(&self, raw: &str, canonical: CanonicalLabel) -> String {
        let raw_norm = normalize_raw(raw);
        self.stance_options
            .iter()
            .find(|opt| opt.to_lowercase() == raw_norm)
            .cloned()
            .unwrap_or_else(|| self.option_for(canonical).to_string())
    }

    /// Built-in configs for the six benchmark datasets.
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name.to_ascii_lowercase().as_str() {
            "covid-lies" => include_str!("../data/configs/covid-lies.json"),
            "election2016" => include_str!("../data/configs/election2016.json"),
            "phemerumors" => include_str!("../data/configs/phemerumors.json"),
            "semeval2016" => include_str!("../data/configs/semeval2016.json"),
            "srq" => include_str!("../data/configs/srq.json"),
            "wtwt" => include_str!("../data/configs/wtwt.json"),
            _ => return None,
        };
        let mut config = Self::from_json(text).expect("builtin dataset config is valid");
        // relative to the data directory, meaningless once embedded
        config.exemplar_file = None;
        Some(config)
    }

    pub const BUILTIN_NAMES: [&'static str; 6] = [
        "covid-lies",
        "election2016",
        "phemerumors",
        "SemEval2016",
        "srq",
        "wtwt",
    ];
}

fn pluralize(noun: &str) -> String {
    let mut chars = noun.chars().rev();
    match (chars.next(), chars.next()) {
        (Some('y'), Some(c)) if !"aeiou".contains(c) => format!("{}ies", &noun[..noun.len() - 1]),
        (Some('s'), _) | (Some('x'), _) => format!("{noun}es"),
        _ => format!("{noun}s"),
    }
}

fn normalize_raw(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// Maps a raw dataset label onto the canonical set. Lookup ignores case and
/// surrounding whitespace.
pub fn standardize_label(
    raw: &str,
    map: &BTreeMap<String, CanonicalLabel>,
) -> Result<CanonicalLabel, CorpusError> {
    map.get(&normalize_raw(raw))
        .copied()
        .ok_or_else(|| CorpusError::UnknownRawLabel(raw.to_string()))
}

fn required(field: Option<String>, name: &str, line: usize) -> Result<String, CorpusError> {
    match field {
        Some(v) if !v.trim().is_empty() => Ok(v),
        Some(_) => Err(CorpusError::MalformedRecord {
            line,
            reason: format!("empty {name:?}"),
        }),
        None => Err(CorpusError::MalformedRecord {
            line,
            reason: format!("missing {name:?}"),
        }),
    }
}

/// Parses dataset JSONL from a reader. Line numbers in errors are 1-based;
/// blank lines are ignored.
pub fn read_dataset(
    reader: impl BufRead,
    config: &DatasetConfig,
) -> Result<Vec<StanceRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        let id = required(parsed.id, "id", line_no)?;
        let statement = required(parsed.statement, "statement", line_no)?;
        let target = required(parsed.target, "target", line_no)?;
        let raw_label = required(parsed.label, "label", line_no)?;
        let canonical_gold = standardize_label(&raw_label, &config.label_map)?;
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { id, line: line_no });
        }
        records.push(StanceRecord {
            id,
            statement,
            target,
            raw_label,
            canonical_gold,
        });
    }
    Ok(records)
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    config: &DatasetConfig,
) -> Result<Vec<StanceRecord>, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_dataset(BufReader::new(file), config)
}

/// Writes records in the dataset JSONL format.
pub fn write_dataset(mut out: impl Write, records: &[StanceRecord]) -> io::Result<()> {
    for r in records {
        let line = RecordLine {
            id: Some(r.id.clone()),
            statement: Some(r.statement.clone()),
            target: Some(r.target.clone()),
            label: Some(r.raw_label.clone()),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// The five curated SemEval2016 few-shot exemplars, as exemplar JSONL.
pub const SEMEVAL_EXEMPLARS_JSONL: &str = include_str!("../data/exemplars/semeval2016.jsonl");

/// Built-in curated exemplars, when the dataset ships any.
pub fn builtin_exemplars(dataset: &str) -> Option<Vec<Exemplar>> {
    let config = DatasetConfig::builtin(dataset)?;
    match config.name.as_str() {
        "SemEval2016" => Some(
            read_exemplars(SEMEVAL_EXEMPLARS_JSONL.as_bytes(), &config)
                .expect("builtin exemplars are valid"),
        ),
        _ => None,
    }
}

/// A worked example shown to the model in few-shot prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub target: String,
    pub statement: String,
    pub stance_word: String,
}

pub fn read_exemplars(
    reader: impl BufRead,
    config: &DatasetConfig,
) -> Result<Vec<Exemplar>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Exemplar =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        if !config.stance_options.iter().any(|o| o == &ex.stance_word) {
            return Err(CorpusError::MalformedRecord {
                line: line_no,
                reason: format!("stance_word {:?} is not a stance option", ex.stance_word),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

/// Picks `k` few-shot exemplars.
///
/// With a curated exemplar file the first `k` entries are returned in file
/// order. Otherwise `k` records are drawn from `pool` with a ChaCha8 RNG
/// seeded by `seed`.
pub fn select_exemplars(
    config: &DatasetConfig,
    k: usize,
    seed: u64,
    pool: &[StanceRecord],
) -> Result<Vec<Exemplar>, CorpusError> {
    if let Some(path) = &config.exemplar_file {
        let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
        let curated = read_exemplars(BufReader::new(file), config)?;
        return take_exemplars(curated, k);
    }
    if k == 0 || pool.len() < k {
        return Err(CorpusError::InsufficientExemplars {
            requested: k,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, pool.len(), k);
    Ok(picked
        .into_iter()
        .map(|i| {
            let r = &pool[i];
            Exemplar {
                target: r.target.clone(),
                statement: r.statement.clone(),
                stance_word: config.stance_word_for(&r.raw_label, r.canonical_gold),
            }
        })
        .collect())
}

fn take_exemplars(mut all: Vec<Exemplar>, k: usize) -> Result<Vec<Exemplar>, CorpusError> {
    if k == 0 || all.len() < k {
        return Err(CorpusError::InsufficientExemplars {
            requested: k,
            available: all.len(),
        });
    }
    all.truncate(k);
    Ok(all)
}
