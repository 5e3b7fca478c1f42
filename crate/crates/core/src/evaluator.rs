//! Scoring: unweighted macro-F1 over the fixed three-label set, valid-output
//! proportions, and per-dataset model × scheme matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CanonicalLabel;
use crate::parser::Validity;
use crate::prompting::PromptScheme;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("rows span several (dataset, model, scheme) groups; use build_reports")]
    MixedGroup,
    #[error("reading {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    BadRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// One scored (record, model, scheme) prediction; a line of results.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub record_id: String,
    pub dataset: String,
    pub model: String,
    pub scheme: PromptScheme,
    pub gold: CanonicalLabel,
    pub pred: CanonicalLabel,
    pub validity: Validity,
    pub word_count: usize,
    pub non_stance_word_count: usize,
    /// The chain aborted before a final completion was received.
    #[serde(default)]
    pub aborted: bool,
    #[serde(default)]
    pub config_hash: String,
    #[serde(default)]
    pub seed: u64,
}

impl EvalRow {
    pub fn is_correct(&self) -> bool {
        self.gold == self.pred
    }

    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            dataset: self.dataset.clone(),
            model: self.model.clone(),
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub dataset: String,
    pub model: String,
    pub scheme: PromptScheme,
}

/// `counts[gold][pred]`
pub type Confusion = [[usize; 3]; 3];

pub fn confusion(pairs: &[(CanonicalLabel, CanonicalLabel)]) -> Confusion {
    let mut m = [[0usize; 3]; 3];
    for (gold, pred) in pairs {
        m[gold.index()][pred.index()] += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: CanonicalLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold count.
    pub support: usize,
    pub predicted: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_scores(m: &Confusion) -> Vec<ClassScores> {
    CanonicalLabel::ALL
        .iter()
        .map(|&label| {
            let c = label.index();
            let tp = m[c][c];
            let support: usize = m[c].iter().sum();
            let predicted: usize = m.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                label,
                precision,
                recall,
                f1,
                support,
                predicted,
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1 over {agree, disagree, neutral}. A class
/// that is never gold and never predicted contributes 0.
pub fn macro_f1(pairs: &[(CanonicalLabel, CanonicalLabel)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let scores = class_scores(&confusion(pairs));
    Ok(scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub scheme: PromptScheme,
    pub n: usize,
    pub n_good: usize,
    pub n_aborted: usize,
    pub macro_f1_all: f64,
    /// Absent when no row is good.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_f1_good: Option<f64>,
    pub valid_proportion: f64,
    pub per_class: Vec<ClassScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class_good: Option<Vec<ClassScores>>,
}

/// Report for rows that all share one (dataset, model, scheme).
pub fn build_report(rows: &[EvalRow]) -> Result<EvalReport, EvalError> {
    let first = rows.first().ok_or(EvalError::EmptyEvaluation)?;
    let key = first.group_key();
    if rows.iter().any(|r| r.group_key() != key) {
        return Err(EvalError::MixedGroup);
    }
    let all: Vec<_> = rows.iter().map(|r| (r.gold, r.pred)).collect();
    let good: Vec<_> = rows
        .iter()
        .filter(|r| r.validity == Validity::Good)
        .map(|r| (r.gold, r.pred))
        .collect();
    let macro_f1_good = if good.is_empty() {
        None
    } else {
        Some(macro_f1(&good)?)
    };
    Ok(EvalReport {
        dataset: key.dataset,
        model: key.model,
        scheme: key.scheme,
        n: rows.len(),
        n_good: good.len(),
        n_aborted: rows.iter().filter(|r| r.aborted).count(),
        macro_f1_all: macro_f1(&all)?,
        macro_f1_good,
        valid_proportion: good.len() as f64 / rows.len() as f64,
        per_class: class_scores(&confusion(&all)),
        per_class_good: (!good.is_empty()).then(|| class_scores(&confusion(&good))),
    })
}

/// Groups rows by (dataset, model, scheme) and reports each group, in key
/// order.
pub fn build_reports(rows: &[EvalRow]) -> Result<Vec<EvalReport>, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut groups: BTreeMap<GroupKey, Vec<EvalRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.group_key()).or_default().push(r.clone());
    }
    groups.values().map(|g| build_report(g)).collect()
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<EvalRow>, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::BadRow {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Model × scheme grid for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub dataset: String,
    pub models: Vec<String>,
    pub schemes: Vec<PromptScheme>,
    pub macro_f1_all: Vec<Vec<Option<f64>>>,
    pub macro_f1_good: Vec<Vec<Option<f64>>>,
    pub valid_proportion: Vec<Vec<Option<f64>>>,
}

/// Builds one matrix per dataset. Models are sorted by name; schemes follow
/// the canonical scheme order. Missing combinations are `None`.
pub fn build_matrices(reports: &[EvalReport]) -> Vec<Matrix> {
    let mut by_dataset: BTreeMap<&str, Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        by_dataset.entry(r.dataset.as_str()).or_default().push(r);
    }
    by_dataset
        .into_iter()
        .map(|(dataset, reps)| {
            let models: Vec<String> = reps
                .iter()
                .map(|r| r.model.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let schemes: Vec<PromptScheme> = reps
                .iter()
                .map(|r| r.scheme)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let cells = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
                models
                    .iter()
                    .map(|m| {
                        schemes
                            .iter()
                            .map(|s| {
                                reps.iter()
                                    .find(|r| &r.model == m && r.scheme == *s)
                                    .and_then(|r| f(r))
                            })
                            .collect()
                    })
                    .collect()
            };
            Matrix {
                dataset: dataset.to_string(),
                macro_f1_all: cells(&|r| Some(r.macro_f1_all)),
                macro_f1_good: cells(&|r| r.macro_f1_good),
                valid_proportion: cells(&|r| Some(r.valid_proportion)),
                models,
                schemes,
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Matrix {
    /// Header `model,<scheme>...`, one row per model, macro-F1 (all rows)
    /// rounded to two decimals, blank cells for missing combinations.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for s in &self.schemes {
            out.push(',');
            out.push_str(s.as_str());
        }
        out.push('\n');
        for (model, row) in self.models.iter().zip(&self.macro_f1_all) {
            out.push_str(&csv_field(model));
            for cell in row {
                out.push(',');
                if let Some(v) = cell {
                    out.push_str(&format!("{v:.2}"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// File stem with path separators removed from the dataset name.
    pub fn file_stem(&self) -> String {
        let safe: String = self
            .dataset
            .chars()
            .map(|c| {
                if c.is_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        format!("matrix_{safe}")
    }
}

/// Writes `matrix_<dataset>.csv` and `matrix_<dataset>.json` for each
/// dataset and returns the written paths.
pub fn emit_matrix(reports: &[EvalReport], dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for m in build_matrices(reports) {
        let csv = dir.join(format!("{}.csv", m.file_stem()));
        fs::write(&csv, m.to_csv()).map_err(io_err(&csv))?;
        let json = dir.join(format!("{}.json", m.file_stem()));
        let body = serde_json::to_string_pretty(&m).expect("matrix serializes") + "\n";
        fs::write(&json, body).map_err(io_err(&json))?;
        written.push(csv);
        written.push(json);
    }
    Ok(written)
}
