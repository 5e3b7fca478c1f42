//! Glue between transcripts and result artifacts: scoring, JSONL writers,
//! config hashing and the prompt export consumed by fine-tuning.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CanonicalLabel, DatasetConfig, StanceRecord};
use crate::evaluator::EvalRow;
use crate::orchestrator::{ChainStatus, ChainTranscript, StageExchange};
use crate::parser::{parse, StanceVocab, Validity};
use crate::prompting::{record_bindings, render_stage, PromptError, PromptScheme, StagePlan};

/// Identifies a run in every artifact it writes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub dataset: String,
    pub model: String,
    pub config_hash: String,
    pub seed: u64,
}

/// Hex SHA-256 of the compact JSON form of `config`. Object keys serialize
/// in sorted order, so equal configs hash equally.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

/// Scores one transcript. Aborted chains count as an invalid output.
pub fn score(
    transcript: &ChainTranscript,
    gold: CanonicalLabel,
    vocab: &StanceVocab,
    meta: &RunMeta,
) -> EvalRow {
    let (pred, validity, word_count, non_stance_word_count, aborted) = match transcript.status {
        ChainStatus::Complete => {
            let p = parse(&transcript.final_completion, vocab);
            (
                p.label,
                p.validity,
                p.word_count,
                p.non_stance_word_count,
                false,
            )
        }
        ChainStatus::Aborted { .. } => (CanonicalLabel::Neutral, Validity::Bad, 0, 0, true),
    };
    EvalRow {
        record_id: transcript.record_id.clone(),
        dataset: meta.dataset.clone(),
        model: meta.model.clone(),
        scheme: transcript.scheme,
        gold,
        pred,
        validity,
        word_count,
        non_stance_word_count,
        aborted,
        config_hash: meta.config_hash.clone(),
        seed: meta.seed,
    }
}

/// Scores transcripts against the records they were produced from.
/// Both slices are in the same order.
pub fn score_all(
    records: &[StanceRecord],
    transcripts: &[ChainTranscript],
    vocab: &StanceVocab,
    meta: &RunMeta,
) -> Vec<EvalRow> {
    assert_eq!(
        records.len(),
        transcripts.len(),
        "one transcript per record"
    );
    records
        .iter()
        .zip(transcripts)
        .map(|(r, t)| {
            debug_assert_eq!(r.id, t.record_id);
            score(t, r.canonical_gold, vocab, meta)
        })
        .collect()
}

/// A transcripts.jsonl line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub record_id: String,
    pub scheme: PromptScheme,
    pub model: String,
    pub stages: Vec<StageExchange>,
    pub final_completion: String,
    pub status: ChainStatus,
    pub config_hash: String,
    pub seed: u64,
}

impl TranscriptLine {
    pub fn new(t: &ChainTranscript, meta: &RunMeta) -> Self {
        Self {
            record_id: t.record_id.clone(),
            scheme: t.scheme,
            model: meta.model.clone(),
            stages: t.stages.clone(),
            final_completion: t.final_completion.clone(),
            status: t.status.clone(),
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
        }
    }
}

/// Writes one compact JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// A prompt-export line: the exact prompt bytes plus the supervision target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExport {
    pub record_id: String,
    pub dataset: String,
    pub prompt: String,
    pub raw_label: String,
    pub canonical: CanonicalLabel,
    pub stance_word: String,
}

/// Renders the single-stage `plan` for every record.
pub fn export_prompts(
    records: &[StanceRecord],
    config: &DatasetConfig,
    plan: &StagePlan,
) -> Result<Vec<PromptExport>, PromptError> {
    records
        .iter()
        .map(|r| {
            let bindings = record_bindings(&r.statement, &r.target);
            let prompt = render_stage(plan, plan.len() - 1, &bindings, &r.id)?;
            Ok(PromptExport {
                record_id: r.id.clone(),
                dataset: config.name.clone(),
                prompt: prompt.text,
                raw_label: r.raw_label.clone(),
                canonical: r.canonical_gold,
                stance_word: config.stance_word_for(&r.raw_label, r.canonical_gold),
            })
        })
        .collect()
}
