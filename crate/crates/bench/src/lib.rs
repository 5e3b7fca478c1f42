//! Seeded synthetic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stance_core::corpus::{CanonicalLabel, StanceRecord};
use stance_core::quality::FeatureVector;

pub fn label_pairs(n: usize, seed: u64) -> Vec<(CanonicalLabel, CanonicalLabel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                CanonicalLabel::ALL[rng.random_range(0..3)],
                CanonicalLabel::ALL[rng.random_range(0..3)],
            )
        })
        .collect()
}

/// Features and correctness labels loosely tied to label validity.
pub fn quality_rows(n: usize, seed: u64) -> (Vec<FeatureVector>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let valid = rng.random_bool(0.7);
            let fv = FeatureVector {
                raw_output_length: rng.random_range(1..120),
                non_stance_word_count: rng.random_range(0..100),
                has_valid_label: valid as u8,
            };
            (fv, valid && rng.random_bool(0.6))
        })
        .unzip()
}

pub fn records(n: usize) -> Vec<StanceRecord> {
    (0..n)
        .map(|i| StanceRecord {
            id: format!("r{i}"),
            statement: format!(
                "Statement {i} with #hashtags and @mentions about the target, roughly tweet sized."
            ),
            target: "Hillary Clinton".into(),
            raw_label: "AGAINST".into(),
            canonical_gold: CanonicalLabel::Disagree,
        })
        .collect()
}

/// Completions of varying shape for the parser.
pub const OUTPUTS: [&str; 5] = [
    "against",
    "The stance of the statement is against.",
    "I cannot determine this.",
    "for, against, neutral",
    "Based on the hashtags and tone, the author clearly opposes the entity, so the stance is: AGAINST",
];
