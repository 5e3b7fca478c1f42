//! Output-quality analysis: does the shape of a completion predict whether
//! its label is correct?

mod correlation;
mod tree;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use correlation::{correlate, pearson_p_value, CorrelationResult};
pub use tree::{best_split, gini, weighted_gini, DecisionTree, Node, SplitChoice, TreeParams};

use crate::evaluator::EvalRow;
use crate::parser::Validity;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("a variable has zero variance")]
    DegenerateVariance,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("feature rows differ in length")]
    RaggedFeatures,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub raw_output_length: usize,
    pub non_stance_word_count: usize,
    pub has_valid_label: u8,
}

impl FeatureVector {
    pub fn from_row(row: &EvalRow) -> Self {
        Self {
            raw_output_length: row.word_count,
            non_stance_word_count: row.non_stance_word_count,
            has_valid_label: u8::from(row.validity == Validity::Good),
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![
            self.raw_output_length as f64,
            self.non_stance_word_count as f64,
            self.has_valid_label as f64,
        ]
    }
}

pub const FEATURE_NAMES: [&str; 3] = [
    "raw_output_length",
    "non_stance_word_count",
    "has_valid_label",
];

pub fn train_tree(
    x: &[FeatureVector],
    y: &[bool],
    params: TreeParams,
) -> Result<DecisionTree, QualityError> {
    let features: Vec<Vec<f64>> = x.iter().map(|f| f.to_vec()).collect();
    DecisionTree::fit(&features, y, params)
}

pub fn tree_predict(tree: &DecisionTree, fv: &FeatureVector) -> bool {
    tree.predict(&fv.to_vec())
}

pub fn tree_accuracy(tree: &DecisionTree, x: &[FeatureVector], y: &[bool]) -> Option<f64> {
    let features: Vec<Vec<f64>> = x.iter().map(|f| f.to_vec()).collect();
    tree.accuracy(&features, y)
}

/// Seeded shuffle of `0..n`, split 80/20. The training side always keeps at
/// least one index.
pub fn train_test_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * 0.8).round() as usize).clamp(n.min(1), n);
    let test = idx.split_off(n_train);
    (idx, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    pub structure: DecisionTree,
    pub feature_names: Vec<String>,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStat {
    pub model: String,
    pub n: usize,
    pub mean_word_count: f64,
}

/// Contents of analysis.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    /// Output length vs correctness over all rows.
    pub correlation: Option<CorrelationResult>,
    /// The same restricted to good rows.
    pub correlation_good: Option<CorrelationResult>,
    pub tree: TreeReport,
    pub length_stats: Vec<LengthStat>,
}

fn length_correlation<'a>(rows: impl Iterator<Item = &'a EvalRow>) -> Option<CorrelationResult> {
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .map(|r| (r.word_count as f64, if r.is_correct() { 1.0 } else { 0.0 }))
        .unzip();
    correlate(&x, &y).ok()
}

/// Runs the full quality analysis. Rows are put in a canonical order first,
/// so the result does not depend on input order.
pub fn analyze(rows: &[EvalRow], seed: u64, params: TreeParams) -> Result<Analysis, QualityError> {
    if rows.is_empty() {
        return Err(QualityError::EmptyTrainingSet);
    }
    let mut rows: Vec<&EvalRow> = rows.iter().collect();
    rows.sort_by(|a, b| {
        (&a.dataset, &a.model, a.scheme, &a.record_id).cmp(&(
            &b.dataset,
            &b.model,
            b.scheme,
            &b.record_id,
        ))
    });

    let correlation = length_correlation(rows.iter().copied());
    let correlation_good = length_correlation(
        rows.iter()
            .copied()
            .filter(|r| r.validity == Validity::Good),
    );

    let features: Vec<FeatureVector> = rows.iter().map(|r| FeatureVector::from_row(r)).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.is_correct()).collect();
    let (train, test) = train_test_split(rows.len(), seed);
    let pick = |idx: &[usize]| -> (Vec<FeatureVector>, Vec<bool>) {
        idx.iter().map(|&i| (features[i], labels[i])).unzip()
    };
    let (train_x, train_y) = pick(&train);
    let (test_x, test_y) = pick(&test);
    let tree = train_tree(&train_x, &train_y, params)?;
    let train_acc = tree_accuracy(&tree, &train_x, &train_y).unwrap_or(0.0);
    let test_acc = tree_accuracy(&tree, &test_x, &test_y);

    let mut lengths: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in &rows {
        let e = lengths.entry(r.model.as_str()).or_default();
        e.0 += 1;
        e.1 += r.word_count;
    }
    let length_stats = lengths
        .into_iter()
        .map(|(model, (n, words))| LengthStat {
            model: model.to_string(),
            n,
            mean_word_count: words as f64 / n as f64,
        })
        .collect();

    Ok(Analysis {
        correlation,
        correlation_good,
        tree: TreeReport {
            structure: tree,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            split_seed: seed,
            n_train: train.len(),
            n_test: test.len(),
            train_acc,
            test_acc,
        },
        length_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_determinism() {
        let (a, b) = train_test_split(10, 3);
        assert_eq!((a.len(), b.len()), (8, 2));
        assert_eq!(train_test_split(10, 3), (a.clone(), b.clone()));
        let mut all: Vec<_> = a.into_iter().chain(b).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(train_test_split(1, 0).0.len(), 1);
    }

    #[test]
    fn separable_held_out_accuracy() {
        let x: Vec<FeatureVector> = (0..50)
            .map(|i| FeatureVector {
                raw_output_length: 1 + (i * 7) % 13,
                non_stance_word_count: (i * 5) % 11,
                has_valid_label: (i % 2) as u8,
            })
            .collect();
        let y: Vec<bool> = x.iter().map(|f| f.has_valid_label == 1).collect();
        let (train, test) = train_test_split(x.len(), 11);
        let sel = |idx: &[usize]| -> (Vec<FeatureVector>, Vec<bool>) {
            idx.iter().map(|&i| (x[i], y[i])).unzip()
        };
        let (tx, ty) = sel(&train);
        let (vx, vy) = sel(&test);
        let tree = train_tree(&tx, &ty, TreeParams::default()).unwrap();
        assert_eq!(tree_accuracy(&tree, &vx, &vy), Some(1.0));
        assert!(tree_predict(
            &tree,
            &FeatureVector {
                raw_output_length: 40,
                non_stance_word_count: 39,
                has_valid_label: 1
            }
        ));
    }
}
