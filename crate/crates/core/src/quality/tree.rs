//! Binary CART classifier with Gini impurity.

use serde::{Deserialize, Serialize};

use super::QualityError;

/// Impurity improvements smaller than this are treated as ties.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 5,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        prediction: bool,
        /// `[negative, positive]`
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        counts: [usize; 2],
        /// Samples with `x[feature] <= threshold`.
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: Node,
    pub n_features: usize,
    pub params: TreeParams,
}

/// Gini impurity of a binary node.
pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

/// Size-weighted Gini of a two-way partition.
pub fn weighted_gini(left: [usize; 2], right: [usize; 2]) -> f64 {
    let nl = (left[0] + left[1]) as f64;
    let nr = (right[0] + right[1]) as f64;
    (nl * gini(left) + nr * gini(right)) / (nl + nr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub impurity: f64,
}

fn count(labels: &[bool], idx: &[usize]) -> [usize; 2] {
    let pos = idx.iter().filter(|&&i| labels[i]).count();
    [idx.len() - pos, pos]
}

/// Best split of the samples in `idx`: lowest weighted Gini; ties go to
/// the lower feature index, then the lower threshold. Candidate thresholds
/// are midpoints between consecutive distinct values.
pub fn best_split(
    features: &[Vec<f64>],
    labels: &[bool],
    idx: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitChoice> {
    let n_features = features.first().map_or(0, Vec::len);
    let total = count(labels, idx);
    let mut best: Option<SplitChoice> = None;
    #[allow(clippy::needless_range_loop)]
    for f in 0..n_features {
        let mut sorted: Vec<(f64, bool)> =
            idx.iter().map(|&i| (features[i][f], labels[i])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        for k in 0..sorted.len().saturating_sub(1) {
            left[sorted[k].1 as usize] += 1;
            let (lo, hi) = (sorted[k].0, sorted[k + 1].0);
            if lo == hi {
                continue;
            }
            let n_left = k + 1;
            if n_left < min_samples_leaf || sorted.len() - n_left < min_samples_leaf {
                continue;
            }
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let impurity = weighted_gini(left, right);
            if best.is_none_or(|b| impurity < b.impurity - EPS) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    impurity,
                });
            }
        }
    }
    best
}

fn majority(counts: [usize; 2]) -> bool {
    counts[1] > counts[0]
}

fn grow(
    features: &[Vec<f64>],
    labels: &[bool],
    idx: &[usize],
    depth: usize,
    params: &TreeParams,
) -> Node {
    let counts = count(labels, idx);
    let leaf = Node::Leaf {
        prediction: majority(counts),
        counts,
    };
    if counts[0] == 0 || counts[1] == 0 || depth >= params.max_depth {
        return leaf;
    }
    // Zero-gain splits are accepted so that XOR-like structure can still be
    // separated deeper down.
    let Some(split) = best_split(features, labels, idx, params.min_samples_leaf) else {
        return leaf;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx
        .iter()
        .partition(|&&i| features[i][split.feature] <= split.threshold);
    Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        counts,
        left: Box::new(grow(features, labels, &l, depth + 1, params)),
        right: Box::new(grow(features, labels, &r, depth + 1, params)),
    }
}

impl DecisionTree {
    pub fn fit(
        features: &[Vec<f64>],
        labels: &[bool],
        params: TreeParams,
    ) -> Result<Self, QualityError> {
        if features.len() != labels.len() {
            return Err(QualityError::LengthMismatch(features.len(), labels.len()));
        }
        if features.is_empty() {
            return Err(QualityError::EmptyTrainingSet);
        }
        let n_features = features[0].len();
        if features.iter().any(|row| row.len() != n_features) {
            return Err(QualityError::RaggedFeatures);
        }
        let idx: Vec<usize> = (0..features.len()).collect();
        let params = TreeParams {
            min_samples_leaf: params.min_samples_leaf.max(1),
            ..params
        };
        Ok(Self {
            root: grow(features, labels, &idx, 0, &params),
            n_features,
            params,
        })
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { prediction, .. } => return *prediction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Fraction of samples predicted correctly; `None` for an empty set.
    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[bool]) -> Option<f64> {
        if features.is_empty() {
            return None;
        }
        let hits = features
            .iter()
            .zip(labels)
            .filter(|(x, y)| self.predict(x) == **y)
            .count();
        Some(hits as f64 / features.len() as f64)
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}
