#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use stance_core::backend::{BackendConfig, Cache, Client, MockScript, MockTransport};
use stance_core::corpus::{builtin_exemplars, load_dataset, select_exemplars, CanonicalLabel};
use stance_core::evaluator::EvalRow;
use stance_core::orchestrator::run_experiment;
use stance_core::pipeline::{score_all, RunMeta};
use stance_core::prompting::{build_plan, PromptScheme, StagePlan};
use stance_core::{DatasetConfig, StanceRecord, StanceVocab};

pub const FIXTURES: [&str; 6] = [
    "covid-lies",
    "election2016",
    "phemerumors",
    "semeval2016",
    "srq",
    "wtwt",
];

pub fn test_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(test_dir().join("golden").join(name))
        .unwrap_or_else(|e| panic!("golden {name}: {e}"))
}

pub fn fixture(name: &str) -> (DatasetConfig, Vec<StanceRecord>) {
    let config = DatasetConfig::builtin(name).expect("builtin config");
    let path = test_dir().join("fixtures").join(format!("{name}.jsonl"));
    let records = load_dataset(&path, &config).expect("fixture loads");
    (config, records)
}

pub fn plan_for(
    scheme: PromptScheme,
    config: &DatasetConfig,
    records: &[StanceRecord],
) -> StagePlan {
    let exemplars = match builtin_exemplars(&config.name) {
        Some(ex) => ex,
        None => select_exemplars(config, 3, 11, records).expect("exemplars"),
    };
    build_plan(scheme, config, Some(&exemplars)).expect("plan")
}

pub fn mock_client(
    script: MockScript,
    config: &DatasetConfig,
    records: &[StanceRecord],
    model: &str,
    parallelism: usize,
    cache: Option<Cache>,
) -> Client {
    let golds: HashMap<String, String> = records
        .iter()
        .map(|r| {
            (
                r.id.clone(),
                config.stance_word_for(&r.raw_label, r.canonical_gold),
            )
        })
        .collect();
    let backend = BackendConfig {
        parallelism,
        backoff_base_ms: 1,
        ..BackendConfig::new("mock://", model)
    };
    let client = Client::new(backend, Arc::new(MockTransport::from_script(script, golds)));
    match cache {
        Some(c) => client.with_cache(c),
        None => client,
    }
}

pub fn meta(config: &DatasetConfig, model: &str) -> RunMeta {
    RunMeta {
        dataset: config.name.clone(),
        model: model.into(),
        config_hash: "test".into(),
        seed: 0,
    }
}

/// Runs one mock experiment end to end and returns the scored rows.
pub fn mock_rows(
    name: &str,
    scheme: PromptScheme,
    script: MockScript,
    model: &str,
    parallelism: usize,
) -> Vec<EvalRow> {
    let (config, records) = fixture(name);
    let plan = plan_for(scheme, &config, &records);
    let client = mock_client(script, &config, &records, model, parallelism, None);
    let transcripts = run_experiment(&records, &plan, &client);
    score_all(
        &records,
        &transcripts,
        &StanceVocab::default(),
        &meta(&config, model),
    )
}

/// Macro-F1 from an explicit 3×3 confusion matrix, using
/// F1 = 2TP / (2TP + FP + FN) and 0 for classes with an empty denominator.
pub fn oracle_macro_f1(pairs: &[(CanonicalLabel, CanonicalLabel)]) -> f64 {
    let labels = [
        CanonicalLabel::Agree,
        CanonicalLabel::Disagree,
        CanonicalLabel::Neutral,
    ];
    let mut m = [[0u64; 3]; 3];
    for (g, p) in pairs {
        let gi = labels.iter().position(|l| l == g).unwrap();
        let pi = labels.iter().position(|l| l == p).unwrap();
        m[gi][pi] += 1;
    }
    let mut sum = 0.0;
    for (c, row) in m.iter().enumerate() {
        let tp = row[c];
        let fp: u64 = m.iter().map(|r| r[c]).sum::<u64>() - tp;
        let fn_: u64 = row.iter().sum::<u64>() - tp;
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            sum += (2 * tp) as f64 / denom as f64;
        }
    }
    sum / 3.0
}

/// Pearson r from raw sums, independent of the centered implementation.
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

/// Every (feature, midpoint) candidate scored by weighted Gini; returns the
/// minimum under (lowest feature, lowest threshold) tie-breaking.
pub fn oracle_root_split(x: &[Vec<f64>], y: &[bool]) -> Option<(usize, f64, f64)> {
    let gini = |ys: &[bool]| {
        if ys.is_empty() {
            return 0.0;
        }
        let p = ys.iter().filter(|&&b| b).count() as f64 / ys.len() as f64;
        1.0 - p * p - (1.0 - p) * (1.0 - p)
    };
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<bool> = x
                .iter()
                .zip(y)
                .filter(|(r, _)| r[f] <= t)
                .map(|(_, &b)| b)
                .collect();
            let right: Vec<bool> = x
                .iter()
                .zip(y)
                .filter(|(r, _)| r[f] > t)
                .map(|(_, &b)| b)
                .collect();
            let n = y.len() as f64;
            let score = left.len() as f64 / n * gini(&left) + right.len() as f64 / n * gini(&right);
            // strict improvement only, so earlier (feature, threshold) wins ties
            if best.is_none_or(|(_, _, s)| score < s - 1e-12) {
                best = Some((f, t, score));
            }
        }
    }
    best
}
