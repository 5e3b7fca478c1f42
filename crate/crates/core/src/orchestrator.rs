//! Runs stage plans against a backend, one record at a time, threading each
//! stage's raw completion into the bindings of later stages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, Client};
use crate::corpus::StanceRecord;
use crate::dispatch::bounded_map;
use crate::prompting::{record_bindings, render_stage, PromptScheme, StagePlan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageExchange {
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    BackendUnavailable,
    ContextLengthExceeded,
    Rejected,
    Render,
}

impl AbortReason {
    fn from_backend(err: &BackendError) -> Self {
        match err {
            BackendError::BackendUnavailable { .. } => Self::BackendUnavailable,
            BackendError::ContextLengthExceeded(_) => Self::ContextLengthExceeded,
            BackendError::Rejected(_) | BackendError::EmptyPrompt => Self::Rejected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStatus {
    Complete,
    Aborted {
        stage_index: usize,
        reason: AbortReason,
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTranscript {
    pub record_id: String,
    pub scheme: PromptScheme,
    /// Completed stages only; an aborted chain stops at the failing stage.
    pub stages: Vec<StageExchange>,
    /// Last stage's completion; empty when aborted.
    pub final_completion: String,
    pub status: ChainStatus,
}

impl ChainTranscript {
    pub fn is_complete(&self) -> bool {
        self.status == ChainStatus::Complete
    }
}

/// Executes every stage of `plan` for `record`, strictly in order.
pub fn execute(plan: &StagePlan, record: &StanceRecord, client: &Client) -> ChainTranscript {
    let mut bindings: BTreeMap<String, String> = record_bindings(&record.statement, &record.target);
    let mut stages = Vec::with_capacity(plan.len());
    let abort = |stages, stage_index, reason, error: String| ChainTranscript {
        record_id: record.id.clone(),
        scheme: plan.scheme,
        stages,
        final_completion: String::new(),
        status: ChainStatus::Aborted {
            stage_index,
            reason,
            error,
        },
    };
    for (k, stage) in plan.stages.iter().enumerate() {
        let prompt = match render_stage(plan, k, &bindings, &record.id) {
            Ok(p) => p,
            Err(e) => return abort(stages, k, AbortReason::Render, e.to_string()),
        };
        let completion = match client.complete(&prompt) {
            Ok(c) => c,
            Err(e) => return abort(stages, k, AbortReason::from_backend(&e), e.to_string()),
        };
        bindings.insert(stage.produces.clone(), completion.text.clone());
        stages.push(StageExchange {
            prompt: prompt.text,
            completion: completion.text,
        });
    }
    let final_completion = stages
        .last()
        .map(|s| s.completion.clone())
        .unwrap_or_default();
    ChainTranscript {
        record_id: record.id.clone(),
        scheme: plan.scheme,
        stages,
        final_completion,
        status: ChainStatus::Complete,
    }
}

/// One transcript per record, in record order. Records run concurrently up
/// to the client's parallelism; stages within a record never overlap.
pub fn run_experiment(
    records: &[StanceRecord],
    plan: &StagePlan,
    client: &Client,
) -> Vec<ChainTranscript> {
    bounded_map(records, client.config().parallelism, |r| {
        execute(plan, r, client)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendConfig, MockTransport, TransportError};
    use crate::corpus::{builtin_exemplars, CanonicalLabel, DatasetConfig};
    use crate::prompting::build_plan;
    use std::sync::{Arc, Mutex};

    fn record(id: &str) -> StanceRecord {
        StanceRecord {
            id: id.into(),
            statement: format!("statement {id}"),
            target: "Atheism".into(),
            raw_label: "AGAINST".into(),
            canonical_gold: CanonicalLabel::Disagree,
        }
    }

    fn plan(scheme: PromptScheme) -> StagePlan {
        let ex = builtin_exemplars("SemEval2016").unwrap();
        build_plan(
            scheme,
            &DatasetConfig::builtin("SemEval2016").unwrap(),
            Some(&ex),
        )
        .unwrap()
    }

    fn client(
        par: usize,
        f: impl Fn(&crate::prompting::RenderedPrompt) -> Result<String, TransportError>
            + Send
            + Sync
            + 'static,
    ) -> Client {
        let cfg = BackendConfig {
            parallelism: par,
            backoff_base_ms: 1,
            max_retries: 0,
            ..BackendConfig::new("mock://", "m")
        };
        Client::new(cfg, Arc::new(MockTransport::from_fn(f)))
    }

    #[test]
    fn single_stage() {
        let t = execute(
            &plan(PromptScheme::TaskOnly),
            &record("1"),
            &client(1, |_| Ok("agree".into())),
        );
        assert!(t.is_complete());
        assert_eq!(t.stages.len(), 1);
        assert_eq!(t.final_completion, "agree");
    }

    #[test]
    fn cot_threads_reason() {
        let c = client(1, |p| {
            Ok(if p.stage_index == 0 {
                "the author mocks the target".into()
            } else {
                "against".into()
            })
        });
        let t = execute(&plan(PromptScheme::ZeroShotCoT), &record("1"), &c);
        assert_eq!(t.stages.len(), 2);
        assert!(t.stages[1].prompt.starts_with(
            "Therefore, based on your explanation, the author mocks the target, what"
        ));
        assert_eq!(t.final_completion, "against");
        assert_eq!(c.requests_sent(), 2);
    }

    #[test]
    fn coda_threads_all_analyses() {
        let c = client(1, |p| Ok(format!("<out {}>", p.stage_index)));
        let t = execute(&plan(PromptScheme::CoDA), &record("1"), &c);
        assert_eq!(t.stages.len(), 6);
        for k in [3, 4] {
            for j in 0..3 {
                assert!(
                    t.stages[k].prompt.contains(&format!("<out {j}>")),
                    "{k} {j}"
                );
            }
        }
        assert!(t.stages[5].prompt.contains("in favor: <out 3>"));
        assert!(t.stages[5].prompt.contains("against: <out 4>"));
        assert_eq!(c.requests_sent(), 6);
    }

    #[test]
    fn completions_are_injected_untrimmed() {
        let c = client(1, |p| {
            Ok(if p.stage_index == 0 {
                "  padded \n".into()
            } else {
                "for".into()
            })
        });
        let t = execute(&plan(PromptScheme::ZeroShotCoT), &record("1"), &c);
        assert!(t.stages[1]
            .prompt
            .contains("explanation,   padded \n, what"));
    }

    #[test]
    fn failure_aborts_with_partial_stages() {
        let c = client(1, |p| {
            if p.stage_index == 2 {
                Err(TransportError::ContextLength("too long".into()))
            } else {
                Ok("x".into())
            }
        });
        let t = execute(&plan(PromptScheme::CoDA), &record("1"), &c);
        assert_eq!(t.stages.len(), 2);
        assert_eq!(t.final_completion, "");
        assert!(matches!(
            t.status,
            ChainStatus::Aborted {
                stage_index: 2,
                reason: AbortReason::ContextLengthExceeded,
                ..
            }
        ));
    }

    #[test]
    fn experiment_keeps_order_and_isolates_failures() {
        let records: Vec<_> = (0..10).map(|i| record(&i.to_string())).collect();
        for par in [1, 4] {
            let c = client(par, |p| {
                if p.record_id == "7" {
                    Err(TransportError::Fatal("scripted".into()))
                } else {
                    Ok(format!("for {}", p.record_id))
                }
            });
            let ts = run_experiment(&records, &plan(PromptScheme::TaskOnly), &c);
            assert_eq!(ts.len(), 10);
            assert_eq!(ts.iter().filter(|t| t.is_complete()).count(), 9);
            for (i, t) in ts.iter().enumerate() {
                assert_eq!(t.record_id, i.to_string());
            }
        }
    }

    #[test]
    fn stages_within_a_record_are_sequential() {
        let log = Arc::new(Mutex::new(Vec::new()));
        let log2 = log.clone();
        let c = client(8, move |p| {
            log2.lock()
                .unwrap()
                .push((p.record_id.clone(), p.stage_index));
            Ok("x".into())
        });
        let records: Vec<_> = (0..12).map(|i| record(&i.to_string())).collect();
        run_experiment(&records, &plan(PromptScheme::CoDA), &c);
        let log = log.lock().unwrap();
        for r in &records {
            let seq: Vec<usize> = log
                .iter()
                .filter(|(id, _)| *id == r.id)
                .map(|(_, k)| *k)
                .collect();
            assert_eq!(seq, (0..6).collect::<Vec<_>>());
        }
    }
}
