//! Zero-shot stance classification harness: dataset loading, prompt
//! rendering for seven prompting schemes, multi-stage chains against an
//! inference backend, output parsing, scoring and output-quality analysis.

pub mod backend;
pub mod corpus;
pub mod dispatch;
pub mod evaluator;
pub mod orchestrator;
pub mod parser;
pub mod pipeline;
pub mod prompting;
pub mod quality;

pub use backend::{
    ApiStyle, BackendConfig, BackendError, Cache, Client, MockScript, MockTransport,
};
pub use corpus::{CanonicalLabel, DatasetConfig, Exemplar, StanceRecord};
pub use evaluator::{EvalReport, EvalRow, Matrix};
pub use orchestrator::{ChainStatus, ChainTranscript};
pub use parser::{ParsedOutcome, StanceVocab, Validity};
pub use prompting::{PromptScheme, RenderedPrompt, StagePlan, TemplateSet};
pub use quality::{Analysis, CorrelationResult, DecisionTree, FeatureVector, TreeParams};
