//! Prompt templates for the seven prompting schemes and the plans that
//! chain them.
//!
//! Templates are plain text assets, one per (scheme, stage). Two kinds of
//! placeholder appear in them:
//!
//! * `[name]` is dataset-level and is filled once when a plan is built
//!   (`[target_kind]`, `[target_kind_plural]`, `[options_quoted]`,
//!   `[options_listed]`, `[exemplars]`);
//! * `{name}` is instance-level and is filled per record at render time
//!   (`{statement}`, `{event}`, and the outputs of earlier stages).
//!
//! Values are substituted verbatim and never rescanned, so statements that
//! happen to contain braces or brackets render unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetConfig, Exemplar};

/// Bindings every record supplies to every stage.
pub const RECORD_BINDINGS: [&str; 2] = ["statement", "event"];

const DATASET_SLOTS: [&str; 5] = [
    "target_kind",
    "target_kind_plural",
    "options_quoted",
    "options_listed",
    "exemplars",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptScheme {
    #[serde(rename = "task-only")]
    TaskOnly,
    #[serde(rename = "task-definition")]
    TaskDefinition,
    #[serde(rename = "context-analyze")]
    ContextAnalyze,
    #[serde(rename = "context-question")]
    ContextQuestion,
    #[serde(rename = "few-shot")]
    FewShot,
    #[serde(rename = "zero-shot-cot")]
    ZeroShotCoT,
    #[serde(rename = "coda")]
    CoDA,
}

impl PromptScheme {
    pub const ALL: [PromptScheme; 7] = [
        Self::TaskOnly,
        Self::TaskDefinition,
        Self::ContextAnalyze,
        Self::ContextQuestion,
        Self::FewShot,
        Self::ZeroShotCoT,
        Self::CoDA,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TaskOnly => "task-only",
            Self::TaskDefinition => "task-definition",
            Self::ContextAnalyze => "context-analyze",
            Self::ContextQuestion => "context-question",
            Self::FewShot => "few-shot",
            Self::ZeroShotCoT => "zero-shot-cot",
            Self::CoDA => "coda",
        }
    }

    pub fn stage_count(self) -> usize {
        match self {
            Self::ZeroShotCoT => 2,
            Self::CoDA => 6,
            _ => 1,
        }
    }
}

impl fmt::Display for PromptScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptScheme {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|scheme| scheme.as_str() == norm)
            .or(match norm.as_str() {
                "cot" => Some(Self::ZeroShotCoT),
                "fsp" => Some(Self::FewShot),
                _ => None,
            })
            .ok_or_else(|| PromptError::UnknownScheme(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown prompting scheme {0:?}")]
    UnknownScheme(String),
    #[error("few-shot prompting needs at least one exemplar")]
    MissingExemplars,
    #[error("no binding for placeholder {{{0}}}")]
    UnboundPlaceholder(String),
    #[error("stage {index} does not exist (plan has {len} stages)")]
    UnknownStage { index: usize, len: usize },
    #[error("invalid template set: {0}")]
    InvalidTemplates(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
    DatasetSlot(String),
}

/// A parsed template. After plan construction only `{name}` slots remain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    segments: Vec<Segment>,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Self {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut rest = text;
        while let Some(pos) = rest.find(['{', '[']) {
            let open = rest.as_bytes()[pos];
            let close = if open == b'{' { '}' } else { ']' };
            literal.push_str(&rest[..pos]);
            let after = &rest[pos + 1..];
            let slot = after.find(close).map(|end| &after[..end]).filter(|name| {
                if open == b'{' {
                    is_ident(name)
                } else {
                    DATASET_SLOTS.contains(name)
                }
            });
            match slot {
                Some(name) => {
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(if open == b'{' {
                        Segment::Slot(name.to_string())
                    } else {
                        Segment::DatasetSlot(name.to_string())
                    });
                    rest = &after[name.len() + 1..];
                }
                None => {
                    literal.push(open as char);
                    rest = after;
                }
            }
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Self { segments }
    }

    /// Instance-level placeholder names, in first-appearance order.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for seg in &self.segments {
            if let Segment::Slot(name) = seg {
                if !seen.contains(&name.as_str()) {
                    seen.push(name.as_str());
                }
            }
        }
        seen
    }

    fn dataset_placeholders(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::DatasetSlot(n) => Some(n.as_str()),
            _ => None,
        })
    }

    fn fill_dataset(&self, values: &BTreeMap<&str, String>) -> Result<Self, PromptError> {
        let mut segments: Vec<Segment> = Vec::new();
        for seg in &self.segments {
            let lit = match seg {
                Segment::DatasetSlot(name) => values
                    .get(name.as_str())
                    .cloned()
                    .ok_or_else(|| PromptError::UnboundPlaceholder(name.clone()))?,
                Segment::Literal(text) => text.clone(),
                Segment::Slot(_) => {
                    segments.push(seg.clone());
                    continue;
                }
            };
            match segments.last_mut() {
                Some(Segment::Literal(prev)) => prev.push_str(&lit),
                _ => segments.push(Segment::Literal(lit)),
            }
        }
        Ok(Self { segments })
    }

    /// Substitutes every `{name}` slot. Binding values are inserted as-is.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, PromptError> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(name) => out.push_str(
                    bindings
                        .get(name)
                        .ok_or_else(|| PromptError::UnboundPlaceholder(name.clone()))?,
                ),
                Segment::DatasetSlot(name) => {
                    return Err(PromptError::UnboundPlaceholder(name.clone()))
                }
            }
        }
        Ok(out)
    }

    /// The template text with unfilled slots written back as `{name}` or
    /// `[name]`.
    pub fn source(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(name) => out.push_str(&format!("{{{name}}}")),
                Segment::DatasetSlot(name) => out.push_str(&format!("[{name}]")),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub template: PromptTemplate,
    pub produces: String,
    pub consumes: BTreeSet<String>,
}

/// Ordered stages for one scheme, with dataset-level slots already filled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan {
    pub scheme: PromptScheme,
    pub stages: Vec<Stage>,
}

impl StagePlan {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Checks that every stage consumes only record bindings and outputs of
    /// earlier stages, and that its placeholders match its declared inputs.
    pub fn validate(&self) -> Result<(), PromptError> {
        let mut available: BTreeSet<&str> = RECORD_BINDINGS.into_iter().collect();
        for (k, stage) in self.stages.iter().enumerate() {
            for name in &stage.consumes {
                if !available.contains(name.as_str()) {
                    return Err(PromptError::InvalidTemplates(format!(
                        "{} stage {k} consumes {name:?} before it is produced",
                        self.scheme
                    )));
                }
            }
            let used: BTreeSet<&str> = stage.template.placeholders().into_iter().collect();
            let declared: BTreeSet<&str> = stage.consumes.iter().map(String::as_str).collect();
            if used != declared {
                return Err(PromptError::InvalidTemplates(format!(
                    "{} stage {k} uses {used:?} but declares {declared:?}",
                    self.scheme
                )));
            }
            if !available.insert(stage.produces.as_str()) {
                return Err(PromptError::InvalidTemplates(format!(
                    "{} stage {k} re-produces {:?}",
                    self.scheme, stage.produces
                )));
            }
        }
        Ok(())
    }
}

/// A fully rendered prompt ready to send to a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub scheme: PromptScheme,
    pub stage_index: usize,
    pub record_id: String,
    /// Whether this is the last stage of its plan.
    pub is_final: bool,
}

pub fn render_stage(
    plan: &StagePlan,
    stage_index: usize,
    bindings: &BTreeMap<String, String>,
    record_id: &str,
) -> Result<RenderedPrompt, PromptError> {
    let stage = plan
        .stages
        .get(stage_index)
        .ok_or(PromptError::UnknownStage {
            index: stage_index,
            len: plan.len(),
        })?;
    Ok(RenderedPrompt {
        text: stage.template.render(bindings)?,
        scheme: plan.scheme,
        stage_index,
        record_id: record_id.to_string(),
        is_final: stage_index + 1 == plan.len(),
    })
}

/// Few-shot exemplar block: `<kind>: target`, `statement: ...` and
/// `stance: ...` per exemplar, every line separated by a blank line.
pub fn render_fewshot_block(target_kind: &str, exemplars: &[Exemplar]) -> String {
    exemplars
        .iter()
        .map(|ex| {
            format!(
                "{target_kind}: {}\n\nstatement: {}\n\nstance: {}",
                ex.target, ex.statement, ex.stance_word
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// `"a", "b", "c", or "d"`
pub fn quoted_options(options: &[String]) -> String {
    oxford_join(
        &options
            .iter()
            .map(|o| format!("\"{o}\""))
            .collect::<Vec<_>>(),
    )
}

/// `a, b, c, or d`
pub fn listed_options(options: &[String]) -> String {
    oxford_join(options)
}

fn oxford_join(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} or {b}"),
        [init @ .., last] => format!("{}, or {last}", init.join(", ")),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageManifest {
    produces: String,
    consumes: Vec<String>,
}

#[derive(Debug, Clone)]
struct StageAsset {
    template: PromptTemplate,
    produces: String,
    consumes: BTreeSet<String>,
}

/// The complete set of template assets, keyed by scheme.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    schemes: BTreeMap<PromptScheme, Vec<StageAsset>>,
}

macro_rules! builtin_stage {
    ($scheme:literal, $idx:literal) => {
        include_str!(concat!("../templates/", $scheme, "/", $idx, ".txt"))
    };
}

fn strip_final_newline(text: &str) -> &str {
    text.strip_suffix('\n').unwrap_or(text)
}

impl TemplateSet {
    /// The templates bundled with the crate.
    pub fn builtin() -> Self {
        let files: [(&str, &[&str]); 7] = [
            ("task-only", &[builtin_stage!("task-only", "0")]),
            ("task-definition", &[builtin_stage!("task-definition", "0")]),
            ("context-analyze", &[builtin_stage!("context-analyze", "0")]),
            (
                "context-question",
                &[builtin_stage!("context-question", "0")],
            ),
            ("few-shot", &[builtin_stage!("few-shot", "0")]),
            (
                "zero-shot-cot",
                &[
                    builtin_stage!("zero-shot-cot", "0"),
                    builtin_stage!("zero-shot-cot", "1"),
                ],
            ),
            (
                "coda",
                &[
                    builtin_stage!("coda", "0"),
                    builtin_stage!("coda", "1"),
                    builtin_stage!("coda", "2"),
                    builtin_stage!("coda", "3"),
                    builtin_stage!("coda", "4"),
                    builtin_stage!("coda", "5"),
                ],
            ),
        ];
        let manifest = include_str!("../templates/manifest.json");
        Self::assemble(manifest, |scheme, idx| {
            files
                .iter()
                .find(|(name, _)| *name == scheme.as_str())
                .and_then(|(_, texts)| texts.get(idx))
                .map(|t| t.to_string())
                .ok_or_else(|| PromptError::InvalidTemplates(format!("missing {scheme}/{idx}")))
        })
        .expect("bundled templates are valid")
    }

    /// Loads `<dir>/manifest.json` and `<dir>/<scheme>/<stage>.txt`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let manifest = fs::read_to_string(dir.join("manifest.json"))?;
        Self::assemble(&manifest, |scheme, idx| {
            Ok(fs::read_to_string(
                dir.join(scheme.as_str()).join(format!("{idx}.txt")),
            )?)
        })
    }

    fn assemble(
        manifest: &str,
        mut load: impl FnMut(PromptScheme, usize) -> Result<String, PromptError>,
    ) -> Result<Self, PromptError> {
        let manifest: BTreeMap<String, Vec<StageManifest>> = serde_json::from_str(manifest)
            .map_err(|e| PromptError::InvalidTemplates(format!("manifest: {e}")))?;
        let mut schemes = BTreeMap::new();
        for scheme in PromptScheme::ALL {
            let entries = manifest
                .get(scheme.as_str())
                .ok_or_else(|| PromptError::InvalidTemplates(format!("manifest lacks {scheme}")))?;
            if entries.len() != scheme.stage_count() {
                return Err(PromptError::InvalidTemplates(format!(
                    "{scheme} needs {} stages, manifest lists {}",
                    scheme.stage_count(),
                    entries.len()
                )));
            }
            let mut stages = Vec::with_capacity(entries.len());
            for (idx, entry) in entries.iter().enumerate() {
                let text = load(scheme, idx)?;
                stages.push(StageAsset {
                    template: PromptTemplate::parse(strip_final_newline(&text)),
                    produces: entry.produces.clone(),
                    consumes: entry.consumes.iter().cloned().collect(),
                });
            }
            schemes.insert(scheme, stages);
        }
        Ok(Self { schemes })
    }

    pub fn build_plan(
        &self,
        scheme: PromptScheme,
        config: &DatasetConfig,
        exemplars: Option<&[Exemplar]>,
    ) -> Result<StagePlan, PromptError> {
        let assets = &self.schemes[&scheme];
        let needs_exemplars = assets
            .iter()
            .any(|a| a.template.dataset_placeholders().any(|n| n == "exemplars"));
        let exemplars = exemplars.unwrap_or(&[]);
        if (scheme == PromptScheme::FewShot || needs_exemplars) && exemplars.is_empty() {
            return Err(PromptError::MissingExemplars);
        }
        let mut values = BTreeMap::new();
        values.insert("target_kind", config.target_kind.clone());
        values.insert("target_kind_plural", config.target_kind_plural());
        values.insert("options_quoted", quoted_options(&config.stance_options));
        values.insert("options_listed", listed_options(&config.stance_options));
        values.insert(
            "exemplars",
            render_fewshot_block(&config.target_kind, exemplars),
        );

        let stages = assets
            .iter()
            .map(|a| {
                Ok(Stage {
                    template: a.template.fill_dataset(&values)?,
                    produces: a.produces.clone(),
                    consumes: a.consumes.clone(),
                })
            })
            .collect::<Result<Vec<_>, PromptError>>()?;
        let plan = StagePlan { scheme, stages };
        plan.validate()?;
        Ok(plan)
    }
}

/// Builds a plan from the bundled templates.
pub fn build_plan(
    scheme: PromptScheme,
    config: &DatasetConfig,
    exemplars: Option<&[Exemplar]>,
) -> Result<StagePlan, PromptError> {
    TemplateSet::builtin().build_plan(scheme, config, exemplars)
}

/// Record-level bindings for a statement and its target.
pub fn record_bindings(statement: &str, target: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("statement".to_string(), statement.to_string()),
        ("event".to_string(), target.to_string()),
    ])
}
