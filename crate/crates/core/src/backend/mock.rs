use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{BackendConfig, Transport, TransportError};
use crate::prompting::RenderedPrompt;

/// Hex SHA-256 of a prompt's text; the key used by scripted mock maps.
pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Scripted replies for offline runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockScript {
    /// Replies keyed by [`prompt_hash`]; unknown prompts get `default` or fail.
    Map {
        map: BTreeMap<String, String>,
        default: Option<String>,
    },
    /// Final stages answer with the record's gold option word.
    EchoGold,
    /// Every stage answers with the same text.
    Always(String),
}

impl MockScript {
    /// Accepts `{"map": {hash: text}, "default"?: text}`, `{"rule": "echo_gold"}`,
    /// `{"always": word}` or `{"rule": "always", "word": word}`.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let str_field = |name: &str| v.get(name).and_then(Value::as_str).map(str::to_string);
        if let Some(map) = v.get("map") {
            let map: BTreeMap<String, String> =
                serde_json::from_value(map.clone()).map_err(|e| format!("map: {e}"))?;
            return Ok(Self::Map {
                map,
                default: str_field("default"),
            });
        }
        if let Some(word) = str_field("always") {
            return Ok(Self::Always(word));
        }
        match v.get("rule") {
            Some(Value::String(r)) if r == "echo_gold" => Ok(Self::EchoGold),
            Some(Value::String(r)) if r == "always" => str_field("word")
                .map(Self::Always)
                .ok_or_else(|| "rule always needs word".into()),
            Some(Value::Object(o)) if o.contains_key("always") => o["always"]
                .as_str()
                .map(|w| Self::Always(w.to_string()))
                .ok_or_else(|| "always needs a string".into()),
            _ => Err("mock script needs \"map\", \"always\" or \"rule\"".into()),
        }
    }
}

type ReplyFn = dyn Fn(&RenderedPrompt) -> Result<String, TransportError> + Send + Sync;

/// In-process stand-in for an inference server.
pub struct MockTransport {
    reply: Box<ReplyFn>,
}

impl fmt::Debug for MockTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MockTransport")
    }
}

impl MockTransport {
    pub fn from_fn(
        f: impl Fn(&RenderedPrompt) -> Result<String, TransportError> + Send + Sync + 'static,
    ) -> Self {
        Self { reply: Box::new(f) }
    }

    /// `gold_words` maps record ids to the option word to answer with on
    /// final stages; only needed by [`MockScript::EchoGold`].
    pub fn from_script(script: MockScript, gold_words: HashMap<String, String>) -> Self {
        match script {
            MockScript::Always(word) => Self::from_fn(move |_| Ok(word.clone())),
            MockScript::Map { map, default } => Self::from_fn(move |p| {
                map.get(&prompt_hash(&p.text))
                    .or(default.as_ref())
                    .cloned()
                    .ok_or_else(|| TransportError::Fatal("no scripted completion".into()))
            }),
            MockScript::EchoGold => Self::from_fn(move |p| {
                if p.is_final {
                    gold_words.get(&p.record_id).cloned().ok_or_else(|| {
                        TransportError::Fatal(format!("no gold for record {}", p.record_id))
                    })
                } else {
                    Ok(format!(
                        "notes from stage {} on record {}",
                        p.stage_index, p.record_id
                    ))
                }
            }),
        }
    }
}

impl Transport for MockTransport {
    fn send(&self, _: &BackendConfig, prompt: &RenderedPrompt) -> Result<String, TransportError> {
        (self.reply)(prompt)
    }
}
