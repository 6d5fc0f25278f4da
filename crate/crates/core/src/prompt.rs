//! Few-shot chat prompt assembly.
//!
//! A bundle is one system message carrying the template instruction, then
//! one user/assistant turn per example pair (ground truth as the user turn,
//! candidate as the assistant turn), then the sentence to paraphrase.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::ExamplePair;
use crate::error::{Error, Result};

pub const DEFAULT_TEMPLATE_ID: &str = "default-v1";

const BUILTIN_TEMPLATES: [(&str, &str); 2] = [
    (DEFAULT_TEMPLATE_ID, include_str!("../templates/default-v1.txt")),
    (
        "explicit-distance-v1",
        include_str!("../templates/explicit-distance-v1.txt"),
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    fn new(role: Role, content: &str) -> Result<Self> {
        if content.trim().is_empty() {
            return Err(Error::param("content", format!("empty {role} message")));
        }
        Ok(Self {
            role,
            content: content.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<ChatMessage>,
    pub target_d: f64,
    pub n: usize,
    pub input_sentence: String,
    pub template_id: String,
}

/// System-instruction templates keyed by id. Templates may reference
/// `{target_d}`, `{target_percent}` and `{n}`.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self {
            templates: BUILTIN_TEMPLATES
                .iter()
                .map(|(id, text)| (id.to_string(), text.trim().to_string()))
                .collect(),
        }
    }
}

impl TemplateRegistry {
    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) -> Result<()> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Config("template text is empty".into()));
        }
        self.templates.insert(id.into(), text.trim().to_string());
        Ok(())
    }

    /// Registers every `*.txt` file in `dir` under its file stem.
    pub fn load_dir(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        for path in paths {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Config(format!("bad template file name {}", path.display())))?
                .to_string();
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            self.insert(id, text)?;
        }
        Ok(())
    }

    pub fn ids(&self) -> Vec<String> {
        self.templates.keys().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Result<&str> {
        self.templates
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownTemplate {
                requested: id.to_string(),
                known: self.ids(),
            })
    }

    /// Builds the `2n + 2` message bundle for `input_sentence`.
    pub fn assemble(
        &self,
        examples: &[ExamplePair],
        input_sentence: &str,
        target_d: f64,
        template_id: &str,
    ) -> Result<PromptBundle> {
        let template = self.get(template_id)?;
        if examples.is_empty() {
            return Err(Error::param("examples", "at least one example pair is required"));
        }
        if input_sentence.trim().is_empty() {
            return Err(Error::param("input_sentence", "input sentence is empty"));
        }
        let system = template
            .replace("{target_d}", &format!("{target_d}"))
            .replace("{target_percent}", &format!("{}", (target_d * 100.0).round()))
            .replace("{n}", &examples.len().to_string());

        let mut messages = Vec::with_capacity(2 * examples.len() + 2);
        messages.push(ChatMessage::new(Role::System, &system)?);
        for ex in examples {
            messages.push(ChatMessage::new(Role::User, &ex.source)?);
            messages.push(ChatMessage::new(Role::Assistant, &ex.target)?);
        }
        messages.push(ChatMessage::new(Role::User, input_sentence)?);

        Ok(PromptBundle {
            messages,
            target_d,
            n: examples.len(),
            input_sentence: input_sentence.to_string(),
            template_id: template_id.to_string(),
        })
    }
}

/// Assembles a bundle using the built-in templates only.
pub fn assemble_prompt(
    examples: &[ExamplePair],
    input_sentence: &str,
    target_d: f64,
    template_id: &str,
) -> Result<PromptBundle> {
    TemplateRegistry::default().assemble(examples, input_sentence, target_d, template_id)
}

/// The `messages` array of the chat-completion request body.
pub fn render_messages(bundle: &PromptBundle) -> serde_json::Value {
    serde_json::Value::Array(
        bundle
            .messages
            .iter()
            .map(|m| serde_json::json!({ "role": m.role, "content": m.content }))
            .collect(),
    )
}

pub fn parse_messages(fragment: &serde_json::Value) -> Result<Vec<ChatMessage>> {
    Ok(serde_json::from_value(fragment.clone())?)
}
