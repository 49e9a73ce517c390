//! Turning user data or a description into a one-sentence requirement.
//!
//! Two routes produce a [`Requirement`]: asking a chat-completion endpoint
//! with a prompt from [`build_prompt`], or filling the deterministic
//! [`fallback_template`] from known task metadata. Training and the
//! experiment harness use the template route.

mod client;
mod prompt;

pub use client::{parse_completion, summarize, ChatClient, ChatMessage, HttpChatClient, LlmConfig, LLM_KEY_ENV};
pub use prompt::{build_prompt, PromptTemplate, PromptText, DEFAULT_MAX_ROWS};

use crate::arch::{TaskHint, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Tabular,
    Text,
}

/// One example shown to the requirement generator, already rendered as text.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub features: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserInput {
    pub description: Option<String>,
    pub data_sample: Vec<SampleRow>,
    pub modality: Modality,
}

impl UserInput {
    pub fn validate(&self) -> Result<()> {
        let has_description = self
            .description
            .as_deref()
            .is_some_and(|d| !d.trim().is_empty());
        if !has_description && self.data_sample.is_empty() {
            return Err(Error::input("user input needs a description or data rows"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequirementSource {
    Llm,
    Template,
}

/// A normalized one-sentence task requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct Requirement {
    sentence: String,
    source: RequirementSource,
    task_hint: Option<TaskHint>,
}

impl Requirement {
    /// Normalizes `text` to a single sentence; fails when nothing is left.
    pub fn new(text: &str, source: RequirementSource) -> Result<Self> {
        let sentence = normalize_sentence(text)
            .ok_or_else(|| Error::input("requirement text has no sentence in it"))?;
        Ok(Self {
            sentence,
            source,
            task_hint: None,
        })
    }

    pub fn sentence(&self) -> &str {
        &self.sentence
    }

    pub fn source(&self) -> RequirementSource {
        self.source
    }

    pub fn task_hint(&self) -> Option<&TaskHint> {
        self.task_hint.as_ref()
    }

    pub fn with_hint(mut self, hint: TaskHint) -> Self {
        self.task_hint = Some(hint);
        self
    }
}

/// Trim, keep only the final sentence, and end it with exactly one period.
///
/// A sentence ends at `.`, `!` or `?` followed by whitespace, so decimals
/// such as `4.5` do not split.
pub fn normalize_sentence(text: &str) -> Option<String> {
    let text = text.trim();
    let chars: Vec<char> = text.chars().collect();
    let mut start = 0;
    let mut last = None;
    for i in 0..chars.len() {
        let ends = matches!(chars[i], '.' | '!' | '?')
            && chars.get(i + 1).is_none_or(|c| c.is_whitespace());
        if ends {
            let s: String = chars[start..=i].iter().collect();
            if s.chars().any(|c| c.is_alphanumeric()) {
                last = Some(s);
            }
            start = i + 1;
        }
    }
    let tail: String = chars[start.min(chars.len())..].iter().collect();
    if tail.chars().any(|c| c.is_alphanumeric()) {
        last = Some(tail);
    }
    let body = last?;
    let body = body
        .trim()
        .trim_end_matches(['.', '!', '?', ' '])
        .trim()
        .to_string();
    if body.is_empty() {
        return None;
    }
    Some(format!("{body}."))
}

/// Task facts known without asking a language model.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMeta {
    pub kind: TaskKind,
    pub n_features: usize,
    pub n_classes: Option<usize>,
    pub domain_tag: Option<String>,
}

/// Deterministic requirement sentence built from task metadata.
pub fn fallback_template(meta: &TaskMeta) -> Result<Requirement> {
    if meta.n_features == 0 {
        return Err(Error::input("task must have at least one feature"));
    }
    let domain = meta
        .domain_tag
        .as_deref()
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .ok_or_else(|| Error::input("task metadata has no domain tag"))?;
    if domain.contains(['.', '!', '?']) {
        return Err(Error::input(format!(
            "domain tag {domain:?} must not contain sentence punctuation"
        )));
    }
    let task = match meta.kind {
        TaskKind::Classification => match meta.n_classes {
            Some(k) if k >= 2 => format!("classification into {k} classes"),
            Some(k) => {
                return Err(Error::input(format!(
                    "classification needs at least 2 classes, got {k}"
                )))
            }
            None => return Err(Error::input("classification metadata has no class count")),
        },
        TaskKind::Regression => "regression".to_string(),
    };
    let sentence = format!(
        "This is a tabular {task} task on {}-dimensional rows from {domain}.",
        meta.n_features
    );
    let hint = TaskHint {
        kind: Some(meta.kind),
        n_classes: match meta.kind {
            TaskKind::Classification => meta.n_classes,
            TaskKind::Regression => None,
        },
        n_inputs: Some(meta.n_features),
    };
    Ok(Requirement::new(&sentence, RequirementSource::Template)?.with_hint(hint))
}
