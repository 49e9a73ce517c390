use std::path::Path;

use super::{Modality, UserInput};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ROWS: usize = 8;

const DATA_SLOT: &str = "{USER_DATA}";
const DESCRIPTION_SLOT: &str = "{USER_DESCRIPTION}";

const TABULAR: &str = include_str!("../../templates/tabular.txt");
const TEXT: &str = include_str!("../../templates/text.txt");

/// Plain-text prompt template with `{USER_DATA}` and `{USER_DESCRIPTION}` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self> {
        for slot in [DATA_SLOT, DESCRIPTION_SLOT] {
            let lines = text.lines().filter(|l| l.contains(slot)).count();
            if lines != 1 {
                return Err(Error::Config(format!(
                    "prompt template must use {slot} on exactly one line, found {lines}"
                )));
            }
        }
        Ok(Self {
            text: text.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn builtin(modality: Modality) -> Self {
        let text = match modality {
            Modality::Tabular => TABULAR,
            Modality::Text => TEXT,
        };
        Self::parse(text).expect("bundled templates are well-formed")
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// The instruction lines ahead of the worked example.
    pub fn instruction_block(&self) -> &str {
        let end = self
            .text
            .find("\nExample")
            .unwrap_or_else(|| self.text.find(DATA_SLOT).unwrap_or(self.text.len()));
        &self.text[..end]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptText(pub String);

impl PromptText {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Fills the user's rows and description into the final slots.
///
/// A slot with nothing to fill is dropped together with its line. At most
/// `max_rows` rows are embedded.
pub fn build_prompt(input: &UserInput, template: &PromptTemplate, max_rows: usize) -> Result<PromptText> {
    input.validate()?;
    let data = if input.data_sample.is_empty() || max_rows == 0 {
        None
    } else {
        let rows: String = input
            .data_sample
            .iter()
            .take(max_rows)
            .map(|r| format!("\n{} -> {}", r.features.trim(), r.label.trim()))
            .collect();
        Some(rows)
    };
    let description = input
        .description
        .as_deref()
        .map(str::trim)
        .filter(|d| !d.is_empty());

    let mut out = String::with_capacity(template.text.len() + 256);
    for line in template.text.lines() {
        if line.contains(DATA_SLOT) {
            match &data {
                Some(rows) => out.push_str(&line.replace(DATA_SLOT, rows)),
                None => continue,
            }
        } else if line.contains(DESCRIPTION_SLOT) {
            match description {
                Some(d) => out.push_str(&line.replace(DESCRIPTION_SLOT, d)),
                None => continue,
            }
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    Ok(PromptText(out))
}
