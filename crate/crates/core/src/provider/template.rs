//! Prompt templates and placeholder rendering.
//!
//! The five templates ship verbatim as text assets with `{name}` slots for
//! the task-specific and evolution-managed sections. Rendering is
//! byte-deterministic and fails loudly on any unbound slot.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ProviderError;

const IDEA_GENERATION: &str = include_str!("../../templates/idea_generation.txt");
const IDEA_CLASSIFICATION: &str = include_str!("../../templates/idea_classification.txt");
const IDEA_SELECTION: &str = include_str!("../../templates/idea_selection.txt");
const HISTORY_SUMMARIZATION: &str = include_str!("../../templates/history_summarization.txt");
const IDEA_CAPPING: &str = include_str!("../../templates/idea_capping.txt");

/// The placeholder names templates may use. Anything else inside `{...}`
/// is treated as literal text.
const PLACEHOLDERS: &[&str] = &[
    "task_background",
    "sota_solution",
    "idea_repo",
    "idea",
    "idea_cap",
    "coding_instructions",
    "attempt_budget",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    IdeaGeneration,
    IdeaClassification,
    IdeaSelection,
    HistorySummarization,
    IdeaCapping,
}

impl TemplateName {
    pub fn body(self) -> &'static str {
        match self {
            Self::IdeaGeneration => IDEA_GENERATION,
            Self::IdeaClassification => IDEA_CLASSIFICATION,
            Self::IdeaSelection => IDEA_SELECTION,
            Self::HistorySummarization => HISTORY_SUMMARIZATION,
            Self::IdeaCapping => IDEA_CAPPING,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::IdeaGeneration => "idea_generation",
            Self::IdeaClassification => "idea_classification",
            Self::IdeaSelection => "idea_selection",
            Self::HistorySummarization => "history_summarization",
            Self::IdeaCapping => "idea_capping",
        }
    }

    pub const ALL: [TemplateName; 5] = [
        Self::IdeaGeneration,
        Self::IdeaClassification,
        Self::IdeaSelection,
        Self::HistorySummarization,
        Self::IdeaCapping,
    ];
}

impl std::fmt::Display for TemplateName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Placeholder bindings. Sorted keys keep error reporting deterministic.
pub type Bindings = BTreeMap<&'static str, String>;

/// Renders a template, substituting every `{placeholder}` slot. Any slot
/// present in the template body but missing from `bindings` is an error
/// naming the placeholder.
pub fn render(template: TemplateName, bindings: &Bindings) -> Result<String, ProviderError> {
    let body = template.body();
    let mut out = String::with_capacity(body.len() + 512);
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        match tail[1..].find('}') {
            Some(close) => {
                let name = &tail[1..close + 1];
                if PLACEHOLDERS.contains(&name) {
                    match bindings.get(name) {
                        Some(value) => out.push_str(value),
                        None => {
                            return Err(ProviderError::UnboundPlaceholder {
                                template: template.as_str(),
                                placeholder: name.to_string(),
                            })
                        }
                    }
                    rest = &tail[close + 2..];
                } else {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
