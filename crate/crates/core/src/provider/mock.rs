//! Scripted mock provider for tests and deterministic replay.

use serde::{Deserialize, Serialize};

use crate::policy::IslandId;

use super::{ModelRole, Provider, ProviderError, TemplateName};

/// One scripted reply. A call consumes the first unconsumed entry whose
/// matcher accepts it: `template` must match when present, and `contains`
/// must be a substring of the rendered prompt when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default)]
    pub template: Option<TemplateName>,
    #[serde(default)]
    pub contains: Option<String>,
    pub reply: String,
}

impl ScriptEntry {
    pub fn reply(template: TemplateName, reply: impl Into<String>) -> Self {
        Self {
            template: Some(template),
            contains: None,
            reply: reply.into(),
        }
    }

    fn matches(&self, template: TemplateName, prompt: &str) -> bool {
        if let Some(t) = self.template {
            if t != template {
                return false;
            }
        }
        if let Some(needle) = &self.contains {
            if !prompt.contains(needle.as_str()) {
                return false;
            }
        }
        true
    }
}

/// A record of one call the mock served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub island: Option<IslandId>,
    pub role: ModelRole,
    pub template: TemplateName,
    pub prompt: String,
}

/// Deterministic scripted provider. Never touches the network.
#[derive(Debug, Clone)]
pub struct MockProvider {
    script: Vec<ScriptEntry>,
    consumed: Vec<bool>,
    transcript: Vec<CallRecord>,
}

impl MockProvider {
    pub fn new(script: Vec<ScriptEntry>) -> Self {
        let consumed = vec![false; script.len()];
        Self {
            script,
            consumed,
            transcript: Vec::new(),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, ProviderError> {
        let script: Vec<ScriptEntry> = serde_json::from_str(json)
            .map_err(|e| ProviderError::BadState(format!("mock script: {e}")))?;
        Ok(Self::new(script))
    }

    pub fn transcript(&self) -> &[CallRecord] {
        &self.transcript
    }

    pub fn calls(&self) -> usize {
        self.transcript.len()
    }
}

impl Provider for MockProvider {
    fn complete(
        &mut self,
        island: Option<IslandId>,
        role: ModelRole,
        template: TemplateName,
        prompt: &str,
    ) -> Result<String, ProviderError> {
        self.transcript.push(CallRecord {
            island,
            role,
            template,
            prompt: prompt.to_string(),
        });
        for (i, entry) in self.script.iter().enumerate() {
            if !self.consumed[i] && entry.matches(template, prompt) {
                self.consumed[i] = true;
                return Ok(entry.reply.clone());
            }
        }
        Err(ProviderError::ScriptExhausted {
            template: template.as_str(),
        })
    }

    fn snapshot_state(&self) -> Option<serde_json::Value> {
        Some(serde_json::json!({ "consumed": self.consumed }))
    }

    fn restore_state(&mut self, state: &serde_json::Value) -> Result<(), ProviderError> {
        let consumed: Vec<bool> = serde_json::from_value(
            state
                .get("consumed")
                .cloned()
                .ok_or_else(|| ProviderError::BadState("missing `consumed`".into()))?,
        )
        .map_err(|e| ProviderError::BadState(e.to_string()))?;
        if consumed.len() != self.script.len() {
            return Err(ProviderError::BadState(format!(
                "consumed length {} does not match script length {}",
                consumed.len(),
                self.script.len()
            )));
        }
        self.consumed = consumed;
        Ok(())
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_reply_returned_verbatim() {
        let mut mock = MockProvider::new(vec![ScriptEntry::reply(
            TemplateName::IdeaGeneration,
            "Idea 1\nIdea: A\nReasoning: r",
        )]);
        let reply = mock
            .complete(None, ModelRole::Primary, TemplateName::IdeaGeneration, "prompt")
            .unwrap();
        assert_eq!(reply, "Idea 1\nIdea: A\nReasoning: r");
    }

    #[test]
    fn exhausted_script_errors() {
        let mut mock = MockProvider::new(vec![ScriptEntry::reply(
            TemplateName::IdeaGeneration,
            "Idea: A",
        )]);
        mock.complete(None, ModelRole::Primary, TemplateName::IdeaGeneration, "p")
            .unwrap();
        assert!(mock
            .complete(None, ModelRole::Primary, TemplateName::IdeaGeneration, "p")
            .is_err());
    }

    #[test]
    fn matcher_respects_template_and_substring() {
        let mut mock = MockProvider::new(vec![
            ScriptEntry {
                template: Some(TemplateName::IdeaClassification),
                contains: Some("momentum".into()),
                reply: "Idea Exists: False".into(),
            },
            ScriptEntry {
                template: Some(TemplateName::IdeaClassification),
                contains: None,
                reply: "Idea Exists: True\nIdea ID: 0".into(),
            },
        ]);
        let r = mock
            .complete(
                None,
                ModelRole::Secondary,
                TemplateName::IdeaClassification,
                "about gradients",
            )
            .unwrap();
        assert_eq!(r, "Idea Exists: True\nIdea ID: 0");
        let r = mock
            .complete(
                None,
                ModelRole::Secondary,
                TemplateName::IdeaClassification,
                "about momentum",
            )
            .unwrap();
        assert_eq!(r, "Idea Exists: False");
    }

    #[test]
    fn transcript_tracks_every_call() {
        let mut mock = MockProvider::new(vec![
            ScriptEntry::reply(TemplateName::IdeaGeneration, "Idea: A"),
            ScriptEntry::reply(TemplateName::IdeaSelection, "Idea ID: 0"),
        ]);
        let _ = mock.complete(None, ModelRole::Primary, TemplateName::IdeaGeneration, "g");
        let _ = mock.complete(None, ModelRole::Primary, TemplateName::IdeaSelection, "s");
        let _ = mock.complete(None, ModelRole::Primary, TemplateName::IdeaSelection, "boom");
        assert_eq!(mock.calls(), 3);
        assert_eq!(mock.transcript()[1].prompt, "s");
    }

    #[test]
    fn state_round_trip_restores_consumption() {
        let script = vec![
            ScriptEntry::reply(TemplateName::IdeaGeneration, "first"),
            ScriptEntry::reply(TemplateName::IdeaGeneration, "second"),
        ];
        let mut a = MockProvider::new(script.clone());
        a.complete(None, ModelRole::Primary, TemplateName::IdeaGeneration, "p")
            .unwrap();
        let state = a.snapshot_state().unwrap();

        let mut b = MockProvider::new(script);
        b.restore_state(&state).unwrap();
        let r = b
            .complete(None, ModelRole::Primary, TemplateName::IdeaGeneration, "p")
            .unwrap();
        assert_eq!(r, "second");
    }

    #[test]
    fn json_script_loads() {
        let json = r#"[{"template": "idea_generation", "contains": "repo", "reply": "Idea: X"}]"#;
        let mut mock = MockProvider::from_json(json).unwrap();
        let r = mock
            .complete(None, ModelRole::Primary, TemplateName::IdeaGeneration, "the repo")
            .unwrap();
        assert_eq!(r, "Idea: X");
    }
}
