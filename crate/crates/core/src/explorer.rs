//! A deterministic, landscape-aware scripted provider.
//!
//! Stands in for a model on the builtin landscapes so the full control
//! stack (prompt rendering, response grammars, memory maintenance,
//! interventions) can run and be measured without any LLM. The policy it
//! scripts is intentionally simple:
//!
//! - **local mode**: propose a contraction step toward the active basin's
//!   center plus bounded noise, quantized to a grid. This converges to the
//!   nearest local optimum and then stalls, which is exactly the
//!   stagnation signature the engine must detect.
//! - **probe mode**: entered when the SoTA payload in the prompt scores
//!   *worse* than the previous call's (the signature of a reversion):
//!   propose the configured probe points in order until an improvement
//!   lands. A reverted context is what admits the jump; without a
//!   reversion the explorer never probes.
//!
//! All replies use the engine's response grammars verbatim, and the whole
//! state (rng, cursors, high-water marks) serializes through the provider
//! state hooks so checkpointed runs resume exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::eval::{parse_vector, Landscape, LandscapeKind};
use crate::eval::{DEEP_CENTER, SHALLOW_CENTER};
use crate::orchestrator::parse_sota;
use crate::policy::IslandId;
use crate::provider::{ModelRole, Provider, ProviderError, TemplateName};
use crate::rng::RunRng;

/// Score-change threshold separating noise from a real edge.
const EDGE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorerSettings {
    pub landscape: LandscapeKind,
    /// Contraction factor toward the active basin center per proposal.
    pub pull: f64,
    /// Uniform noise amplitude added to local proposals.
    pub local_step: f64,
    /// Rounding grid for proposed coordinates; bounds attainable precision
    /// so descent terminates at an exact fixpoint.
    pub quantum: f64,
    /// Jump candidates proposed, in order, after a detected reversion.
    pub probe_points: Vec<Vec<f64>>,
    /// Every n-th proposal repeats the previous hypothesis verbatim,
    /// exercising the duplicate-skip path. `None` disables.
    pub repeat_hypothesis_every: Option<u64>,
    pub seed: u64,
}

impl ExplorerSettings {
    pub fn for_landscape(landscape: LandscapeKind, seed: u64) -> Self {
        let probe_points = match landscape {
            LandscapeKind::Sphere => vec![],
            LandscapeKind::DeceptiveTwoBasin => vec![vec![DEEP_CENTER, DEEP_CENTER + 0.1]],
            LandscapeKind::Staircase => vec![vec![2.5], vec![5.5], vec![9.5], vec![10.5]],
        };
        Self {
            landscape,
            pull: 0.6,
            local_step: 0.05,
            quantum: 0.001,
            probe_points,
            repeat_hypothesis_every: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
#[derive(Default)]
enum Mode {
    #[default]
    Local,
    Probing { cursor: usize },
}

/// Per-island trajectory tracking; islands interleave on one provider, so
/// each keeps its own mode, high-water score, and proposal counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
struct IslandTrack {
    proposal_counter: u64,
    #[serde(default = "default_mode_local")]
    mode: Mode,
    last_sota_value: Option<f64>,
    last_hypothesis: Option<(String, String)>,
}

fn default_mode_local() -> Mode {
    Mode::Local
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ExplorerState {
    rng: RunRng,
    islands: BTreeMap<u32, IslandTrack>,
}

#[derive(Debug, Clone)]
pub struct ScriptedExplorer {
    settings: ExplorerSettings,
    landscape: Landscape,
    state: ExplorerState,
}

impl ScriptedExplorer {
    pub fn new(settings: ExplorerSettings) -> Self {
        let landscape = Landscape::new(settings.landscape);
        let state = ExplorerState {
            rng: RunRng::seed_from_u64(settings.seed),
            islands: BTreeMap::new(),
        };
        Self {
            settings,
            landscape,
            state,
        }
    }

    fn track_key(island: Option<IslandId>) -> u32 {
        island.map_or(u32::MAX, |i| i.0)
    }

    /// Tracks the prompt's SoTA score across calls of one island. A strict
    /// worsening is a reversion (enter probe mode from the top of the
    /// probe list); a strict improvement returns to local refinement.
    fn observe_sota(&mut self, island: Option<IslandId>, prompt: &str) -> Option<Vec<f64>> {
        let payload = parse_sota(prompt)?;
        let point = parse_vector(payload)?;
        let value = self.landscape.value(&point);
        let track = self
            .state
            .islands
            .entry(Self::track_key(island))
            .or_default();
        match track.last_sota_value {
            Some(prev) if value > prev + EDGE_EPSILON => {
                track.mode = Mode::Probing { cursor: 0 };
            }
            Some(prev) if value < prev - EDGE_EPSILON => {
                track.mode = Mode::Local;
            }
            _ => {}
        }
        track.last_sota_value = Some(value);
        Some(point)
    }

    fn quantize(&self, x: f64) -> f64 {
        if self.settings.quantum <= 0.0 {
            return x;
        }
        (x / self.settings.quantum).round() * self.settings.quantum
    }

    /// Center of the basin currently holding `at`.
    fn active_center(&self, at: &[f64]) -> Vec<f64> {
        match self.settings.landscape {
            LandscapeKind::Sphere => vec![0.0; at.len()],
            LandscapeKind::DeceptiveTwoBasin => {
                let c = if self.landscape.in_deep_basin(at) {
                    DEEP_CENTER
                } else {
                    SHALLOW_CENTER
                };
                vec![c; at.len()]
            }
            LandscapeKind::Staircase => at.to_vec(),
        }
    }

    fn local_candidate(&mut self, sota: &[f64]) -> Vec<f64> {
        let center = self.active_center(sota);
        // Noise contracts with the remaining distance so descent converges
        // onto the exact grid point at the basin center instead of
        // orbiting it; without a pull target the full step applies.
        let distance = sota
            .iter()
            .zip(&center)
            .map(|(x, c)| (x - c).abs())
            .fold(0.0_f64, f64::max);
        let amp = if distance > 0.0 {
            self.settings.local_step.min(0.1 * distance)
        } else {
            self.settings.local_step
        };
        sota.iter()
            .zip(center)
            .map(|(x, c)| {
                let noise = (self.state.rng.next_f64() * 2.0 - 1.0) * amp;
                self.quantize(x + self.settings.pull * (c - x) + noise)
            })
            .collect()
    }

    fn next_candidate(&mut self, key: u32, sota: &[f64]) -> Vec<f64> {
        let mode = self.state.islands.entry(key).or_default().mode;
        if let Mode::Probing { cursor } = mode {
            if cursor < self.settings.probe_points.len() {
                self.state.islands.get_mut(&key).expect("entry exists").mode =
                    Mode::Probing { cursor: cursor + 1 };
                return self.settings.probe_points[cursor].clone();
            }
        }
        self.local_candidate(sota)
    }

    fn format_payload(candidate: &[f64]) -> String {
        candidate
            .iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Active idea ids as rendered in the repo slot, each with the number
    /// of history lines (hypotheses plus summary) shown beneath it.
    fn repo_ideas(prompt: &str) -> Vec<(u64, usize)> {
        let mut ideas: Vec<(u64, usize)> = Vec::new();
        for line in prompt.lines() {
            if let Some(rest) = line.strip_prefix("Idea ") {
                if let Some(colon) = rest.find(':') {
                    if let Ok(id) = rest[..colon].trim().parse::<u64>() {
                        ideas.push((id, 0));
                        continue;
                    }
                }
            }
            if line.starts_with("  - [step ") || line.starts_with("  Summary: ") {
                if let Some(last) = ideas.last_mut() {
                    last.1 += 1;
                }
            }
        }
        ideas
    }

    fn selection_reply(&mut self, island: Option<IslandId>, prompt: &str) -> String {
        let key = Self::track_key(island);
        let sota = self
            .observe_sota(island, prompt)
            .unwrap_or_else(|| vec![0.0]);
        let counter = self.state.islands.entry(key).or_default().proposal_counter;
        let ideas = Self::repo_ideas(prompt);
        // Concentrate on the idea with the deepest history (so hypothesis
        // caps and summarization get exercised); every third proposal
        // spreads to the newest idea instead.
        let idea_id = if counter % 3 == 2 {
            ideas.iter().map(|(id, _)| *id).max().unwrap_or(0)
        } else {
            ideas
                .iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(id, _)| *id)
                .unwrap_or(0)
        };

        let repeat = self
            .settings
            .repeat_hypothesis_every
            .is_some_and(|n| n > 0 && counter > 0 && counter.is_multiple_of(n));
        let (description, payload) = if repeat {
            self.state.islands[&key]
                .last_hypothesis
                .clone()
                .unwrap_or_else(|| ("repeat with empty history".into(), "0".into()))
        } else {
            let candidate = self.next_candidate(key, &sota);
            let payload = Self::format_payload(&candidate);
            (format!("Evaluate candidate ({payload})"), payload)
        };
        let track = self.state.islands.get_mut(&key).expect("entry exists");
        track.last_hypothesis = Some((description.clone(), payload.clone()));
        track.proposal_counter += 1;
        format!(
            "Idea ID: {idea_id}\nExperiment description: {description}\n```\n{payload}\n```"
        )
    }

    fn capping_reply(prompt: &str) -> String {
        let cap = prompt
            .split("under consideration at ")
            .nth(1)
            .and_then(|rest| {
                let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
                digits.parse::<usize>().ok()
            })
            .unwrap_or(1);
        // Drop the least-explored ideas first (ties toward older ids) so
        // the deep-history threads survive.
        let mut ideas = Self::repo_ideas(prompt);
        ideas.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let excess = ideas.len().saturating_sub(cap);
        let drops: Vec<String> = ideas
            .iter()
            .take(excess)
            .map(|(id, _)| id.to_string())
            .collect();
        format!("Dropping Ideas: [{}]", drops.join(", "))
    }
}

impl Provider for ScriptedExplorer {
    fn complete(
        &mut self,
        island: Option<IslandId>,
        _role: ModelRole,
        template: TemplateName,
        prompt: &str,
    ) -> Result<String, ProviderError> {
        let reply = match template {
            TemplateName::IdeaGeneration => {
                self.observe_sota(island, prompt);
                let counter = self
                    .state
                    .islands
                    .entry(Self::track_key(island))
                    .or_default()
                    .proposal_counter;
                format!(
                    "Idea 1\nIdea: Scripted direction {counter}\nReasoning: deterministic exploration policy"
                )
            }
            TemplateName::IdeaClassification => "Idea Exists: False".to_string(),
            TemplateName::IdeaSelection => self.selection_reply(island, prompt),
            TemplateName::HistorySummarization => {
                "- Results: best trial retained; older local refinements condensed".to_string()
            }
            TemplateName::IdeaCapping => Self::capping_reply(prompt),
        };
        Ok(reply)
    }

    fn snapshot_state(&self) -> Option<serde_json::Value> {
        serde_json::to_value(&self.state).ok()
    }

    fn restore_state(&mut self, state: &serde_json::Value) -> Result<(), ProviderError> {
        self.state = serde_json::from_value(state.clone())
            .map_err(|e| ProviderError::BadState(e.to_string()))?;
        Ok(())
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::render_sota;
    use crate::provider::parse_selection;

    fn selection_prompt(payload: &str, score: f64, repo: &str) -> String {
        format!(
            "Background\n\nThe current state-of-the-art algorithm is as follows:\n\n{}\n\n{repo}\n",
            render_sota(payload, score)
        )
    }

    fn explorer(kind: LandscapeKind) -> ScriptedExplorer {
        ScriptedExplorer::new(ExplorerSettings::for_landscape(kind, 42))
    }

    #[test]
    fn local_mode_contracts_toward_active_center() {
        let mut e = explorer(LandscapeKind::DeceptiveTwoBasin);
        let prompt = selection_prompt("3.2,2.8", 0.616, "Idea 0: seed");
        let reply = e
            .complete(None, ModelRole::Primary, TemplateName::IdeaSelection, &prompt)
            .unwrap();
        let sel = parse_selection(&reply).unwrap();
        let v = parse_vector(&sel.candidate_payload).unwrap();
        // Pulled toward the shallow center (1.5, 1.5), within noise bounds.
        assert!(v[0] < 3.2 && v[0] > 1.5);
        assert!(v[1] < 2.8 && v[1] > 1.5);
    }

    #[test]
    fn worsened_sota_triggers_probe_mode() {
        let mut e = explorer(LandscapeKind::DeceptiveTwoBasin);
        // First call establishes the high-water score near the shallow floor.
        let p1 = selection_prompt("1.5,1.5", 0.25, "Idea 0: seed");
        e.complete(None, ModelRole::Primary, TemplateName::IdeaSelection, &p1)
            .unwrap();
        // SoTA reverted to the worse starting point: probe mode.
        let p2 = selection_prompt("3.2,2.8", 0.616, "Idea 0: seed\nIdea 1: other");
        let reply = e
            .complete(None, ModelRole::Primary, TemplateName::IdeaSelection, &p2)
            .unwrap();
        let sel = parse_selection(&reply).unwrap();
        let v = parse_vector(&sel.candidate_payload).unwrap();
        assert_eq!(v, vec![DEEP_CENTER, DEEP_CENTER + 0.1]);
    }

    #[test]
    fn improvement_returns_to_local_mode() {
        let mut e = explorer(LandscapeKind::DeceptiveTwoBasin);
        let repo = "Idea 0: seed";
        for (payload, score) in [("1.5,1.5", 0.25), ("3.2,2.8", 0.616), ("-1.5,-1.4", 0.006)] {
            e.complete(
                None,
                ModelRole::Primary,
                TemplateName::IdeaSelection,
                &selection_prompt(payload, score, repo),
            )
            .unwrap();
        }
        // Now refining the deep basin.
        let reply = e
            .complete(
                None,
                ModelRole::Primary,
                TemplateName::IdeaSelection,
                &selection_prompt("-1.5,-1.4", 0.006, repo),
            )
            .unwrap();
        let sel = parse_selection(&reply).unwrap();
        let v = parse_vector(&sel.candidate_payload).unwrap();
        let l = Landscape::new(LandscapeKind::DeceptiveTwoBasin);
        assert!(l.in_deep_basin(&v), "landed at {v:?}");
    }

    #[test]
    fn repeat_knob_reissues_previous_hypothesis() {
        let mut settings = ExplorerSettings::for_landscape(LandscapeKind::Sphere, 1);
        settings.repeat_hypothesis_every = Some(2);
        let mut e = ScriptedExplorer::new(settings);
        let repo = "Idea 0: seed";
        let mut selections = Vec::new();
        for _ in 0..3 {
            let reply = e
                .complete(
                    None,
                    ModelRole::Primary,
                    TemplateName::IdeaSelection,
                    &selection_prompt("2,2", 8.0, repo),
                )
                .unwrap();
            selections.push(parse_selection(&reply).unwrap());
        }
        // Counter hits the knob on the third call, which repeats the second.
        assert_ne!(
            selections[0].experiment_description,
            selections[1].experiment_description
        );
        assert_eq!(
            selections[1].experiment_description,
            selections[2].experiment_description
        );
        assert_eq!(
            selections[1].candidate_payload,
            selections[2].candidate_payload
        );
    }

    #[test]
    fn capping_reply_drops_least_history_down_to_cap() {
        let prompt = "Idea Repo (5 active idea(s), 0 known failure(s))\nIdea 0: a\n  - [step 1] x -> score 1 (no gain)\n  - [step 2] y -> score 1 (no gain)\nIdea 1: b\nIdea 2: c\n  - [step 3] z -> score 1 (no gain)\nIdea 3: d\nIdea 4: e\n\nWe want to cap the number of ideas under consideration at 3; therefore, we need to drop some ideas.";
        assert_eq!(
            ScriptedExplorer::capping_reply(prompt),
            "Dropping Ideas: [1, 3]"
        );
    }

    #[test]
    fn state_round_trip_preserves_sequence() {
        let mut a = explorer(LandscapeKind::Sphere);
        let repo = "Idea 0: seed";
        for _ in 0..3 {
            a.complete(
                None,
                ModelRole::Primary,
                TemplateName::IdeaSelection,
                &selection_prompt("2,2", 8.0, repo),
            )
            .unwrap();
        }
        let state = a.snapshot_state().unwrap();
        let mut b = explorer(LandscapeKind::Sphere);
        b.restore_state(&state).unwrap();
        let ra = a
            .complete(
                None,
                ModelRole::Primary,
                TemplateName::IdeaSelection,
                &selection_prompt("2,2", 8.0, repo),
            )
            .unwrap();
        let rb = b
            .complete(
                None,
                ModelRole::Primary,
                TemplateName::IdeaSelection,
                &selection_prompt("2,2", 8.0, repo),
            )
            .unwrap();
        assert_eq!(ra, rb);
    }
}
