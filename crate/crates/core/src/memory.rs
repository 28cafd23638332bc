//! Hierarchical idea memory with pruning and a permanent failure log.
//!
//! The context an island feeds its model is structured in two tiers:
//! conceptual **ideas** (at most `k_idea` active) each holding a short
//! history of concrete **hypotheses** (at most `k_hyp` records, where a
//! summary produced by compaction counts as one record). New proposals run
//! through a model-based classifier that either merges them into an
//! existing idea or opens a new one. When a history overflows it is
//! condensed into a single summary; when the pool overflows, the model
//! names ideas to drop and a deterministic fallback covers unusable
//! replies. Everything pruned or attempted lands in an append-only
//! [`FailureLog`] so known failures are never re-dispatched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::IslandId;
use crate::provider::{
    parse_capping, parse_classification, parse_summary, render, Bindings, ModelRole, Provider,
    TemplateName,
};

pub const DEFAULT_K_IDEA: usize = 10;
pub const DEFAULT_K_HYP: usize = 5;
pub const DEFAULT_CONTEXT_BUDGET: usize = 4000;

/// Approximate characters per token for the context budget.
const CHARS_PER_TOKEN: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("idea {0} is unknown or pruned (orchestrator integrity bug)")]
    UnknownIdea(u64),
}

/// Identifier of one conceptual idea. Never reused within a pool.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct IdeaId(pub u64);

impl std::fmt::Display for IdeaId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Improved,
    NoGain,
    FailedExecution,
}

impl Verdict {
    fn label(self) -> &'static str {
        match self {
            Self::Improved => "improved",
            Self::NoGain => "no gain",
            Self::FailedExecution => "failed execution",
        }
    }
}

/// One concrete experiment under an idea.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub description: String,
    pub score: Option<f64>,
    pub verdict: Verdict,
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdeaStatus {
    Active,
    Pruned,
}

/// A conceptual direction with its capped experiment history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Idea {
    pub id: IdeaId,
    pub description: String,
    pub hypotheses: Vec<HypothesisRecord>,
    pub summary: Option<String>,
    /// Best (lowest, normalized orientation) score seen under this idea;
    /// survives summarization as structured metadata.
    pub best_score: Option<f64>,
    pub status: IdeaStatus,
    pub created_step: u64,
}

impl Idea {
    /// Records counting toward the hypothesis cap: the summary, when
    /// present, occupies one slot.
    pub fn history_len(&self) -> usize {
        self.hypotheses.len() + usize::from(self.summary.is_some())
    }

    pub fn is_active(&self) -> bool {
        self.status == IdeaStatus::Active
    }
}

/// The capped idea pool of one island.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdeaPool {
    pub ideas: BTreeMap<IdeaId, Idea>,
    pub next_id: u64,
    pub k_idea: usize,
    pub k_hyp: usize,
}

impl IdeaPool {
    pub fn new(k_idea: usize, k_hyp: usize) -> Self {
        assert!(k_idea >= 1 && k_hyp >= 1);
        Self {
            ideas: BTreeMap::new(),
            next_id: 0,
            k_idea,
            k_hyp,
        }
    }

    pub fn active_count(&self) -> usize {
        self.ideas.values().filter(|i| i.is_active()).count()
    }

    pub fn active_ids(&self) -> Vec<IdeaId> {
        self.ideas
            .values()
            .filter(|i| i.is_active())
            .map(|i| i.id)
            .collect()
    }

    pub fn get_active(&self, id: IdeaId) -> Option<&Idea> {
        self.ideas.get(&id).filter(|i| i.is_active())
    }

    fn insert_new(&mut self, description: String, step: u64) -> IdeaId {
        let id = IdeaId(self.next_id);
        self.next_id += 1;
        self.ideas.insert(
            id,
            Idea {
                id,
                description,
                hypotheses: Vec::new(),
                summary: None,
                best_score: None,
                status: IdeaStatus::Active,
                created_step: step,
            },
        );
        id
    }
}

/// Append-only record of attempted hypotheses and pruned ideas, shared
/// across islands. Fingerprints are stable 64-bit hashes of normalized
/// text (lowercased, whitespace collapsed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FailureLog {
    pub entries: Vec<FailureEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub fingerprint: u64,
    pub description: String,
    pub step: u64,
    pub island_id: Option<IslandId>,
}

/// FNV-1a over the normalized text; stable across platforms and runs.
pub fn fingerprint(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut pending_space = false;
    let mut started = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = started;
            continue;
        }
        if pending_space {
            hash = fnv_step(hash, ' ');
            pending_space = false;
        }
        started = true;
        for lc in c.to_lowercase() {
            hash = fnv_step(hash, lc);
        }
    }
    hash
}

fn fnv_step(mut hash: u64, c: char) -> u64 {
    let mut buf = [0u8; 4];
    for b in c.encode_utf8(&mut buf).as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl FailureLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn append(&mut self, description: &str, step: u64, island_id: Option<IslandId>) {
        self.entries.push(FailureEntry {
            fingerprint: fingerprint(description),
            description: description.to_string(),
            step,
            island_id,
        });
    }
}

/// True when the normalized fingerprint of `hypothesis_text` is already
/// logged.
pub fn is_duplicate(log: &FailureLog, hypothesis_text: &str) -> bool {
    let fp = fingerprint(hypothesis_text);
    log.entries.iter().any(|e| e.fingerprint == fp)
}

/// What happened to one ingested proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum ClassificationOutcome {
    MergedInto { id: IdeaId },
    NewIdea { id: IdeaId },
    /// Classifier referenced an id not in the pool; kept as a new idea.
    HallucinatedId { claimed: u64, id: IdeaId },
    /// Classifier reply was unparseable; proposal dropped.
    Skipped { error: String },
}

/// Runs each proposal through the classifier and merges or inserts it.
/// Classifier failures never abort: the proposal is skipped and reported.
pub fn ingest_proposals(
    pool: &mut IdeaPool,
    proposals: &[String],
    classifier: &mut dyn Provider,
    island_id: Option<IslandId>,
    step: u64,
    context_budget: usize,
) -> Vec<(String, ClassificationOutcome)> {
    let mut report = Vec::with_capacity(proposals.len());
    for proposal in proposals {
        let outcome = classify_one(pool, proposal, classifier, island_id, step, context_budget);
        report.push((proposal.clone(), outcome));
    }
    report
}

fn classify_one(
    pool: &mut IdeaPool,
    proposal: &str,
    classifier: &mut dyn Provider,
    island_id: Option<IslandId>,
    step: u64,
    context_budget: usize,
) -> ClassificationOutcome {
    let mut bindings = Bindings::new();
    bindings.insert("idea_repo", render_ideas_only(pool, context_budget));
    bindings.insert("idea", proposal.to_string());
    let prompt = match render(TemplateName::IdeaClassification, &bindings) {
        Ok(p) => p,
        Err(e) => {
            return ClassificationOutcome::Skipped {
                error: e.to_string(),
            }
        }
    };
    let reply = match classifier.complete(
        island_id,
        ModelRole::Secondary,
        TemplateName::IdeaClassification,
        &prompt,
    ) {
        Ok(r) => r,
        Err(e) => {
            return ClassificationOutcome::Skipped {
                error: e.to_string(),
            }
        }
    };
    let parsed = match parse_classification(&reply) {
        Ok(p) => p,
        Err(e) => {
            return ClassificationOutcome::Skipped {
                error: e.to_string(),
            }
        }
    };
    if parsed.exists {
        let claimed = parsed.idea_id.unwrap_or_default();
        let id = IdeaId(claimed);
        if let Some(idea) = pool.ideas.get_mut(&id).filter(|i| i.is_active()) {
            if let Some(updated) = parsed.updated_description {
                idea.description = updated;
            }
            return ClassificationOutcome::MergedInto { id };
        }
        let id = pool.insert_new(proposal.to_string(), step);
        ClassificationOutcome::HallucinatedId { claimed, id }
    } else {
        let description = parsed
            .new_description
            .unwrap_or_else(|| proposal.to_string());
        let id = pool.insert_new(description, step);
        ClassificationOutcome::NewIdea { id }
    }
}

/// Appends an executed hypothesis under `idea_id` and fingerprints it into
/// the failure log.
pub fn record_result(
    pool: &mut IdeaPool,
    idea_id: IdeaId,
    hypothesis: HypothesisRecord,
    log: &mut FailureLog,
    island_id: Option<IslandId>,
) -> Result<(), MemoryError> {
    let idea = pool
        .ideas
        .get_mut(&idea_id)
        .filter(|i| i.is_active())
        .ok_or(MemoryError::UnknownIdea(idea_id.0))?;
    log.append(&hypothesis.description, hypothesis.step, island_id);
    if let Some(score) = hypothesis.score {
        idea.best_score = Some(match idea.best_score {
            Some(best) => best.min(score),
            None => score,
        });
    }
    idea.hypotheses.push(hypothesis);
    Ok(())
}

/// Result of a maintenance pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MaintenanceOutcome {
    Noop,
    Summarized {
        idea_id: IdeaId,
        summary: String,
    },
    /// Summarizer failed; history kept, retried on the next pass.
    SummaryFailed {
        idea_id: IdeaId,
        error: String,
    },
    Pruned {
        pruned: Vec<IdeaId>,
        fallback_used: bool,
    },
}

/// Compacts an idea's history into a single summary record once it
/// exceeds the cap.
pub fn maintain_hypothesis_cap(
    pool: &mut IdeaPool,
    idea_id: IdeaId,
    summarizer: &mut dyn Provider,
    island_id: Option<IslandId>,
) -> MaintenanceOutcome {
    let k_hyp = pool.k_hyp;
    let Some(idea) = pool.ideas.get_mut(&idea_id).filter(|i| i.is_active()) else {
        return MaintenanceOutcome::Noop;
    };
    if idea.history_len() <= k_hyp {
        return MaintenanceOutcome::Noop;
    }
    let mut bindings = Bindings::new();
    bindings.insert("idea", render_idea_history(idea));
    let prompt = match render(TemplateName::HistorySummarization, &bindings) {
        Ok(p) => p,
        Err(e) => {
            return MaintenanceOutcome::SummaryFailed {
                idea_id,
                error: e.to_string(),
            }
        }
    };
    let reply = match summarizer.complete(
        island_id,
        ModelRole::Secondary,
        TemplateName::HistorySummarization,
        &prompt,
    ) {
            Ok(r) => r,
            Err(e) => {
                return MaintenanceOutcome::SummaryFailed {
                    idea_id,
                    error: e.to_string(),
                }
            }
        };
    match parse_summary(&reply) {
        Ok(summary) => {
            idea.hypotheses.clear();
            idea.summary = Some(summary.clone());
            MaintenanceOutcome::Summarized { idea_id, summary }
        }
        Err(e) => MaintenanceOutcome::SummaryFailed {
            idea_id,
            error: e.to_string(),
        },
    }
}

/// Prunes ideas down to the cap: the model names drops; a deterministic
/// fallback (worst best-score first, oldest first among ties, unscored
/// ideas spared until last) covers malformed or insufficient replies.
/// Pruned descriptions and their hypotheses enter the failure log.
pub fn maintain_idea_cap(
    pool: &mut IdeaPool,
    pruner: &mut dyn Provider,
    log: &mut FailureLog,
    step: u64,
    island_id: Option<IslandId>,
    context_budget: usize,
) -> MaintenanceOutcome {
    if pool.active_count() <= pool.k_idea {
        return MaintenanceOutcome::Noop;
    }
    let mut pruned = Vec::new();
    let mut fallback_used = false;

    let mut bindings = Bindings::new();
    bindings.insert("idea_repo", render_ideas_only(pool, context_budget));
    bindings.insert("idea_cap", pool.k_idea.to_string());
    let reply = render(TemplateName::IdeaCapping, &bindings).ok().and_then(|prompt| {
        pruner
            .complete(island_id, ModelRole::Secondary, TemplateName::IdeaCapping, &prompt)
            .ok()
    });
    if let Some(ids) = reply.as_deref().and_then(|r| parse_capping(r).ok()) {
        for raw in ids {
            if pool.active_count() <= pool.k_idea {
                break;
            }
            let id = IdeaId(raw);
            if pool.get_active(id).is_some() {
                prune_idea(pool, id, log, step, island_id);
                pruned.push(id);
            }
        }
    }

    // Deterministic fallback until the cap holds.
    while pool.active_count() > pool.k_idea {
        fallback_used = true;
        let id = fallback_prune_choice(pool).expect("active ideas exist above the cap");
        prune_idea(pool, id, log, step, island_id);
        pruned.push(id);
    }
    MaintenanceOutcome::Pruned {
        pruned,
        fallback_used,
    }
}

fn fallback_prune_choice(pool: &IdeaPool) -> Option<IdeaId> {
    // Scored ideas with the worst best-score go first, oldest breaking
    // ties; untested (unscored) ideas are spared until nothing else is left.
    let active = pool.ideas.values().filter(|i| i.is_active());
    let mut scored: Vec<&Idea> = active.clone().filter(|i| i.best_score.is_some()).collect();
    if let Some(worst) = scored
        .iter()
        .max_by(|a, b| {
            let sa = a.best_score.unwrap_or(f64::INFINITY);
            let sb = b.best_score.unwrap_or(f64::INFINITY);
            sa.partial_cmp(&sb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.created_step.cmp(&a.created_step))
                .then(b.id.cmp(&a.id))
        })
        .copied()
    {
        return Some(worst.id);
    }
    scored.clear();
    active
        .min_by_key(|i| (i.created_step, i.id))
        .map(|i| i.id)
}

fn prune_idea(
    pool: &mut IdeaPool,
    id: IdeaId,
    log: &mut FailureLog,
    step: u64,
    island_id: Option<IslandId>,
) {
    if let Some(idea) = pool.ideas.get_mut(&id) {
        idea.status = IdeaStatus::Pruned;
        log.append(&idea.description, step, island_id);
        for h in &idea.hypotheses {
            if !is_duplicate_inner(log, &h.description) {
                log.append(&h.description, step, island_id);
            }
        }
    }
}

fn is_duplicate_inner(log: &FailureLog, text: &str) -> bool {
    let fp = fingerprint(text);
    log.entries.iter().any(|e| e.fingerprint == fp)
}

fn render_idea_history(idea: &Idea) -> String {
    let mut out = format!("Idea {}: {}\n", idea.id, idea.description);
    if let Some(summary) = &idea.summary {
        out.push_str(&format!("  Summary: {summary}\n"));
    }
    for h in &idea.hypotheses {
        out.push_str(&hypothesis_line(h));
    }
    if let Some(best) = idea.best_score {
        out.push_str(&format!("  Best score under this idea: {best}\n"));
    }
    out
}

fn hypothesis_line(h: &HypothesisRecord) -> String {
    match h.score {
        Some(s) => format!(
            "  - [step {}] {} -> score {} ({})\n",
            h.step,
            h.description,
            s,
            h.verdict.label()
        ),
        None => format!(
            "  - [step {}] {} -> no score ({})\n",
            h.step,
            h.description,
            h.verdict.label()
        ),
    }
}

/// Ideas without the failure-log tail; used inside classification/capping
/// prompts where only the repo matters.
fn render_ideas_only(pool: &IdeaPool, budget_tokens: usize) -> String {
    render_context(pool, &FailureLog::default(), budget_tokens)
}

/// Deterministic serialization of the pool for prompt context. Active
/// ideas sorted by id with description, summary, and the last `k_hyp`
/// hypothesis lines; over budget, the globally earliest hypothesis lines
/// drop first. Byte-identical for identical inputs.
pub fn render_context(pool: &IdeaPool, log: &FailureLog, budget_tokens: usize) -> String {
    let budget_chars = budget_tokens.saturating_mul(CHARS_PER_TOKEN);
    let mut header_lines: Vec<String> = Vec::new();
    header_lines.push(format!(
        "Idea Repo ({} active idea(s), {} known failure(s))\n",
        pool.active_count(),
        log.len()
    ));

    // (idea header index, step, line) for droppable hypothesis lines.
    struct IdeaBlock {
        header: String,
        hyp_lines: Vec<(u64, String)>,
        footer: Vec<String>,
    }
    let mut blocks: Vec<IdeaBlock> = Vec::new();
    for idea in pool.ideas.values().filter(|i| i.is_active()) {
        let mut header = format!("Idea {}: {}\n", idea.id, idea.description);
        if let Some(summary) = &idea.summary {
            header.push_str(&format!("  Summary: {summary}\n"));
        }
        let start = idea.hypotheses.len().saturating_sub(pool.k_hyp);
        let hyp_lines = idea.hypotheses[start..]
            .iter()
            .map(|h| (h.step, hypothesis_line(h)))
            .collect();
        blocks.push(IdeaBlock {
            header,
            hyp_lines,
            footer: Vec::new(),
        });
    }

    let pruned: Vec<String> = pool
        .ideas
        .values()
        .filter(|i| !i.is_active())
        .map(|i| format!("  (pruned) Idea {}: {}\n", i.id, i.description))
        .collect();
    let mut tail = String::new();
    if !pruned.is_empty() {
        tail.push_str("Pruned ideas (do not revisit):\n");
        for line in &pruned {
            tail.push_str(line);
        }
    }

    let assemble = |blocks: &[IdeaBlock]| -> String {
        let mut out = header_lines.join("");
        for b in blocks {
            out.push_str(&b.header);
            for (_, l) in &b.hyp_lines {
                out.push_str(l);
            }
            for l in &b.footer {
                out.push_str(l);
            }
        }
        out.push_str(&tail);
        out
    };

    let mut rendered = assemble(&blocks);
    // Drop globally earliest hypothesis lines (by step, then idea order)
    // until the budget holds; headers and the pruned tail stay.
    while rendered.chars().count() > budget_chars {
        let victim = blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| !b.hyp_lines.is_empty())
            .min_by_key(|(bi, b)| (b.hyp_lines[0].0, *bi));
        match victim {
            Some((bi, _)) => {
                blocks[bi].hyp_lines.remove(0);
            }
            None => break,
        }
        rendered = assemble(&blocks);
    }
    rendered
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{MockProvider, ScriptEntry};

    fn pool() -> IdeaPool {
        IdeaPool::new(3, 2)
    }

    fn classifier_new() -> MockProvider {
        MockProvider::new(vec![ScriptEntry::reply(
            TemplateName::IdeaClassification,
            "Idea Exists: False\nIdea description: fresh direction",
        )])
    }

    fn hyp(desc: &str, score: Option<f64>, verdict: Verdict, step: u64) -> HypothesisRecord {
        HypothesisRecord {
            description: desc.into(),
            score,
            verdict,
            step,
        }
    }

    #[test]
    fn ingest_new_idea_on_false() {
        let mut p = pool();
        let mut c = classifier_new();
        let report = ingest_proposals(&mut p, &["try x".into()], &mut c, None, 0, 1000);
        assert_eq!(
            report[0].1,
            ClassificationOutcome::NewIdea { id: IdeaId(0) }
        );
        assert_eq!(p.ideas[&IdeaId(0)].description, "fresh direction");
    }

    #[test]
    fn ingest_merges_on_true() {
        let mut p = pool();
        p.insert_new("original".into(), 0);
        let mut c = MockProvider::new(vec![ScriptEntry::reply(
            TemplateName::IdeaClassification,
            "Idea Exists: True\nIdea ID: 0\nUpdated description: Combine X with Y",
        )]);
        let report = ingest_proposals(&mut p, &["x plus y".into()], &mut c, None, 1, 1000);
        assert_eq!(
            report[0].1,
            ClassificationOutcome::MergedInto { id: IdeaId(0) }
        );
        assert_eq!(p.ideas[&IdeaId(0)].description, "Combine X with Y");
        assert_eq!(p.active_count(), 1);
    }

    #[test]
    fn ingest_hallucinated_id_becomes_new_idea() {
        let mut p = pool();
        let mut c = MockProvider::new(vec![ScriptEntry::reply(
            TemplateName::IdeaClassification,
            "Idea Exists: True\nIdea ID: 99\nUpdated description: whatever",
        )]);
        let report = ingest_proposals(&mut p, &["try z".into()], &mut c, None, 0, 1000);
        assert_eq!(
            report[0].1,
            ClassificationOutcome::HallucinatedId {
                claimed: 99,
                id: IdeaId(0)
            }
        );
        assert_eq!(p.ideas[&IdeaId(0)].description, "try z");
    }

    #[test]
    fn ingest_survives_unparseable_reply() {
        let mut p = pool();
        let mut c = MockProvider::new(vec![ScriptEntry::reply(
            TemplateName::IdeaClassification,
            "Idea Exists: maybe",
        )]);
        let report = ingest_proposals(&mut p, &["try q".into()], &mut c, None, 0, 1000);
        assert!(matches!(
            report[0].1,
            ClassificationOutcome::Skipped { .. }
        ));
        assert_eq!(p.active_count(), 0);
    }

    #[test]
    fn record_result_appends_and_fingerprints() {
        let mut p = pool();
        let id = IdeaId(p.insert_new("base".into(), 0).0);
        let mut log = FailureLog::default();
        record_result(
            &mut p,
            id,
            hyp("first trial", Some(0.5), Verdict::Improved, 1),
            &mut log,
            Some(IslandId(0)),
        )
        .unwrap();
        assert_eq!(p.ideas[&id].hypotheses.len(), 1);
        assert_eq!(p.ideas[&id].best_score, Some(0.5));
        assert_eq!(log.len(), 1);
        assert!(is_duplicate(&log, "first trial"));
    }

    #[test]
    fn record_result_unknown_idea_is_integrity_error() {
        let mut p = pool();
        let mut log = FailureLog::default();
        let err = record_result(
            &mut p,
            IdeaId(7),
            hyp("x", None, Verdict::FailedExecution, 1),
            &mut log,
            None,
        )
        .unwrap_err();
        assert_eq!(err, MemoryError::UnknownIdea(7));
    }

    #[test]
    fn failed_execution_recorded_without_score() {
        let mut p = pool();
        let id = p.insert_new("base".into(), 0);
        let mut log = FailureLog::default();
        record_result(
            &mut p,
            id,
            hyp("crashy", None, Verdict::FailedExecution, 2),
            &mut log,
            None,
        )
        .unwrap();
        assert_eq!(p.ideas[&id].hypotheses[0].score, None);
        assert_eq!(p.ideas[&id].best_score, None);
    }

    #[test]
    fn duplicate_detection_normalizes_case_and_whitespace() {
        let mut log = FailureLog::default();
        assert!(!is_duplicate(&log, "Try Momentum"));
        log.append("Try Momentum", 1, None);
        assert!(is_duplicate(&log, "try   momentum"));
        assert!(is_duplicate(&log, "  TRY MOMENTUM  "));
        assert!(!is_duplicate(&log, "try momentum now"));
    }

    #[test]
    fn hypothesis_cap_triggers_summarization() {
        let mut p = pool(); // k_hyp = 2
        let id = p.insert_new("base".into(), 0);
        let mut log = FailureLog::default();
        for i in 0..3 {
            record_result(
                &mut p,
                id,
                hyp(&format!("trial {i}"), Some(1.0 - i as f64 * 0.1), Verdict::Improved, i),
                &mut log,
                None,
            )
            .unwrap();
        }
        assert_eq!(p.ideas[&id].history_len(), 3);
        let mut s = MockProvider::new(vec![ScriptEntry::reply(
            TemplateName::HistorySummarization,
            "- Results: best 0.8; smaller steps help",
        )]);
        let out = maintain_hypothesis_cap(&mut p, id, &mut s, None);
        assert!(matches!(out, MaintenanceOutcome::Summarized { .. }));
        assert_eq!(p.ideas[&id].hypotheses.len(), 0);
        assert_eq!(p.ideas[&id].history_len(), 1);
        assert_eq!(
            p.ideas[&id].summary.as_deref(),
            Some("best 0.8; smaller steps help")
        );
        // Best score survives as structured metadata.
        assert_eq!(p.ideas[&id].best_score, Some(0.8));
    }

    #[test]
    fn below_cap_is_noop() {
        let mut p = pool();
        let id = p.insert_new("base".into(), 0);
        let mut s = MockProvider::new(vec![]);
        assert_eq!(
            maintain_hypothesis_cap(&mut p, id, &mut s, None),
            MaintenanceOutcome::Noop
        );
    }

    #[test]
    fn summarizer_failure_keeps_history() {
        let mut p = pool();
        let id = p.insert_new("base".into(), 0);
        let mut log = FailureLog::default();
        for i in 0..3 {
            record_result(
                &mut p,
                id,
                hyp(&format!("t{i}"), None, Verdict::NoGain, i),
                &mut log,
                None,
            )
            .unwrap();
        }
        let mut s = MockProvider::new(vec![]); // exhausted script => provider error
        let out = maintain_hypothesis_cap(&mut p, id, &mut s, None);
        assert!(matches!(out, MaintenanceOutcome::SummaryFailed { .. }));
        assert_eq!(p.ideas[&id].hypotheses.len(), 3);
    }

    #[test]
    fn repeated_summarization_stays_bounded() {
        let mut p = pool(); // k_hyp = 2
        let id = p.insert_new("base".into(), 0);
        let mut log = FailureLog::default();
        for i in 0..10u64 {
            record_result(
                &mut p,
                id,
                hyp(&format!("trial {i}"), Some(1.0), Verdict::NoGain, i),
                &mut log,
                None,
            )
            .unwrap();
            let mut s = MockProvider::new(vec![ScriptEntry::reply(
                TemplateName::HistorySummarization,
                format!("- Results: compacted at step {i}"),
            )]);
            maintain_hypothesis_cap(&mut p, id, &mut s, None);
            assert!(p.ideas[&id].history_len() <= 3); // k_hyp + 1 in-flight
        }
        // Second summary subsumed the first: exactly one summary slot.
        assert!(p.ideas[&id].summary.as_deref().unwrap().contains("step"));
    }

    #[test]
    fn idea_cap_prunes_named_ideas() {
        let mut p = pool(); // k_idea = 3
        for i in 0..4 {
            p.insert_new(format!("idea {i}"), i);
        }
        let mut log = FailureLog::default();
        let mut pruner = MockProvider::new(vec![ScriptEntry::reply(
            TemplateName::IdeaCapping,
            "Dropping Ideas: [2]",
        )]);
        let out = maintain_idea_cap(&mut p, &mut pruner, &mut log, 5, None, 1000);
        match out {
            MaintenanceOutcome::Pruned {
                pruned,
                fallback_used,
            } => {
                assert_eq!(pruned, vec![IdeaId(2)]);
                assert!(!fallback_used);
            }
            other => panic!("unexpected: {other:?}"),
        }
        assert_eq!(p.active_count(), 3);
        assert_eq!(p.ideas[&IdeaId(2)].status, IdeaStatus::Pruned);
        assert!(is_duplicate(&log, "idea 2"));
    }

    #[test]
    fn idea_cap_fallback_on_malformed_reply() {
        let mut p = pool();
        for i in 0..4 {
            let id = p.insert_new(format!("idea {i}"), i);
            p.ideas.get_mut(&id).unwrap().best_score = Some(i as f64);
        }
        let mut log = FailureLog::default();
        let mut pruner = MockProvider::new(vec![ScriptEntry::reply(
            TemplateName::IdeaCapping,
            "I refuse to answer in the requested format.",
        )]);
        let out = maintain_idea_cap(&mut p, &mut pruner, &mut log, 5, None, 1000);
        match out {
            MaintenanceOutcome::Pruned {
                pruned,
                fallback_used,
            } => {
                // Worst best-score (3.0) goes first.
                assert_eq!(pruned, vec![IdeaId(3)]);
                assert!(fallback_used);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn idea_cap_noop_under_cap() {
        let mut p = pool();
        p.insert_new("only".into(), 0);
        let mut log = FailureLog::default();
        let mut pruner = MockProvider::new(vec![]);
        assert_eq!(
            maintain_idea_cap(&mut p, &mut pruner, &mut log, 0, None, 1000),
            MaintenanceOutcome::Noop
        );
    }

    #[test]
    fn pruned_ids_never_reactivate() {
        let mut p = pool();
        for i in 0..4 {
            p.insert_new(format!("idea {i}"), i);
        }
        let mut log = FailureLog::default();
        let mut pruner = MockProvider::new(vec![ScriptEntry::reply(
            TemplateName::IdeaCapping,
            "Dropping Ideas: [0]",
        )]);
        maintain_idea_cap(&mut p, &mut pruner, &mut log, 5, None, 1000);
        // New ideas get fresh ids, not the pruned one.
        let new_id = p.insert_new("replacement".into(), 6);
        assert_eq!(new_id, IdeaId(4));
        assert_eq!(p.ideas[&IdeaId(0)].status, IdeaStatus::Pruned);
    }

    #[test]
    fn render_empty_pool_is_header_only() {
        let p = pool();
        let log = FailureLog::default();
        let text = render_context(&p, &log, 1000);
        assert_eq!(text, "Idea Repo (0 active idea(s), 0 known failure(s))\n");
    }

    #[test]
    fn render_is_deterministic() {
        let mut p = pool();
        let id = p.insert_new("alpha".into(), 0);
        let mut log = FailureLog::default();
        record_result(
            &mut p,
            id,
            hyp("probe", Some(0.3), Verdict::Improved, 1),
            &mut log,
            None,
        )
        .unwrap();
        assert_eq!(
            render_context(&p, &log, 500),
            render_context(&p, &log, 500)
        );
    }

    #[test]
    fn render_drops_earliest_lines_over_budget() {
        let mut p = IdeaPool::new(3, 10);
        let id = p.insert_new("alpha".into(), 0);
        let mut log = FailureLog::default();
        for i in 0..8u64 {
            record_result(
                &mut p,
                id,
                hyp(&format!("hypothesis number {i}"), Some(1.0), Verdict::NoGain, i),
                &mut log,
                None,
            )
            .unwrap();
        }
        let full = render_context(&p, &log, 10_000);
        assert!(full.contains("hypothesis number 0"));
        // ~60 tokens keeps the suffix but not the early lines.
        let tight = render_context(&p, &log, 60);
        assert!(!tight.contains("hypothesis number 0"));
        assert!(tight.contains("hypothesis number 7"));
        assert!(tight.contains("Idea 0: alpha"));
    }

    #[test]
    fn fingerprints_are_stable() {
        // Frozen value guards against accidental hash changes that would
        // invalidate persisted failure logs.
        assert_eq!(fingerprint("Try Momentum"), fingerprint("try   momentum"));
        assert_ne!(fingerprint("a"), fingerprint("b"));
    }
}
