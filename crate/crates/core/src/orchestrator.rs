//! The per-island control loop and cross-island coordination.
//!
//! Each island runs the same sequential iteration: propose ideas, classify
//! them into the pool, select one concrete experiment, skip known
//! duplicates, evaluate, record, update the momentum tracker, compact
//! memory, snapshot, publish progress, and: when stagnation triggers -
//! backtrack or cross over. Islands advance round-robin on one thread so
//! runs are exactly reproducible; the progress board is the only state
//! shared between them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalStatus, Evaluator};
use crate::events::{Clock, EventDraft, EventError, EventKind, EventSink, LogicalClock};
use crate::memory::{
    ingest_proposals, is_duplicate, maintain_hypothesis_cap, maintain_idea_cap, record_result,
    render_context, ClassificationOutcome, FailureLog, HypothesisRecord, IdeaId, IdeaPool,
    MaintenanceOutcome, MemoryError, Verdict,
};
use crate::policy::{
    compute_weights, sample_action, sample_backtrack_target, should_trigger, InterventionKind,
    IslandId, PolicyConfig,
};
use crate::progress::{normalize_score, ProgressTracker, ScoreSpec};
use crate::provider::{render, Bindings, ModelRole, Provider, ProviderError, TemplateName};
use crate::rng::RunRng;

pub const DEFAULT_SNAPSHOT_INTERVAL: u64 = 10;

/// Markers around the best-payload block in rendered prompts, so scripted
/// providers can recover it exactly.
pub const SOTA_OPEN: &str = "<<<";
pub const SOTA_CLOSE: &str = ">>>";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
    #[error("event log failure: {0}")]
    Event(#[from] EventError),
    #[error("memory integrity failure: {0}")]
    Memory(#[from] MemoryError),
    #[error("invalid run configuration: {0}")]
    Config(String),
}

/// Which parts of the intervention machinery are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterventionMode {
    /// Stagnation is measured but never acted on.
    None,
    /// Triggers always revert; the crossover action set is empty.
    BacktrackOnly,
    /// Full backtrack-or-crossover sampling.
    #[default]
    Full,
}

/// Prompt-slot content shared by every island.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSettings {
    pub task_background: String,
    pub coding_instructions: String,
    pub attempt_budget: String,
}

impl Default for PromptSettings {
    fn default() -> Self {
        Self {
            task_background: "Minimize the task score.".into(),
            coding_instructions:
                "Emit the candidate as a fenced block containing the raw payload.".into(),
            attempt_budget: "1000".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub islands: u32,
    /// Iteration budget per island.
    pub iterations: u64,
    pub seed: u64,
    pub beta: f64,
    pub policy: PolicyConfig,
    pub mode: InterventionMode,
    pub snapshot_interval: u64,
    /// Freeze window applied after an intervention; defaults to the
    /// initial freeze.
    pub freeze_steps_after_intervention: u64,
    pub k_idea: usize,
    pub k_hyp: usize,
    /// Approximate token budget for rendered context.
    pub context_budget: usize,
    pub stop_on_target: bool,
    pub prompt: PromptSettings,
    /// Initial candidate payloads, cycled across islands.
    pub initial_payloads: Vec<String>,
    /// Identity of the configuration for checkpoint validation.
    pub config_fingerprint: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let policy = PolicyConfig::default();
        Self {
            islands: 2,
            iterations: 1000,
            seed: 0,
            beta: crate::progress::DEFAULT_BETA,
            freeze_steps_after_intervention: policy.freeze_steps,
            policy,
            mode: InterventionMode::Full,
            snapshot_interval: DEFAULT_SNAPSHOT_INTERVAL,
            k_idea: crate::memory::DEFAULT_K_IDEA,
            k_hyp: crate::memory::DEFAULT_K_HYP,
            context_budget: crate::memory::DEFAULT_CONTEXT_BUDGET,
            stop_on_target: true,
            prompt: PromptSettings::default(),
            initial_payloads: vec!["0".into()],
            config_fingerprint: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.islands == 0 {
            return Err(RunError::Config("islands must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(RunError::Config("beta must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.policy.epsilon_rel) || self.policy.epsilon_rel <= 0.0 {
            return Err(RunError::Config("epsilon_rel must be in (0, 1)".into()));
        }
        if self.policy.alpha <= 0.0 {
            return Err(RunError::Config("alpha must be > 0".into()));
        }
        if self.islands > 1 && self.policy.freeze_steps == 0 {
            return Err(RunError::Config(
                "freeze_steps must be >= 1 with multiple islands".into(),
            ));
        }
        if self.snapshot_interval == 0 {
            return Err(RunError::Config("snapshot_interval must be >= 1".into()));
        }
        if self.k_idea == 0 || self.k_hyp == 0 {
            return Err(RunError::Config("memory caps must be >= 1".into()));
        }
        if self.initial_payloads.is_empty() {
            return Err(RunError::Config("at least one initial payload".into()));
        }
        Ok(())
    }
}

/// An immutable copy of an island's working state at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    pub pool: IdeaPool,
    pub tracker: ProgressTracker,
    pub best_payload: String,
}

/// The full mutable state of one island.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandState {
    pub island_id: IslandId,
    pub tracker: ProgressTracker,
    pub pool: IdeaPool,
    /// Eligible reversion targets, strictly increasing in step.
    pub snapshots: Vec<Snapshot>,
    /// Snapshots invalidated by a reversion; kept for audit, never targets.
    pub archived_snapshots: Vec<Snapshot>,
    pub rng: RunRng,
    /// The SoTA context anchor: own best payload, or an imported one.
    pub current_best_payload: String,
    /// Best score this island ever observed; unlike the tracker it never
    /// reverts, so reports stay monotone across interventions.
    pub best_ever_score: f64,
    pub best_ever_payload: String,
    pub frozen_until: u64,
    pub iterations_done: u64,
    pub backtracks: u64,
    pub crossovers: u64,
    pub done: bool,
}

/// One island's published progress, read by the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardEntry {
    pub a_t: f64,
    pub s_best: f64,
    pub best_payload: String,
    pub updated_step: u64,
}

/// Per-island progress registry; entries update atomically per island.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProgressBoard {
    pub entries: BTreeMap<IslandId, BoardEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalBest {
    pub score: f64,
    pub payload: String,
    pub island_id: IslandId,
    pub iteration: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    BudgetExhausted,
    TargetReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandSummary {
    pub island_id: IslandId,
    pub s_best: f64,
    pub best_ever: f64,
    pub absolute_progress: f64,
    pub momentum: f64,
    pub steps: u64,
    pub iterations: u64,
    pub backtracks: u64,
    pub crossovers: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub best: GlobalBest,
    pub islands: Vec<IslandSummary>,
    pub reason: FinishReason,
}

/// Everything a checkpoint needs to resume a run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub config_fingerprint: u64,
    pub islands: Vec<IslandState>,
    pub board: ProgressBoard,
    pub failure_log: FailureLog,
    pub global_best: GlobalBest,
    pub next_seq: u64,
    pub clock: LogicalClock,
    #[serde(default)]
    pub finished: Option<FinishReason>,
    #[serde(default)]
    pub provider_state: Option<serde_json::Value>,
}

/// Wall-time source for event stamps; the logical variant checkpoints.
#[derive(Debug, Clone)]
pub enum RunClock {
    Logical(LogicalClock),
    #[cfg(feature = "native")]
    System(crate::events::SystemClock),
}

impl Clock for RunClock {
    fn now_ms(&mut self) -> u64 {
        match self {
            Self::Logical(c) => c.now_ms(),
            #[cfg(feature = "native")]
            Self::System(c) => c.now_ms(),
        }
    }
}

enum IterationOutcome {
    /// A fresh score was folded into the tracker.
    Scored(crate::progress::StepOutcome),
    /// The iteration consumed budget without a scored evaluation.
    Barren,
}

pub struct Engine<'a> {
    config: EngineConfig,
    score_spec: ScoreSpec,
    islands: Vec<IslandState>,
    board: ProgressBoard,
    failure_log: FailureLog,
    global_best: GlobalBest,
    next_seq: u64,
    clock: RunClock,
    cursor: usize,
    finished: Option<FinishReason>,
    provider: &'a mut dyn Provider,
    evaluator: &'a mut dyn Evaluator,
    sink: &'a mut dyn EventSink,
}

impl<'a> Engine<'a> {
    /// Initializes a fresh run: evaluates each island's initial payload to
    /// anchor its tracker, takes the step-0 snapshot, and publishes the
    /// board. Emits `run_started` first.
    pub fn new(
        config: EngineConfig,
        provider: &'a mut dyn Provider,
        evaluator: &'a mut dyn Evaluator,
        sink: &'a mut dyn EventSink,
    ) -> Result<Self, RunError> {
        config.validate()?;
        let clock = if provider.is_deterministic() {
            RunClock::Logical(LogicalClock::default())
        } else {
            #[cfg(feature = "native")]
            {
                RunClock::System(crate::events::SystemClock)
            }
            #[cfg(not(feature = "native"))]
            {
                RunClock::Logical(LogicalClock::default())
            }
        };
        let score_spec = evaluator.score_spec().clone();
        let mut engine = Self {
            score_spec,
            islands: Vec::new(),
            board: ProgressBoard::default(),
            failure_log: FailureLog::default(),
            global_best: GlobalBest {
                score: f64::INFINITY,
                payload: String::new(),
                island_id: IslandId(0),
                iteration: 0,
            },
            next_seq: 0,
            clock,
            cursor: 0,
            finished: None,
            provider,
            evaluator,
            sink,
            config,
        };
        engine.emit(EventDraft::new(
            EventKind::RunStarted,
            serde_json::json!({
                "config_fingerprint": engine.config.config_fingerprint,
                "islands": engine.config.islands,
                "iterations": engine.config.iterations,
                "seed": engine.config.seed,
                "mode": engine.config.mode,
            }),
        ))?;
        for i in 0..engine.config.islands {
            engine.init_island(IslandId(i))?;
        }
        if engine.config.iterations == 0 {
            engine.islands.iter_mut().for_each(|is| is.done = true);
        }
        engine.check_termination()?;
        Ok(engine)
    }

    /// Restores a checkpointed run. The caller has already validated the
    /// config fingerprint (or chosen to override).
    pub fn resume(
        config: EngineConfig,
        state: RunState,
        provider: &'a mut dyn Provider,
        evaluator: &'a mut dyn Evaluator,
        sink: &'a mut dyn EventSink,
    ) -> Result<Self, RunError> {
        config.validate()?;
        if let Some(ps) = &state.provider_state {
            provider.restore_state(ps)?;
        }
        let clock = if provider.is_deterministic() {
            RunClock::Logical(state.clock.clone())
        } else {
            #[cfg(feature = "native")]
            {
                RunClock::System(crate::events::SystemClock)
            }
            #[cfg(not(feature = "native"))]
            {
                RunClock::Logical(state.clock.clone())
            }
        };
        let score_spec = evaluator.score_spec().clone();
        let mut engine = Self {
            score_spec,
            islands: state.islands,
            board: state.board,
            failure_log: state.failure_log,
            global_best: state.global_best,
            next_seq: state.next_seq,
            clock,
            cursor: 0,
            finished: state.finished,
            provider,
            evaluator,
            sink,
            config,
        };
        engine.check_termination()?;
        Ok(engine)
    }

    /// Serializable state for checkpointing.
    pub fn run_state(&self) -> RunState {
        RunState {
            config_fingerprint: self.config.config_fingerprint,
            islands: self.islands.clone(),
            board: self.board.clone(),
            failure_log: self.failure_log.clone(),
            global_best: self.global_best.clone(),
            next_seq: self.next_seq,
            clock: match &self.clock {
                RunClock::Logical(c) => c.clone(),
                #[cfg(feature = "native")]
                RunClock::System(_) => LogicalClock::default(),
            },
            finished: self.finished,
            provider_state: self.provider.snapshot_state(),
        }
    }

    pub fn islands(&self) -> &[IslandState] {
        &self.islands
    }

    pub fn board(&self) -> &ProgressBoard {
        &self.board
    }

    pub fn failure_log(&self) -> &FailureLog {
        &self.failure_log
    }

    pub fn global_best(&self) -> &GlobalBest {
        &self.global_best
    }

    pub fn is_finished(&self) -> bool {
        self.finished.is_some()
    }

    pub fn score_spec(&self) -> &ScoreSpec {
        &self.score_spec
    }

    fn emit(&mut self, draft: EventDraft) -> Result<u64, RunError> {
        self.next_seq += 1;
        let t = self.clock.now_ms();
        self.sink.append(self.next_seq, t, draft)?;
        Ok(self.next_seq)
    }

    fn init_island(&mut self, island_id: IslandId) -> Result<(), RunError> {
        let payload = self.config.initial_payloads
            [island_id.0 as usize % self.config.initial_payloads.len()]
        .clone();
        let result = self.evaluator.evaluate(&payload);
        let normalized = match (&result.status, result.score) {
            (EvalStatus::Scored, Some(raw)) => normalize_score(raw, &self.score_spec)
                .map_err(|e| RunError::Config(format!("initial payload for {island_id}: {e}")))?,
            _ => {
                return Err(RunError::Config(format!(
                    "initial payload for {island_id} did not evaluate to a score ({:?})",
                    result.status
                )))
            }
        };
        self.emit(EventDraft::island(
            island_id,
            EventKind::Evaluated,
            serde_json::json!({
                "phase": "initial",
                "status": result.status,
                "raw_score": result.score,
                "score": normalized.value,
                "clamped": normalized.clamped,
                "duration_ms": result.duration_ms,
            }),
        ))?;

        let tracker = ProgressTracker::new(normalized.value, self.config.beta);
        let pool = IdeaPool::new(self.config.k_idea, self.config.k_hyp);
        let mut island = IslandState {
            island_id,
            snapshots: Vec::new(),
            archived_snapshots: Vec::new(),
            rng: RunRng::seed_from_u64(
                self.config
                    .seed
                    .wrapping_add((u64::from(island_id.0) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ),
            current_best_payload: payload.clone(),
            best_ever_score: normalized.value,
            best_ever_payload: payload.clone(),
            frozen_until: 0,
            iterations_done: 0,
            backtracks: 0,
            crossovers: 0,
            done: false,
            tracker,
            pool,
        };
        island.snapshots.push(Snapshot {
            step: 0,
            pool: island.pool.clone(),
            tracker: island.tracker.clone(),
            best_payload: island.current_best_payload.clone(),
        });
        self.emit(EventDraft::island(
            island_id,
            EventKind::SnapshotTaken,
            serde_json::json!({"step": 0, "initial": true}),
        ))?;

        if normalized.value < self.global_best.score {
            self.global_best = GlobalBest {
                score: normalized.value,
                payload,
                island_id,
                iteration: 0,
            };
        }
        self.publish_board(&island);
        self.islands.push(island);
        Ok(())
    }

    fn publish_board(&mut self, island: &IslandState) {
        self.board.entries.insert(
            island.island_id,
            BoardEntry {
                a_t: island.tracker.absolute_progress(&self.score_spec),
                s_best: island.tracker.s_best,
                best_payload: island.current_best_payload.clone(),
                updated_step: island.tracker.step,
            },
        );
    }

    /// Rounds every island has fully completed; drives checkpoint cadence.
    pub fn completed_rounds(&self) -> u64 {
        self.islands
            .iter()
            .map(|i| i.iterations_done)
            .min()
            .unwrap_or(0)
    }

    /// Advances one island by one iteration. Returns `false` once the run
    /// has finished (budget exhausted on every island or target reached).
    pub fn tick(&mut self) -> Result<bool, RunError> {
        if self.finished.is_some() {
            return Ok(false);
        }
        let Some(idx) = self.next_island() else {
            self.check_termination()?;
            return Ok(self.finished.is_none());
        };
        self.run_iteration(idx)?;
        self.check_termination()?;
        Ok(self.finished.is_none())
    }

    /// Runs to completion and reports.
    pub fn run(&mut self) -> Result<RunReport, RunError> {
        while self.tick()? {}
        Ok(self.report())
    }

    pub fn report(&self) -> RunReport {
        RunReport {
            best: self.global_best.clone(),
            islands: self
                .islands
                .iter()
                .map(|i| IslandSummary {
                    island_id: i.island_id,
                    s_best: i.tracker.s_best,
                    best_ever: i.best_ever_score,
                    absolute_progress: i.tracker.absolute_progress(&self.score_spec),
                    momentum: i.tracker.momentum,
                    steps: i.tracker.step,
                    iterations: i.iterations_done,
                    backtracks: i.backtracks,
                    crossovers: i.crossovers,
                })
                .collect(),
            reason: self.finished.unwrap_or(FinishReason::BudgetExhausted),
        }
    }

    fn next_island(&mut self) -> Option<usize> {
        let n = self.islands.len();
        for _ in 0..n {
            let idx = self.cursor % n;
            self.cursor += 1;
            if !self.islands[idx].done {
                return Some(idx);
            }
        }
        None
    }

    fn check_termination(&mut self) -> Result<(), RunError> {
        if self.finished.is_some() {
            return Ok(());
        }
        let target = self.config.stop_on_target
            && self.global_best.score - self.score_spec.bound() <= self.score_spec.gap_epsilon;
        let exhausted = self.islands.iter().all(|i| i.done);
        if target || exhausted {
            let reason = if target {
                FinishReason::TargetReached
            } else {
                FinishReason::BudgetExhausted
            };
            self.finished = Some(reason);
            let report = self.report();
            self.emit(EventDraft::new(
                EventKind::RunFinished,
                serde_json::json!({
                    "reason": reason,
                    "best_score": report.best.score,
                    "best_island": report.best.island_id,
                    "islands": report.islands,
                }),
            ))?;
        }
        Ok(())
    }

    fn bindings_for(&self, island: &IslandState) -> Bindings {
        let mut b = Bindings::new();
        b.insert("task_background", self.config.prompt.task_background.clone());
        b.insert(
            "sota_solution",
            render_sota(&island.current_best_payload, island.tracker.s_best),
        );
        b.insert(
            "idea_repo",
            render_context(&island.pool, &self.failure_log, self.config.context_budget),
        );
        b.insert(
            "coding_instructions",
            self.config.prompt.coding_instructions.clone(),
        );
        b.insert("attempt_budget", self.config.prompt.attempt_budget.clone());
        b
    }

    fn run_iteration(&mut self, idx: usize) -> Result<(), RunError> {
        let island_id = self.islands[idx].island_id;
        let step_outcome = match self.iteration_body(idx)? {
            IterationOutcome::Scored(out) => out,
            IterationOutcome::Barren => self.islands[idx].tracker.observe_barren(),
        };

        // Shared post-step bookkeeping.
        let (step, iteration, momentum, s_best, best_ever, a_t) = {
            let island = &mut self.islands[idx];
            island.iterations_done += 1;
            let t = &island.tracker;
            (
                t.step,
                island.iterations_done,
                t.momentum,
                t.s_best,
                island.best_ever_score,
                t.absolute_progress(&self.score_spec),
            )
        };
        self.emit(EventDraft::island(
            island_id,
            EventKind::MomentumUpdated,
            serde_json::json!({
                "iteration": iteration,
                "step": step,
                "r_t": step_outcome.relative_progress,
                "momentum": momentum,
                "s_best": s_best,
                "best_ever": best_ever,
                "a_t": a_t,
            }),
        ))?;

        if step > 0 && step % self.config.snapshot_interval == 0 {
            let island = &self.islands[idx];
            let snap = Snapshot {
                step,
                pool: island.pool.clone(),
                tracker: island.tracker.clone(),
                best_payload: island.current_best_payload.clone(),
            };
            let already = island.snapshots.last().is_some_and(|s| s.step >= step);
            if !already {
                self.islands[idx].snapshots.push(snap);
                self.emit(EventDraft::island(
                    island_id,
                    EventKind::SnapshotTaken,
                    serde_json::json!({"step": step}),
                ))?;
            }
        }

        let island_view = self.islands[idx].clone();
        self.publish_board(&island_view);

        self.maybe_intervene(idx)?;

        let island = &mut self.islands[idx];
        if island.iterations_done >= self.config.iterations
            || island.tracker.target_reached(&self.score_spec)
        {
            island.done = true;
        }
        Ok(())
    }

    /// Closes out an iteration that went barren after ideas were already
    /// ingested: the idea cap must still hold at every event boundary.
    fn finish_barren(&mut self, idx: usize) -> Result<IterationOutcome, RunError> {
        self.maintain_idea_cap_with_events(idx)?;
        Ok(IterationOutcome::Barren)
    }

    fn maintain_idea_cap_with_events(&mut self, idx: usize) -> Result<(), RunError> {
        let island_id = self.islands[idx].island_id;
        let step_now = self.islands[idx].tracker.step;
        let prune_outcome = {
            let island = &mut self.islands[idx];
            maintain_idea_cap(
                &mut island.pool,
                self.provider,
                &mut self.failure_log,
                step_now,
                Some(island_id),
                self.config.context_budget,
            )
        };
        if let MaintenanceOutcome::Pruned {
            pruned,
            fallback_used,
        } = prune_outcome
        {
            self.emit(EventDraft::island(
                island_id,
                EventKind::IdeaPruned,
                serde_json::json!({"ids": pruned, "fallback": fallback_used}),
            ))?;
        }
        Ok(())
    }

    /// Phases 1-6 of one iteration: generation, ingestion, selection,
    /// duplicate check, evaluation, recording, memory maintenance.
    fn iteration_body(&mut self, idx: usize) -> Result<IterationOutcome, RunError> {
        let island_id = self.islands[idx].island_id;

        // 1. Idea generation.
        let bindings = self.bindings_for(&self.islands[idx]);
        let prompt = render(TemplateName::IdeaGeneration, &bindings)?;
        let reply = match self.provider.complete(
            Some(island_id),
            ModelRole::Primary,
            TemplateName::IdeaGeneration,
            &prompt,
        ) {
            Ok(r) => r,
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => {
                self.emit(EventDraft::island(
                    island_id,
                    EventKind::ProviderError,
                    serde_json::json!({"phase": "generation", "error": e.to_string()}),
                ))?;
                return Ok(IterationOutcome::Barren);
            }
        };
        let generation = match crate::provider::parse_generation(&reply) {
            Ok(g) => g,
            Err(e) => {
                self.emit(EventDraft::island(
                    island_id,
                    EventKind::ProviderError,
                    serde_json::json!({"phase": "generation_parse", "error": e.to_string()}),
                ))?;
                return Ok(IterationOutcome::Barren);
            }
        };
        for (idea, reasoning) in &generation.ideas {
            self.emit(EventDraft::island(
                island_id,
                EventKind::IdeaProposed,
                serde_json::json!({"idea": idea, "reasoning": reasoning}),
            ))?;
        }

        // 2. Classification into the pool.
        let proposals: Vec<String> = generation.ideas.iter().map(|(i, _)| i.clone()).collect();
        let step_now = self.islands[idx].tracker.step;
        let outcomes = {
            let island = &mut self.islands[idx];
            ingest_proposals(
                &mut island.pool,
                &proposals,
                self.provider,
                Some(island_id),
                step_now,
                self.config.context_budget,
            )
        };
        for (proposal, outcome) in &outcomes {
            if let ClassificationOutcome::Skipped { error } = outcome {
                self.emit(EventDraft::island(
                    island_id,
                    EventKind::ProviderError,
                    serde_json::json!({"phase": "classification", "error": error, "proposal": proposal}),
                ))?;
            }
            self.emit(EventDraft::island(
                island_id,
                EventKind::IdeaClassified,
                serde_json::json!({"proposal": proposal, "outcome": outcome}),
            ))?;
        }

        // 3. Idea selection.
        let bindings = self.bindings_for(&self.islands[idx]);
        let prompt = render(TemplateName::IdeaSelection, &bindings)?;
        let reply = match self.provider.complete(
            Some(island_id),
            ModelRole::Primary,
            TemplateName::IdeaSelection,
            &prompt,
        ) {
            Ok(r) => r,
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => {
                self.emit(EventDraft::island(
                    island_id,
                    EventKind::ProviderError,
                    serde_json::json!({"phase": "selection", "error": e.to_string()}),
                ))?;
                return self.finish_barren(idx);
            }
        };
        let selection = match crate::provider::parse_selection(&reply) {
            Ok(s) => s,
            Err(e) => {
                self.emit(EventDraft::island(
                    island_id,
                    EventKind::ProviderError,
                    serde_json::json!({"phase": "selection_parse", "error": e.to_string()}),
                ))?;
                return self.finish_barren(idx);
            }
        };
        let idea_id = IdeaId(selection.idea_id);
        let valid = self.islands[idx].pool.get_active(idea_id).is_some();
        self.emit(EventDraft::island(
            island_id,
            EventKind::IdeaSelected,
            serde_json::json!({
                "idea_id": selection.idea_id,
                "description": selection.experiment_description,
                "valid": valid,
            }),
        ))?;
        if !valid {
            return self.finish_barren(idx);
        }

        // 4. Duplicate check against the shared failure log.
        if is_duplicate(&self.failure_log, &selection.experiment_description) {
            self.emit(EventDraft::island(
                island_id,
                EventKind::DuplicateSkipped,
                serde_json::json!({
                    "description": selection.experiment_description,
                    "fingerprint": crate::memory::fingerprint(&selection.experiment_description),
                }),
            ))?;
            return self.finish_barren(idx);
        }

        // 5. Evaluation.
        let result = self.evaluator.evaluate(&selection.candidate_payload);
        let normalized = match (result.status, result.score) {
            (EvalStatus::Scored, Some(raw)) => normalize_score(raw, &self.score_spec).ok(),
            _ => None,
        };
        self.emit(EventDraft::island(
            island_id,
            EventKind::Evaluated,
            serde_json::json!({
                "status": result.status,
                "raw_score": result.score,
                "score": normalized.map(|n| n.value),
                "clamped": normalized.map(|n| n.clamped).unwrap_or(false),
                "duration_ms": result.duration_ms,
                "stdout_tail": if result.is_scored() { serde_json::Value::Null } else { serde_json::json!(result.stdout_tail) },
            }),
        ))?;

        // 6. Record under the selected idea; fingerprint into the log.
        let verdict = match normalized {
            Some(n) if n.value < self.islands[idx].tracker.s_best => Verdict::Improved,
            Some(_) => Verdict::NoGain,
            None => Verdict::FailedExecution,
        };
        let step_recorded = self.islands[idx].tracker.step + 1;
        {
            let island = &mut self.islands[idx];
            record_result(
                &mut island.pool,
                idea_id,
                HypothesisRecord {
                    description: selection.experiment_description.clone(),
                    score: normalized.map(|n| n.value),
                    verdict,
                    step: step_recorded,
                },
                &mut self.failure_log,
                Some(island_id),
            )?;
        }

        // 7. Fold the score into the tracker and the bests.
        let mut step_outcome = None;
        if let Some(n) = normalized {
            let island = &mut self.islands[idx];
            let out = island.tracker.observe(n.value, &self.score_spec);
            if out.improved {
                island.current_best_payload = selection.candidate_payload.clone();
            }
            if n.value < island.best_ever_score {
                island.best_ever_score = n.value;
                island.best_ever_payload = selection.candidate_payload.clone();
            }
            if n.value < self.global_best.score {
                self.global_best = GlobalBest {
                    score: n.value,
                    payload: selection.candidate_payload.clone(),
                    island_id,
                    iteration: island.iterations_done + 1,
                };
            }
            step_outcome = Some(out);
        }

        // 8. Memory maintenance: hypothesis cap, then idea cap.
        let summarize_outcome = {
            let island = &mut self.islands[idx];
            maintain_hypothesis_cap(&mut island.pool, idea_id, self.provider, Some(island_id))
        };
        match summarize_outcome {
            MaintenanceOutcome::Summarized { idea_id, summary } => {
                self.emit(EventDraft::island(
                    island_id,
                    EventKind::Summarized,
                    serde_json::json!({"idea_id": idea_id, "summary": summary}),
                ))?;
            }
            MaintenanceOutcome::SummaryFailed { idea_id, error } => {
                self.emit(EventDraft::island(
                    island_id,
                    EventKind::ProviderError,
                    serde_json::json!({"phase": "summarization", "idea_id": idea_id, "error": error}),
                ))?;
            }
            _ => {}
        }
        self.maintain_idea_cap_with_events(idx)?;

        Ok(match step_outcome {
            Some(out) => IterationOutcome::Scored(out),
            None => IterationOutcome::Barren,
        })
    }

    fn maybe_intervene(&mut self, idx: usize) -> Result<(), RunError> {
        if self.config.mode == InterventionMode::None {
            return Ok(());
        }
        let island_id = self.islands[idx].island_id;
        let (triggered, momentum, step) = {
            let island = &self.islands[idx];
            (
                should_trigger(&island.tracker, &self.config.policy)
                    && island.tracker.step >= island.frozen_until,
                island.tracker.momentum,
                island.tracker.step,
            )
        };
        if !triggered {
            return Ok(());
        }
        self.emit(EventDraft::island(
            island_id,
            EventKind::TriggerFired,
            serde_json::json!({
                "momentum": momentum,
                "epsilon_rel": self.config.policy.epsilon_rel,
                "step": step,
            }),
        ))?;

        let a_i = self.islands[idx].tracker.absolute_progress(&self.score_spec);
        let partners: Vec<(IslandId, f64)> = if self.config.mode == InterventionMode::Full {
            self.board
                .entries
                .iter()
                .filter(|(id, _)| **id != island_id)
                .map(|(id, e)| (*id, e.a_t))
                .collect()
        } else {
            Vec::new()
        };
        let weights = compute_weights(a_i, &partners);
        let action = sample_action(&weights, &mut self.islands[idx].rng);
        self.emit(EventDraft::island(
            island_id,
            EventKind::ActionSampled,
            serde_json::json!({
                "kind": action.kind,
                "partner": action.partner,
                "a_i": a_i,
                "weights": weights,
                "probabilities": weights.probabilities(),
            }),
        ))?;

        match action.kind {
            InterventionKind::Backtrack => self.apply_backtrack(idx)?,
            InterventionKind::Crossover => {
                let partner = action.partner.expect("crossover carries a partner");
                self.apply_crossover(idx, partner)?;
            }
        }
        Ok(())
    }

    /// Reverts the island to a power-law-sampled ancestor snapshot.
    /// Later snapshots move to the archive; momentum resets; the
    /// post-intervention freeze starts.
    fn apply_backtrack(&mut self, idx: usize) -> Result<(), RunError> {
        let island_id = self.islands[idx].island_id;
        let current_step = self.islands[idx].tracker.step;
        let eligible: Vec<u64> = self.islands[idx]
            .snapshots
            .iter()
            .map(|s| s.step)
            .filter(|s| *s < current_step)
            .collect();
        let target = match sample_backtrack_target(
            &eligible,
            self.config.policy.alpha,
            &mut self.islands[idx].rng,
        ) {
            Ok(t) => t,
            Err(_) => {
                self.emit(EventDraft::island(
                    island_id,
                    EventKind::BacktrackApplied,
                    serde_json::json!({"skipped": true, "reason": "no eligible snapshot"}),
                ))?;
                return Ok(());
            }
        };
        {
            let island = &mut self.islands[idx];
            let pos = island
                .snapshots
                .iter()
                .position(|s| s.step == target)
                .expect("sampled step exists");
            let snapshot = island.snapshots[pos].clone();
            let invalidated: Vec<Snapshot> = island.snapshots.drain(pos + 1..).collect();
            island.archived_snapshots.extend(invalidated);
            island.pool = snapshot.pool;
            island.tracker = snapshot.tracker;
            island.tracker.momentum = 1.0;
            island.current_best_payload = snapshot.best_payload;
            island.frozen_until = island
                .tracker
                .step
                .saturating_add(self.config.freeze_steps_after_intervention);
            island.backtracks += 1;
        }
        let island_view = self.islands[idx].clone();
        self.publish_board(&island_view);
        self.emit(EventDraft::island(
            island_id,
            EventKind::BacktrackApplied,
            serde_json::json!({
                "target_step": target,
                "momentum_reset": 1.0,
                "frozen_until": self.islands[idx].frozen_until,
            }),
        ))?;
        Ok(())
    }

    /// Imports the partner's best payload as this island's context anchor.
    /// Scores re-anchor only when the partner is ahead; the island's own
    /// pool and the shared failure log stay.
    fn apply_crossover(&mut self, idx: usize, partner: IslandId) -> Result<(), RunError> {
        let island_id = self.islands[idx].island_id;
        let Some(entry) = self.board.entries.get(&partner).cloned() else {
            self.emit(EventDraft::island(
                island_id,
                EventKind::CrossoverApplied,
                serde_json::json!({"partner": partner, "fallback": "missing board entry"}),
            ))?;
            return self.apply_backtrack(idx);
        };
        if entry.best_payload.is_empty() {
            self.emit(EventDraft::island(
                island_id,
                EventKind::CrossoverApplied,
                serde_json::json!({"partner": partner, "fallback": "empty partner payload"}),
            ))?;
            return self.apply_backtrack(idx);
        }
        let re_anchored = {
            let island = &mut self.islands[idx];
            island.current_best_payload = entry.best_payload.clone();
            let better = entry.s_best < island.tracker.s_best;
            if better {
                island.tracker.s_best = entry.s_best;
                island.tracker.s_prev = entry.s_best;
            }
            if entry.s_best < island.best_ever_score {
                island.best_ever_score = entry.s_best;
                island.best_ever_payload = entry.best_payload.clone();
            }
            island.tracker.momentum = 1.0;
            island.frozen_until = island
                .tracker
                .step
                .saturating_add(self.config.freeze_steps_after_intervention);
            island.crossovers += 1;
            better
        };
        let island_view = self.islands[idx].clone();
        self.publish_board(&island_view);
        self.emit(EventDraft::island(
            island_id,
            EventKind::CrossoverApplied,
            serde_json::json!({
                "partner": partner,
                "imported_score": entry.s_best,
                "re_anchored": re_anchored,
                "frozen_until": self.islands[idx].frozen_until,
            }),
        ))?;
        Ok(())
    }
}

/// Renders the SoTA context slot: the payload between stable markers plus
/// its normalized score.
pub fn render_sota(payload: &str, score: f64) -> String {
    format!("Current best candidate payload:\n{SOTA_OPEN}\n{payload}\n{SOTA_CLOSE}\nNormalized score: {score}\n")
}

/// Recovers the payload from a rendered SoTA slot (scripted providers).
pub fn parse_sota(prompt: &str) -> Option<&str> {
    let open = prompt.find(SOTA_OPEN)?;
    let after = &prompt[open + SOTA_OPEN.len()..];
    let close = after.find(SOTA_CLOSE)?;
    Some(after[..close].trim())
}
