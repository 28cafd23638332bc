//! Scale-invariant progress metrics.
//!
//! Every intervention decision in the engine is driven by three quantities
//! computed here:
//!
//! - **relative progress**: the fraction of the previous performance gap
//!   closed by a new best score. Zero when nothing improved. Being a
//!   fraction of the *remaining* gap makes it invariant to the problem's
//!   scale, unlike a raw score delta.
//! - **momentum**: an EWMA of relative progress. This is the trajectory
//!   health signal: it decays geometrically through barren stretches and
//!   recovers when improvements land.
//! - **absolute progress**: the total fraction of the initial gap closed
//!   since the island started. Islands compare each other on this.
//!
//! All scores are kept in a normalized minimize-toward-bound orientation;
//! maximize tasks are negated once at ingestion so the formulas above stay
//! untouched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default numerical floor below which a gap counts as closed.
pub const DEFAULT_GAP_EPSILON: f64 = 1e-12;

/// Default EWMA decay factor for momentum.
pub const DEFAULT_BETA: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum ProgressError {
    #[error("evaluation produced a non-finite score: {0}")]
    NonFiniteScore(f64),
}

/// Optimization direction of the raw task metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

/// How raw task scores map into the engine's normalized orientation.
///
/// `lower_bound` is the target bound in task units: a lower bound for
/// minimize tasks, an upper bound for maximize tasks (negation at ingestion
/// turns it into a lower bound).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSpec {
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub lower_bound: f64,
    #[serde(default = "default_gap_epsilon")]
    pub gap_epsilon: f64,
}

fn default_gap_epsilon() -> f64 {
    DEFAULT_GAP_EPSILON
}

impl Default for ScoreSpec {
    fn default() -> Self {
        Self {
            direction: Direction::Minimize,
            lower_bound: 0.0,
            gap_epsilon: DEFAULT_GAP_EPSILON,
        }
    }
}

impl ScoreSpec {
    pub fn minimize_to(lower_bound: f64) -> Self {
        Self {
            direction: Direction::Minimize,
            lower_bound,
            ..Self::default()
        }
    }

    pub fn maximize_to(upper_bound: f64) -> Self {
        Self {
            direction: Direction::Maximize,
            lower_bound: upper_bound,
            ..Self::default()
        }
    }

    /// The target bound in normalized (minimize) orientation.
    pub fn bound(&self) -> f64 {
        match self.direction {
            Direction::Minimize => self.lower_bound,
            Direction::Maximize => -self.lower_bound,
        }
    }
}

/// A raw score mapped into minimize orientation.
///
/// `clamped` is set when the raw score fell below the declared bound and was
/// pulled up to it; callers surface that as a warning event rather than an
/// error, since the bound is assumed true.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub value: f64,
    pub clamped: bool,
}

/// Maps a raw task score into normalized orientation, clamping at the bound.
pub fn normalize_score(raw: f64, spec: &ScoreSpec) -> Result<NormalizedScore, ProgressError> {
    if !raw.is_finite() {
        return Err(ProgressError::NonFiniteScore(raw));
    }
    let oriented = match spec.direction {
        Direction::Minimize => raw,
        Direction::Maximize => -raw,
    };
    let bound = spec.bound();
    if oriented < bound - spec.gap_epsilon {
        Ok(NormalizedScore {
            value: bound,
            clamped: true,
        })
    } else {
        Ok(NormalizedScore {
            value: oriented.max(bound),
            clamped: false,
        })
    }
}

/// Fraction of the previous performance gap closed by `s_new`.
///
/// Returns 0 when `s_new` does not improve on `s_prev` or when the previous
/// gap is already at the numerical floor (target reached: there is nothing
/// meaningful left to close, and this rule keeps the division well-defined).
pub fn relative_progress(s_prev: f64, s_new: f64, spec: &ScoreSpec) -> f64 {
    let bound = spec.bound();
    let gap_prev = s_prev - bound;
    if s_new >= s_prev || gap_prev <= spec.gap_epsilon {
        return 0.0;
    }
    let s_new = s_new.max(bound);
    ((s_prev - s_new) / gap_prev).clamp(0.0, 1.0)
}

/// Per-island progress state: scores, momentum, and the generation index.
///
/// Owned by exactly one island; cross-island reads go through immutable
/// snapshots. All scores are in normalized orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressTracker {
    pub s0: f64,
    pub s_prev: f64,
    pub s_best: f64,
    pub momentum: f64,
    pub beta: f64,
    pub step: u64,
}

/// What one observation did to the tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub relative_progress: f64,
    pub improved: bool,
}

impl ProgressTracker {
    /// A fresh tracker anchored at the initial score, momentum 1.0.
    pub fn new(s0: f64, beta: f64) -> Self {
        Self {
            s0,
            s_prev: s0,
            s_best: s0,
            momentum: 1.0,
            beta,
            step: 0,
        }
    }

    /// Applies one momentum update and advances the generation index.
    pub fn update_momentum(&mut self, r_t: f64) {
        debug_assert!((0.0..=1.0).contains(&r_t));
        self.momentum = self.beta * self.momentum + (1.0 - self.beta) * r_t;
        self.step += 1;
    }

    /// Folds a new candidate score into the tracker: best-score update
    /// first, then relative progress of the updated best against the
    /// previous anchor, then the momentum EWMA, then the anchor moves.
    pub fn observe(&mut self, s_new: f64, spec: &ScoreSpec) -> StepOutcome {
        self.s_best = self.s_best.min(s_new);
        let improved = self.s_best < self.s_prev;
        let r_t = relative_progress(self.s_prev, self.s_best, spec);
        self.update_momentum(r_t);
        self.s_prev = self.s_best;
        StepOutcome {
            relative_progress: r_t,
            improved,
        }
    }

    /// Advances the generation index with no improvement (skipped or failed
    /// iteration): a zero-progress momentum update.
    pub fn observe_barren(&mut self) -> StepOutcome {
        self.update_momentum(0.0);
        StepOutcome {
            relative_progress: 0.0,
            improved: false,
        }
    }

    /// Total fraction of the initial gap closed so far, in `[0, 1]`.
    /// An island that started at the bound counts as fully progressed.
    pub fn absolute_progress(&self, spec: &ScoreSpec) -> f64 {
        let bound = spec.bound();
        let initial_gap = self.s0 - bound;
        if initial_gap <= spec.gap_epsilon {
            return 1.0;
        }
        ((self.s0 - self.s_best) / initial_gap).clamp(0.0, 1.0)
    }

    /// True once the remaining gap is within the numerical floor.
    pub fn target_reached(&self, spec: &ScoreSpec) -> bool {
        self.s_best - spec.bound() <= spec.gap_epsilon
    }
}
