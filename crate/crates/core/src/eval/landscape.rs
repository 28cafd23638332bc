//! Analytic test landscapes.
//!
//! Three minimization surfaces with distinct escape characteristics:
//!
//! - `sphere`: a single smooth basin; greedy refinement wins.
//! - `deceptive_two_basin`: a wide, shallow basin (floor 0.25) whose
//!   attraction region captures greedy descent, and a narrow basin at the
//!   true optimum (floor 0.0). Reaching the deep basin from the shallow
//!   one requires a jump, not refinement.
//! - `staircase`: piecewise-constant decreasing levels along the first
//!   coordinate; no local gradient signal, only jumps make progress.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::progress::ScoreSpec;

use super::{parse_vector, EvalResult, EvalStatus, Evaluator};

/// Shallow basin center coordinate (every dimension).
pub const SHALLOW_CENTER: f64 = 1.5;
/// Shallow basin floor value.
pub const SHALLOW_FLOOR: f64 = 0.25;
/// Shallow basin curvature (wide).
pub const SHALLOW_CURVATURE: f64 = 0.08;
/// Deep basin center coordinate (every dimension).
pub const DEEP_CENTER: f64 = -1.5;
/// Deep basin curvature (narrow).
pub const DEEP_CURVATURE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandscapeKind {
    Sphere,
    DeceptiveTwoBasin,
    Staircase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub kind: LandscapeKind,
}

impl Landscape {
    pub fn new(kind: LandscapeKind) -> Self {
        Self { kind }
    }

    /// Evaluates the surface at `x`. All surfaces are bounded below by 0.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            LandscapeKind::Sphere => x.iter().map(|v| v * v).sum(),
            LandscapeKind::DeceptiveTwoBasin => {
                let shallow = SHALLOW_FLOOR
                    + SHALLOW_CURVATURE
                        * x.iter().map(|v| (v - SHALLOW_CENTER).powi(2)).sum::<f64>();
                let deep =
                    DEEP_CURVATURE * x.iter().map(|v| (v - DEEP_CENTER).powi(2)).sum::<f64>();
                shallow.min(deep)
            }
            LandscapeKind::Staircase => {
                // Ten 0.1-deep levels over [0, 10) on the first coordinate,
                // flat within each level.
                let t = x.first().copied().unwrap_or(0.0);
                let level = t.max(0.0).floor().min(10.0);
                1.0 - 0.1 * level
            }
        }
    }

    /// True when `x` sits in the deep basin's region (the deep branch is
    /// the active minimum).
    pub fn in_deep_basin(&self, x: &[f64]) -> bool {
        match self.kind {
            LandscapeKind::DeceptiveTwoBasin => {
                let shallow = SHALLOW_FLOOR
                    + SHALLOW_CURVATURE
                        * x.iter().map(|v| (v - SHALLOW_CENTER).powi(2)).sum::<f64>();
                let deep =
                    DEEP_CURVATURE * x.iter().map(|v| (v - DEEP_CENTER).powi(2)).sum::<f64>();
                deep < shallow
            }
            _ => false,
        }
    }
}

/// In-process evaluator over a [`Landscape`]. Hermetic and instantaneous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeEvaluator {
    pub landscape: Landscape,
    score_spec: ScoreSpec,
}

impl LandscapeEvaluator {
    pub fn new(kind: LandscapeKind) -> Self {
        Self {
            landscape: Landscape::new(kind),
            score_spec: ScoreSpec::minimize_to(0.0),
        }
    }
}

impl Evaluator for LandscapeEvaluator {
    fn evaluate(&mut self, payload: &str) -> EvalResult {
        match parse_vector(payload) {
            Some(x) if !x.is_empty() => {
                EvalResult::scored(self.landscape.value(&x), Duration::ZERO)
            }
            _ => EvalResult::failed(
                EvalStatus::Unparseable,
                format!("payload is not a comma-separated real vector: {payload:?}"),
                Duration::ZERO,
            ),
        }
    }

    fn score_spec(&self) -> &ScoreSpec {
        &self.score_spec
    }
}
