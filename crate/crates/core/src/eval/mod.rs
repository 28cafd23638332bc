//! Candidate evaluation.
//!
//! The engine is task-agnostic: anything that turns a candidate payload
//! into a scalar score (or a failure) is a task. Builtin analytic
//! landscapes serve desk-scale experiments and the browser demo; the
//! subprocess evaluator (`native` feature) runs arbitrary commands in a
//! throwaway copy of a workspace directory and extracts the score with a
//! regular expression.

mod landscape;

#[cfg(feature = "native")]
mod subprocess;

pub use landscape::{
    Landscape, LandscapeEvaluator, LandscapeKind, DEEP_CENTER, DEEP_CURVATURE, SHALLOW_CENTER,
    SHALLOW_CURVATURE, SHALLOW_FLOOR,
};

#[cfg(feature = "native")]
pub use subprocess::{SubprocessEvaluator, TaskSpec};

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::progress::ScoreSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Scored,
    Crashed,
    TimedOut,
    Unparseable,
}

/// Outcome of evaluating one candidate payload. `score` is the raw task
/// score; normalization happens upstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub status: EvalStatus,
    pub score: Option<f64>,
    pub stdout_tail: String,
    pub duration_ms: u64,
}

impl EvalResult {
    pub fn scored(score: f64, duration: Duration) -> Self {
        Self {
            status: EvalStatus::Scored,
            score: Some(score),
            stdout_tail: String::new(),
            duration_ms: duration.as_millis() as u64,
        }
    }

    pub fn failed(status: EvalStatus, stdout_tail: String, duration: Duration) -> Self {
        debug_assert!(status != EvalStatus::Scored);
        Self {
            status,
            score: None,
            stdout_tail,
            duration_ms: duration.as_millis() as u64,
        }
    }

    pub fn is_scored(&self) -> bool {
        self.status == EvalStatus::Scored
    }
}

/// A task backend: evaluates payloads and declares its score orientation.
pub trait Evaluator {
    fn evaluate(&mut self, payload: &str) -> EvalResult;
    fn score_spec(&self) -> &ScoreSpec;
}

/// Parses a comma-separated vector of reals, the payload format of the
/// builtin landscapes.
pub fn parse_vector(payload: &str) -> Option<Vec<f64>> {
    let trimmed = payload.trim();
    if trimmed.is_empty() {
        return None;
    }
    let mut out = Vec::new();
    for token in trimmed.split(',') {
        match token.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => return None,
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_parsing() {
        assert_eq!(parse_vector("1, 2.5, -3"), Some(vec![1.0, 2.5, -3.0]));
        assert_eq!(parse_vector("0,0,0"), Some(vec![0.0, 0.0, 0.0]));
        assert_eq!(parse_vector(""), None);
        assert_eq!(parse_vector("a,b"), None);
        assert_eq!(parse_vector("1,,2"), None);
        assert_eq!(parse_vector("nan"), None);
    }
}
