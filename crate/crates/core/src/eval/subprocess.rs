//! Subprocess evaluation in throwaway workspace copies.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::progress::ScoreSpec;

use super::{EvalResult, EvalStatus, Evaluator};

/// Poll interval while waiting on the child process.
const WAIT_QUANTUM: Duration = Duration::from_millis(10);

fn default_env_allowlist() -> Vec<String> {
    ["PATH", "HOME", "LANG", "LC_ALL", "TMPDIR"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_max_output_bytes() -> usize {
    64 * 1024
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Error)]
pub enum TaskSpecError {
    #[error("eval_command must not be empty")]
    EmptyCommand,
    #[error("score_pattern must have exactly one capture group, found {0}")]
    CaptureGroups(usize),
    #[error("score_pattern does not compile: {0}")]
    BadPattern(String),
    #[error("workspace_template {0} does not exist")]
    MissingTemplate(PathBuf),
}

/// Declarative description of an external evaluation task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub workspace_template: PathBuf,
    pub candidate_filename: PathBuf,
    pub eval_command: Vec<String>,
    /// Regex with one capture group; the last match in combined output is
    /// the score.
    pub score_pattern: String,
    #[serde(default)]
    pub score_spec: ScoreSpec,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_output_bytes")]
    pub max_output_bytes: usize,
    #[serde(default = "default_env_allowlist")]
    pub env_allowlist: Vec<String>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<Regex, TaskSpecError> {
        if self.eval_command.is_empty() {
            return Err(TaskSpecError::EmptyCommand);
        }
        if !self.workspace_template.exists() {
            return Err(TaskSpecError::MissingTemplate(
                self.workspace_template.clone(),
            ));
        }
        let regex = Regex::new(&self.score_pattern)
            .map_err(|e| TaskSpecError::BadPattern(e.to_string()))?;
        // captures_len counts the implicit whole-match group.
        if regex.captures_len() != 2 {
            return Err(TaskSpecError::CaptureGroups(regex.captures_len() - 1));
        }
        Ok(regex)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

/// Runs candidates through the task's command in a fresh workspace copy
/// per evaluation. The template directory is never mutated.
#[derive(Debug)]
pub struct SubprocessEvaluator {
    spec: TaskSpec,
    regex: Regex,
    run_root: PathBuf,
    keep_artifacts: bool,
    counter: u64,
}

impl SubprocessEvaluator {
    pub fn new(
        spec: TaskSpec,
        run_root: PathBuf,
        keep_artifacts: bool,
    ) -> Result<Self, TaskSpecError> {
        let regex = spec.validate()?;
        Ok(Self {
            spec,
            regex,
            run_root,
            keep_artifacts,
            counter: 0,
        })
    }

    fn run_once(&mut self, payload: &str) -> std::io::Result<EvalResult> {
        self.counter += 1;
        let workspace = self.run_root.join(format!("eval-{:06}", self.counter));
        copy_dir(&self.spec.workspace_template, &workspace)?;
        let candidate = workspace.join(&self.spec.candidate_filename);
        if let Some(parent) = candidate.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&candidate, payload)?;

        let started = Instant::now();
        let mut command = Command::new(&self.spec.eval_command[0]);
        command
            .args(&self.spec.eval_command[1..])
            .current_dir(&workspace)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .env_clear();
        for key in &self.spec.env_allowlist {
            if let Ok(value) = std::env::var(key) {
                command.env(key, value);
            }
        }
        let mut child = command.spawn()?;

        let output = Arc::new(Mutex::new(Vec::<u8>::new()));
        let finished_readers = Arc::new(AtomicUsize::new(0));
        let cap = self.spec.max_output_bytes;
        let mut spawned_readers = 0usize;
        for pipe in [
            child.stdout.take().map(|s| Box::new(s) as Box<dyn Read + Send>),
            child.stderr.take().map(|s| Box::new(s) as Box<dyn Read + Send>),
        ]
        .into_iter()
        .flatten()
        {
            let sink = Arc::clone(&output);
            let done = Arc::clone(&finished_readers);
            spawned_readers += 1;
            // Detached on purpose: a grandchild holding the pipe open must
            // not stall the evaluation past its deadline.
            std::thread::spawn(move || {
                drain_capped(pipe, &sink, cap);
                done.fetch_add(1, Ordering::SeqCst);
            });
        }

        let timeout = self.spec.timeout();
        let status = loop {
            match child.try_wait()? {
                Some(status) => break Some(status),
                None if started.elapsed() >= timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                None => std::thread::sleep(WAIT_QUANTUM),
            }
        };
        // Give the readers a bounded grace window to drain what remains.
        let grace_deadline = Instant::now() + Duration::from_millis(500);
        while finished_readers.load(Ordering::SeqCst) < spawned_readers
            && Instant::now() < grace_deadline
        {
            std::thread::sleep(Duration::from_millis(5));
        }
        let duration = started.elapsed();
        let combined = String::from_utf8_lossy(&output.lock().unwrap()).into_owned();
        let tail = tail_of(&combined, 2048);

        if !self.keep_artifacts {
            let _ = std::fs::remove_dir_all(&workspace);
        }

        let result = match status {
            None => EvalResult::failed(EvalStatus::TimedOut, tail, duration),
            Some(status) if !status.success() => {
                EvalResult::failed(EvalStatus::Crashed, tail, duration)
            }
            Some(_) => {
                let score = self
                    .regex
                    .captures_iter(&combined)
                    .last()
                    .and_then(|c| c.get(1))
                    .and_then(|m| m.as_str().parse::<f64>().ok())
                    .filter(|s| s.is_finite());
                match score {
                    Some(score) => EvalResult {
                        status: EvalStatus::Scored,
                        score: Some(score),
                        stdout_tail: tail,
                        duration_ms: duration.as_millis() as u64,
                    },
                    None => EvalResult::failed(EvalStatus::Unparseable, tail, duration),
                }
            }
        };
        Ok(result)
    }
}

impl Evaluator for SubprocessEvaluator {
    fn evaluate(&mut self, payload: &str) -> EvalResult {
        match self.run_once(payload) {
            Ok(result) => result,
            Err(e) => EvalResult::failed(
                EvalStatus::Crashed,
                format!("spawn failure: {e}"),
                Duration::ZERO,
            ),
        }
    }

    fn score_spec(&self) -> &ScoreSpec {
        &self.spec.score_spec
    }
}

fn drain_capped(mut pipe: Box<dyn Read + Send>, sink: &Mutex<Vec<u8>>, cap: usize) {
    let mut buf = [0u8; 4096];
    loop {
        match pipe.read(&mut buf) {
            Ok(0) | Err(_) => return,
            Ok(n) => {
                let mut out = sink.lock().unwrap();
                let room = cap.saturating_sub(out.len());
                out.extend_from_slice(&buf[..n.min(room)]);
                // Keep draining past the cap so the child never blocks on a
                // full pipe.
            }
        }
    }
}

fn tail_of(text: &str, max_chars: usize) -> String {
    let count = text.chars().count();
    if count <= max_chars {
        return text.to_string();
    }
    text.chars().skip(count - max_chars).collect()
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else {
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}
