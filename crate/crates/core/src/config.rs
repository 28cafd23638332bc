//! Declarative run configuration.
//!
//! One JSON document drives a whole run; every CLI flag has a field here
//! and flags override the file. Validation errors name the offending
//! field. The canonical serialization of the effective config is
//! fingerprinted into checkpoints so resumes refuse silently changed
//! setups.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{LandscapeEvaluator, LandscapeKind, SubprocessEvaluator, TaskSpec};
use crate::explorer::{ExplorerSettings, ScriptedExplorer};
use crate::memory::{DEFAULT_CONTEXT_BUDGET, DEFAULT_K_HYP, DEFAULT_K_IDEA};
use crate::orchestrator::{EngineConfig, InterventionMode, PromptSettings};
use crate::policy::PolicyConfig;
use crate::progress::DEFAULT_BETA;
use crate::provider::{MockProvider, Provider, ProviderConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {detail}")]
    Invalid { field: &'static str, detail: String },
}

fn invalid(field: &'static str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskConfig {
    /// In-process analytic landscape.
    Builtin {
        landscape: LandscapeKind,
        /// Starting payloads, cycled across islands.
        #[serde(default = "default_initial_payloads")]
        initial_payloads: Vec<String>,
    },
    /// External command in a workspace copy.
    Subprocess {
        #[serde(flatten)]
        spec: TaskSpec,
        initial_payloads: Vec<String>,
    },
}

fn default_initial_payloads() -> Vec<String> {
    vec!["3.2,2.8".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProviderChoice {
    /// JSON chat-completion endpoint.
    Http(ProviderConfig),
    /// Scripted replies from a JSON file of matcher/reply entries.
    MockScript { path: PathBuf },
    /// Deterministic landscape-aware explorer (builtin tasks only).
    Explorer {
        #[serde(default)]
        pull: Option<f64>,
        #[serde(default)]
        local_step: Option<f64>,
        #[serde(default)]
        probe_points: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        repeat_hypothesis_every: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_epsilon_rel")]
    pub epsilon_rel: f64,
    #[serde(default = "default_freeze_steps")]
    pub freeze_steps: u64,
    /// Defaults to `freeze_steps` when absent.
    #[serde(default)]
    pub freeze_steps_after_intervention: Option<u64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval: u64,
    #[serde(default)]
    pub mode: InterventionMode,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_epsilon_rel() -> f64 {
    crate::policy::DEFAULT_EPSILON_REL
}
fn default_freeze_steps() -> u64 {
    crate::policy::DEFAULT_FREEZE_STEPS
}
fn default_alpha() -> f64 {
    crate::policy::DEFAULT_ALPHA
}
fn default_snapshot_interval() -> u64 {
    crate::orchestrator::DEFAULT_SNAPSHOT_INTERVAL
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            beta: default_beta(),
            epsilon_rel: default_epsilon_rel(),
            freeze_steps: default_freeze_steps(),
            freeze_steps_after_intervention: None,
            alpha: default_alpha(),
            snapshot_interval: default_snapshot_interval(),
            mode: InterventionMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    #[serde(default = "default_k_idea")]
    pub k_idea: usize,
    #[serde(default = "default_k_hyp")]
    pub k_hyp: usize,
    #[serde(default = "default_context_budget")]
    pub context_budget: usize,
}

fn default_k_idea() -> usize {
    DEFAULT_K_IDEA
}
fn default_k_hyp() -> usize {
    DEFAULT_K_HYP
}
fn default_context_budget() -> usize {
    DEFAULT_CONTEXT_BUDGET
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            k_idea: default_k_idea(),
            k_hyp: default_k_hyp(),
            context_budget: default_context_budget(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskConfig,
    #[serde(default = "default_islands")]
    pub islands: u32,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    pub provider: ProviderChoice,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub prompt: PromptSettings,
    #[serde(default)]
    pub seed: u64,
    pub run_dir: PathBuf,
    #[serde(default)]
    pub keep_artifacts: bool,
    #[serde(default)]
    pub dry_run: bool,
    #[serde(default = "default_checkpoint_interval")]
    pub checkpoint_interval: u64,
    #[serde(default = "default_stop_on_target")]
    pub stop_on_target: bool,
}

fn default_islands() -> u32 {
    2
}
fn default_iterations() -> u64 {
    1000
}
fn default_checkpoint_interval() -> u64 {
    50
}
fn default_stop_on_target() -> bool {
    true
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let config: Self =
            serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Stable 64-bit fingerprint of the canonical serialization.
    pub fn fingerprint(&self) -> u64 {
        crate::memory::fingerprint(&self.to_json())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.islands == 0 {
            return Err(invalid("islands", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.metrics.beta) {
            return Err(invalid(
                "metrics.beta",
                format!("must be in [0, 1), got {}", self.metrics.beta),
            ));
        }
        if self.metrics.epsilon_rel <= 0.0 || self.metrics.epsilon_rel >= 1.0 {
            return Err(invalid(
                "metrics.epsilon_rel",
                format!("must be in (0, 1), got {}", self.metrics.epsilon_rel),
            ));
        }
        if self.metrics.alpha <= 0.0 {
            return Err(invalid("metrics.alpha", "must be > 0"));
        }
        if self.metrics.snapshot_interval == 0 {
            return Err(invalid("metrics.snapshot_interval", "must be >= 1"));
        }
        if self.islands > 1 && self.metrics.freeze_steps == 0 {
            return Err(invalid(
                "metrics.freeze_steps",
                "must be >= 1 with multiple islands",
            ));
        }
        if self.memory.k_idea == 0 {
            return Err(invalid("memory.k_idea", "must be >= 1"));
        }
        if self.memory.k_hyp == 0 {
            return Err(invalid("memory.k_hyp", "must be >= 1"));
        }
        if self.checkpoint_interval == 0 {
            return Err(invalid("checkpoint_interval", "must be >= 1"));
        }
        match &self.task {
            TaskConfig::Builtin {
                initial_payloads, ..
            } => {
                if initial_payloads.is_empty() {
                    return Err(invalid("task.initial_payloads", "must not be empty"));
                }
            }
            TaskConfig::Subprocess {
                spec,
                initial_payloads,
            } => {
                if initial_payloads.is_empty() {
                    return Err(invalid("task.initial_payloads", "must not be empty"));
                }
                spec.validate()
                    .map_err(|e| invalid("task", e.to_string()))?;
            }
        }
        if matches!(self.provider, ProviderChoice::Explorer { .. })
            && !matches!(self.task, TaskConfig::Builtin { .. })
        {
            return Err(invalid(
                "provider",
                "the explorer provider requires a builtin task",
            ));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        let initial_payloads = match &self.task {
            TaskConfig::Builtin {
                initial_payloads, ..
            }
            | TaskConfig::Subprocess {
                initial_payloads, ..
            } => initial_payloads.clone(),
        };
        EngineConfig {
            islands: self.islands,
            iterations: self.iterations,
            seed: self.seed,
            beta: self.metrics.beta,
            policy: PolicyConfig {
                epsilon_rel: self.metrics.epsilon_rel,
                freeze_steps: self.metrics.freeze_steps,
                alpha: self.metrics.alpha,
            },
            mode: self.metrics.mode,
            snapshot_interval: self.metrics.snapshot_interval,
            freeze_steps_after_intervention: self
                .metrics
                .freeze_steps_after_intervention
                .unwrap_or(self.metrics.freeze_steps),
            k_idea: self.memory.k_idea,
            k_hyp: self.memory.k_hyp,
            context_budget: self.memory.context_budget,
            stop_on_target: self.stop_on_target,
            prompt: self.prompt.clone(),
            initial_payloads,
            config_fingerprint: self.fingerprint(),
        }
    }

    pub fn build_provider(&self) -> Result<Box<dyn Provider>, ConfigError> {
        match &self.provider {
            ProviderChoice::Http(cfg) => {
                #[allow(clippy::redundant_clone)]
                Ok(Box::new(crate::provider::HttpProvider::new(cfg.clone())))
            }
            ProviderChoice::MockScript { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                    path: path.display().to_string(),
                    detail: e.to_string(),
                })?;
                MockProvider::from_json(&text)
                    .map(|m| Box::new(m) as Box<dyn Provider>)
                    .map_err(|e| invalid("provider.path", e.to_string()))
            }
            ProviderChoice::Explorer {
                pull,
                local_step,
                probe_points,
                repeat_hypothesis_every,
            } => {
                let TaskConfig::Builtin { landscape, .. } = &self.task else {
                    return Err(invalid("provider", "explorer requires a builtin task"));
                };
                let mut settings = ExplorerSettings::for_landscape(*landscape, self.seed);
                if let Some(pull) = pull {
                    settings.pull = *pull;
                }
                if let Some(step) = local_step {
                    settings.local_step = *step;
                }
                if let Some(points) = probe_points {
                    settings.probe_points = points.clone();
                }
                settings.repeat_hypothesis_every = *repeat_hypothesis_every;
                Ok(Box::new(ScriptedExplorer::new(settings)))
            }
        }
    }

    pub fn build_evaluator(&self) -> Result<Box<dyn crate::eval::Evaluator>, ConfigError> {
        match &self.task {
            TaskConfig::Builtin { landscape, .. } => {
                Ok(Box::new(LandscapeEvaluator::new(*landscape)))
            }
            TaskConfig::Subprocess { spec, .. } => {
                let evaluator = SubprocessEvaluator::new(
                    spec.clone(),
                    self.run_dir.join("workspaces"),
                    self.keep_artifacts,
                )
                .map_err(|e| invalid("task", e.to_string()))?;
                Ok(Box::new(evaluator))
            }
        }
    }
}
