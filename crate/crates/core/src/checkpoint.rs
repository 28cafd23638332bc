//! Whole-state checkpoints.
//!
//! A checkpoint is the engine's [`RunState`] as one pretty-printed JSON
//! document under `<run_dir>/checkpoints/ckpt-<round>.json`. Restoring a
//! checkpoint and replaying the same deterministic providers reproduces
//! the original continuation exactly; the config fingerprint guards
//! against resuming under a different configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::RunState;

pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(String),
    #[error("checkpoint is not valid JSON: {0}")]
    Malformed(String),
    #[error(
        "config fingerprint mismatch: checkpoint {checkpoint:#x}, current {current:#x} \
         (pass --force to override)"
    )]
    ConfigMismatch { checkpoint: u64, current: u64 },
    #[error("no checkpoint found under {0}")]
    NotFound(String),
}

/// Versioned envelope so later formats can coexist.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub round: u64,
    pub state: RunState,
}

impl Checkpoint {
    pub fn new(round: u64, state: RunState) -> Self {
        Self {
            version: 1,
            round,
            state,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, CheckpointError> {
        serde_json::from_str(json).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }

    /// Fails unless the stored fingerprint matches `current`.
    pub fn validate_fingerprint(&self, current: u64) -> Result<(), CheckpointError> {
        if self.state.config_fingerprint != current {
            return Err(CheckpointError::ConfigMismatch {
                checkpoint: self.state.config_fingerprint,
                current,
            });
        }
        Ok(())
    }
}

#[cfg(feature = "native")]
pub use native::{latest_checkpoint, restore_checkpoint, write_checkpoint};

#[cfg(feature = "native")]
mod native {
    use std::path::{Path, PathBuf};

    use super::*;

    /// Writes `<run_dir>/checkpoints/ckpt-<round>.json` and returns its path.
    pub fn write_checkpoint(run_dir: &Path, checkpoint: &Checkpoint) -> Result<PathBuf, CheckpointError> {
        let dir = run_dir.join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| CheckpointError::Io(e.to_string()))?;
        let path = dir.join(format!("ckpt-{:06}.json", checkpoint.round));
        std::fs::write(&path, checkpoint.to_json())
            .map_err(|e| CheckpointError::Io(e.to_string()))?;
        Ok(path)
    }

    pub fn restore_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))?;
        Checkpoint::from_json(&text)
    }

    /// The highest-round checkpoint under `<run_dir>/checkpoints/`.
    pub fn latest_checkpoint(run_dir: &Path) -> Result<PathBuf, CheckpointError> {
        let dir = run_dir.join(CHECKPOINT_DIR);
        let mut best: Option<(u64, PathBuf)> = None;
        let entries = std::fs::read_dir(&dir)
            .map_err(|_| CheckpointError::NotFound(dir.display().to_string()))?;
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(round) = name
                .strip_prefix("ckpt-")
                .and_then(|n| n.strip_suffix(".json"))
                .and_then(|n| n.parse::<u64>().ok())
            {
                if best.as_ref().is_none_or(|(r, _)| round > *r) {
                    best = Some((round, entry.path()));
                }
            }
        }
        best.map(|(_, p)| p)
            .ok_or_else(|| CheckpointError::NotFound(dir.display().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{LandscapeEvaluator, LandscapeKind};
    use crate::events::MemorySink;
    use crate::explorer::{ExplorerSettings, ScriptedExplorer};
    use crate::orchestrator::{Engine, EngineConfig};

    fn sample_state() -> RunState {
        let mut provider = ScriptedExplorer::new(ExplorerSettings::for_landscape(
            LandscapeKind::Sphere,
            3,
        ));
        let mut evaluator = LandscapeEvaluator::new(LandscapeKind::Sphere);
        let mut sink = MemorySink::default();
        let config = EngineConfig {
            islands: 2,
            iterations: 5,
            initial_payloads: vec!["2,2".into()],
            config_fingerprint: 0xfeed,
            ..EngineConfig::default()
        };
        let mut engine = Engine::new(config, &mut provider, &mut evaluator, &mut sink).unwrap();
        for _ in 0..6 {
            engine.tick().unwrap();
        }
        engine.run_state()
    }

    #[test]
    fn json_round_trip_is_a_fixed_point() {
        let ckpt = Checkpoint::new(3, sample_state());
        let json = ckpt.to_json();
        let restored = Checkpoint::from_json(&json).unwrap();
        assert_eq!(restored.to_json(), json);
    }

    #[test]
    fn fingerprint_mismatch_refuses() {
        let ckpt = Checkpoint::new(3, sample_state());
        assert!(ckpt.validate_fingerprint(0xfeed).is_ok());
        let err = ckpt.validate_fingerprint(0xbeef).unwrap_err();
        assert!(matches!(err, CheckpointError::ConfigMismatch { .. }));
    }

    #[cfg(feature = "native")]
    #[test]
    fn file_round_trip_and_latest_selection() {
        let dir = tempfile::tempdir().unwrap();
        let state = sample_state();
        write_checkpoint(dir.path(), &Checkpoint::new(2, state.clone())).unwrap();
        let path = write_checkpoint(dir.path(), &Checkpoint::new(10, state)).unwrap();
        assert_eq!(latest_checkpoint(dir.path()).unwrap(), path);
        let restored = restore_checkpoint(&path).unwrap();
        assert_eq!(restored.round, 10);
        // write -> restore -> write yields identical bytes.
        let again = write_checkpoint(dir.path(), &restored).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            std::fs::read_to_string(&again).unwrap()
        );
    }

    #[test]
    fn resume_without_ticks_leaves_state_unchanged() {
        let state = sample_state();
        let json = serde_json::to_string(&state).unwrap();
        let mut provider = ScriptedExplorer::new(ExplorerSettings::for_landscape(
            LandscapeKind::Sphere,
            3,
        ));
        if let Some(ps) = &state.provider_state {
            use crate::provider::Provider;
            provider.restore_state(ps).unwrap();
        }
        let mut evaluator = LandscapeEvaluator::new(LandscapeKind::Sphere);
        let mut sink = MemorySink::default();
        let config = EngineConfig {
            islands: 2,
            iterations: 5,
            initial_payloads: vec!["2,2".into()],
            config_fingerprint: 0xfeed,
            ..EngineConfig::default()
        };
        let engine =
            Engine::resume(config, state, &mut provider, &mut evaluator, &mut sink).unwrap();
        let roundtrip = serde_json::to_string(&engine.run_state()).unwrap();
        drop(engine);
        assert_eq!(roundtrip, json);
        assert!(sink.events.is_empty());
    }

    #[cfg(feature = "native")]
    #[test]
    fn missing_directory_reports_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            latest_checkpoint(dir.path()),
            Err(CheckpointError::NotFound(_))
        ));
    }
}
