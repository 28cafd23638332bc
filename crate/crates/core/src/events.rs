//! Append-only run event log.
//!
//! Every observable step of a run lands here as one JSON object per line:
//! human-greppable, replayable, and the substrate for reports and the
//! determinism guarantees. Sequence numbers are strictly increasing and
//! events are never rewritten.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::IslandId;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("event log i/o: {0}")]
    Io(String),
    #[error("event log line {line} is not valid JSON: {detail}")]
    Malformed { line: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RunStarted,
    IdeaProposed,
    IdeaClassified,
    IdeaSelected,
    DuplicateSkipped,
    Evaluated,
    MomentumUpdated,
    SnapshotTaken,
    TriggerFired,
    ActionSampled,
    BacktrackApplied,
    CrossoverApplied,
    Summarized,
    IdeaPruned,
    ProviderError,
    RunFinished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub wall_time: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub island_id: Option<IslandId>,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: serde_json::Value,
}

/// An event before the sink assigns its sequence number and timestamp.
#[derive(Debug, Clone)]
pub struct EventDraft {
    pub island_id: Option<IslandId>,
    pub kind: EventKind,
    pub payload: serde_json::Value,
}

impl EventDraft {
    pub fn new(kind: EventKind, payload: serde_json::Value) -> Self {
        Self {
            island_id: None,
            kind,
            payload,
        }
    }

    pub fn island(island_id: IslandId, kind: EventKind, payload: serde_json::Value) -> Self {
        Self {
            island_id: Some(island_id),
            kind,
            payload,
        }
    }
}

/// Time source for event stamps. Deterministic runs use [`LogicalClock`]
/// so identical runs produce byte-identical logs.
pub trait Clock {
    fn now_ms(&mut self) -> u64;
}

/// Monotonic counter clock: one tick per event.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalClock {
    pub ticks: u64,
}

impl Clock for LogicalClock {
    fn now_ms(&mut self) -> u64 {
        self.ticks += 1;
        self.ticks
    }
}

/// Wall-clock time in milliseconds since the epoch.
#[cfg(feature = "native")]
#[derive(Debug, Default, Clone)]
pub struct SystemClock;

#[cfg(feature = "native")]
impl Clock for SystemClock {
    fn now_ms(&mut self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Where events go. Appends are durable (flushed) before returning.
pub trait EventSink {
    fn append(&mut self, seq: u64, wall_time: u64, draft: EventDraft) -> Result<(), EventError>;
}

/// In-memory sink for tests, simulation, and the browser demo.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub events: Vec<Event>,
    /// Fail appends once the log reaches this length (simulates disk-full).
    pub fail_after: Option<usize>,
}

impl EventSink for MemorySink {
    fn append(&mut self, seq: u64, wall_time: u64, draft: EventDraft) -> Result<(), EventError> {
        if let Some(limit) = self.fail_after {
            if self.events.len() >= limit {
                return Err(EventError::Io("simulated disk full".into()));
            }
        }
        self.events.push(Event {
            seq,
            wall_time,
            island_id: draft.island_id,
            kind: draft.kind,
            payload: draft.payload,
        });
        Ok(())
    }
}

pub fn event_to_line(event: &Event) -> String {
    serde_json::to_string(event).expect("events serialize")
}

/// Parses a JSONL event stream. With `tolerate_truncation`, a malformed or
/// partial final line yields the valid prefix plus a warning instead of an
/// error.
pub fn parse_event_lines(
    text: &str,
    tolerate_truncation: bool,
) -> Result<(Vec<Event>, Option<String>), EventError> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Event>(line) {
            Ok(ev) => events.push(ev),
            Err(e) => {
                if tolerate_truncation {
                    return Ok((
                        events,
                        Some(format!("log truncated at line {}: {e}", i + 1)),
                    ));
                }
                return Err(EventError::Malformed {
                    line: i + 1,
                    detail: e.to_string(),
                });
            }
        }
    }
    Ok((events, None))
}

/// File-backed JSONL sink (`<run_dir>/events.jsonl`).
#[cfg(feature = "native")]
pub use native::JsonlSink;

#[cfg(feature = "native")]
mod native {
    use std::fs::{File, OpenOptions};
    use std::io::{BufRead, BufReader, Write};
    use std::path::{Path, PathBuf};

    use super::*;

    #[derive(Debug)]
    pub struct JsonlSink {
        file: File,
        path: PathBuf,
    }

    impl JsonlSink {
        /// Opens (or creates) the log for appending and reports the last
        /// sequence number already present, so callers continue from it.
        pub fn open(path: &Path) -> Result<(Self, u64), EventError> {
            let last_seq = match File::open(path) {
                Ok(f) => BufReader::new(f)
                    .lines()
                    .map_while(Result::ok)
                    .filter_map(|l| serde_json::from_str::<Event>(&l).ok())
                    .map(|e| e.seq)
                    .max()
                    .unwrap_or(0),
                Err(_) => 0,
            };
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| EventError::Io(format!("{}: {e}", path.display())))?;
            Ok((
                Self {
                    file,
                    path: path.to_path_buf(),
                },
                last_seq,
            ))
        }

        /// Drops all events with `seq > keep_through`; used by resume so the
        /// restored checkpoint is the single authority on run state.
        pub fn truncate_after(path: &Path, keep_through: u64) -> Result<(), EventError> {
            let text = std::fs::read_to_string(path)
                .map_err(|e| EventError::Io(format!("{}: {e}", path.display())))?;
            let mut kept = String::with_capacity(text.len());
            for line in text.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                if let Ok(ev) = serde_json::from_str::<Event>(line) {
                    if ev.seq > keep_through {
                        continue;
                    }
                }
                kept.push_str(line);
                kept.push('\n');
            }
            std::fs::write(path, kept)
                .map_err(|e| EventError::Io(format!("{}: {e}", path.display())))
        }

        pub fn path(&self) -> &Path {
            &self.path
        }
    }

    impl EventSink for JsonlSink {
        fn append(
            &mut self,
            seq: u64,
            wall_time: u64,
            draft: EventDraft,
        ) -> Result<(), EventError> {
            let event = Event {
                seq,
                wall_time,
                island_id: draft.island_id,
                kind: draft.kind,
                payload: draft.payload,
            };
            let line = event_to_line(&event);
            self.file
                .write_all(line.as_bytes())
                .and_then(|()| self.file.write_all(b"\n"))
                .and_then(|()| self.file.flush())
                .map_err(|e| EventError::Io(e.to_string()))
        }
    }
}
