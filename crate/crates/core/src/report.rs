//! Trajectory and summary extraction from event logs.
//!
//! Produces the per-iteration series (best score, momentum, absolute
//! progress, intervention markers) behind trajectory plots, plus a
//! best/P75/mean/worst summary over one or more runs' final scores.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::events::{parse_event_lines, Event, EventError, EventKind};
use crate::policy::IslandId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub iteration: u64,
    pub island: IslandId,
    pub s_best: f64,
    pub momentum: f64,
    pub abs_progress: f64,
    /// Semicolon-joined intervention markers landing on this iteration.
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExtractedReport {
    pub rows: Vec<ReportRow>,
    /// Global best score at run end, when the log contains `run_finished`.
    pub final_best: Option<f64>,
    pub warning: Option<String>,
}

/// Rebuilds the trajectory series from one run's events.
pub fn extract_report(events: &[Event]) -> ExtractedReport {
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut last_row_by_island: HashMap<IslandId, usize> = HashMap::new();
    let mut final_best = None;

    for event in events {
        match event.kind {
            EventKind::MomentumUpdated => {
                let Some(island) = event.island_id else {
                    continue;
                };
                let p = &event.payload;
                // The plotted best is the never-reverting best-ever; older
                // logs without it fall back to the tracker value.
                let s_best = p["best_ever"]
                    .as_f64()
                    .or_else(|| p["s_best"].as_f64())
                    .unwrap_or(f64::NAN);
                rows.push(ReportRow {
                    iteration: p["iteration"].as_u64().unwrap_or(0),
                    island,
                    s_best,
                    momentum: p["momentum"].as_f64().unwrap_or(f64::NAN),
                    abs_progress: p["a_t"].as_f64().unwrap_or(f64::NAN),
                    event: String::new(),
                });
                last_row_by_island.insert(island, rows.len() - 1);
            }
            EventKind::TriggerFired
            | EventKind::BacktrackApplied
            | EventKind::CrossoverApplied => {
                let marker = match event.kind {
                    EventKind::TriggerFired => "trigger",
                    EventKind::BacktrackApplied => "backtrack",
                    _ => "crossover",
                };
                if let Some(idx) = event.island_id.and_then(|i| last_row_by_island.get(&i)) {
                    let slot = &mut rows[*idx].event;
                    if !slot.is_empty() {
                        slot.push(';');
                    }
                    slot.push_str(marker);
                }
            }
            EventKind::RunFinished => {
                final_best = event.payload["best_score"].as_f64();
            }
            _ => {}
        }
    }
    ExtractedReport {
        rows,
        final_best,
        warning: None,
    }
}

/// Parses a JSONL log (tolerating truncation) and extracts its report.
pub fn extract_report_from_text(text: &str) -> Result<ExtractedReport, EventError> {
    let (events, warning) = parse_event_lines(text, true)?;
    let mut report = extract_report(&events);
    report.warning = warning;
    Ok(report)
}

/// Nearest-rank percentile of ascending-sorted `values`; `q` in `(0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Best/P75/mean/worst over per-run final scores (minimize orientation:
/// best is the minimum).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub best: f64,
    pub p75: f64,
    pub mean: f64,
    pub worst: f64,
}

pub fn summarize_finals(finals: &[f64]) -> Option<Summary> {
    if finals.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = finals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Some(Summary {
        runs: sorted.len(),
        best: sorted[0],
        p75: percentile(&sorted, 0.75),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        worst: *sorted.last().unwrap(),
    })
}

pub const REPORT_HEADER: &str = "iteration,island,s_best,momentum,abs_progress,event";

/// Renders one or more extracted reports as CSV: the series of each run
/// (with a `run` prefix column when aggregating several), then the summary
/// rows over final scores.
pub fn report_csv(reports: &[ExtractedReport]) -> String {
    let aggregated = reports.len() > 1;
    let mut out = String::new();
    if aggregated {
        out.push_str("run,");
    }
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for (run_idx, report) in reports.iter().enumerate() {
        for row in &report.rows {
            if aggregated {
                out.push_str(&format!("{run_idx},"));
            }
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.iteration, row.island.0, row.s_best, row.momentum, row.abs_progress, row.event
            ));
        }
    }
    let finals: Vec<f64> = reports.iter().filter_map(|r| r.final_best).collect();
    if let Some(summary) = summarize_finals(&finals) {
        out.push_str(&format!(
            "summary,runs,{}\nsummary,best,{}\nsummary,p75,{}\nsummary,mean,{}\nsummary,worst,{}\n",
            summary.runs, summary.best, summary.p75, summary.mean, summary.worst
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::event_to_line;

    fn momentum_event(seq: u64, island: u32, iteration: u64, s_best: f64) -> Event {
        Event {
            seq,
            wall_time: seq,
            island_id: Some(IslandId(island)),
            kind: EventKind::MomentumUpdated,
            payload: serde_json::json!({
                "iteration": iteration,
                "step": iteration,
                "momentum": 0.5,
                "s_best": s_best,
                "a_t": 1.0 - s_best,
            }),
        }
    }

    #[test]
    fn empty_log_yields_header_only_csv() {
        let report = extract_report(&[]);
        assert_eq!(report_csv(&[report]), format!("{REPORT_HEADER}\n"));
    }

    #[test]
    fn series_preserves_monotone_best_column() {
        let events: Vec<Event> = (1..=5)
            .map(|i| momentum_event(i, 0, i, 1.0 / i as f64))
            .collect();
        let report = extract_report(&events);
        assert_eq!(report.rows.len(), 5);
        assert!(report
            .rows
            .windows(2)
            .all(|w| w[1].s_best <= w[0].s_best));
    }

    #[test]
    fn markers_attach_to_the_latest_row() {
        let mut events = vec![momentum_event(1, 0, 1, 0.5)];
        events.push(Event {
            seq: 2,
            wall_time: 2,
            island_id: Some(IslandId(0)),
            kind: EventKind::TriggerFired,
            payload: serde_json::json!({}),
        });
        events.push(Event {
            seq: 3,
            wall_time: 3,
            island_id: Some(IslandId(0)),
            kind: EventKind::BacktrackApplied,
            payload: serde_json::json!({"target_step": 0}),
        });
        let report = extract_report(&events);
        assert_eq!(report.rows[0].event, "trigger;backtrack");
    }

    #[test]
    fn truncated_log_reports_prefix_with_warning() {
        let good = event_to_line(&momentum_event(1, 0, 1, 0.7));
        let text = format!("{good}\n{{broken");
        let report = extract_report_from_text(&text).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.warning.is_some());
    }

    #[test]
    fn summary_statistics_over_runs() {
        let finals = [3.0, 1.0, 2.0, 4.0];
        let s = summarize_finals(&finals).unwrap();
        assert_eq!(s.best, 1.0);
        assert_eq!(s.worst, 4.0);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.p75, 3.0);
        assert_eq!(s.runs, 4);
    }

    #[test]
    fn aggregated_csv_has_run_column_and_one_entry_per_run() {
        let mut reports = Vec::new();
        for i in 0..10 {
            let mut r = extract_report(&[momentum_event(1, 0, 1, 0.5)]);
            r.final_best = Some(f64::from(i));
            reports.push(r);
        }
        let csv = report_csv(&reports);
        assert!(csv.starts_with("run,iteration"));
        assert!(csv.contains("summary,runs,10"));
        assert!(csv.contains("summary,best,0"));
        assert!(csv.contains("summary,worst,9"));
    }
}
