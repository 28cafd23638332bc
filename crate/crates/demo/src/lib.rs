//! Browser bindings for exploring the search-control stack.
//!
//! Three interactive operations, all JSON-in/JSON-out so the page stays a
//! single static file with no framework:
//!
//! - the intervention weight model (point queries plus a probability
//!   surface over both islands' absolute progress),
//! - a deterministic scripted run on a builtin landscape, returning the
//!   full trajectory series with intervention markers,
//! - the reversion power-law masses and the momentum decay curve.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use evotide::eval::{LandscapeEvaluator, LandscapeKind};
use evotide::events::{EventKind, MemorySink};
use evotide::explorer::{ExplorerSettings, ScriptedExplorer};
use evotide::orchestrator::{Engine, EngineConfig, InterventionMode};
use evotide::policy::{compute_weights, powerlaw_masses, IslandId};

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_js(result: Result<String, String>) -> Result<String, JsValue> {
    result.map_err(|e| JsValue::from_str(&e))
}

#[derive(Serialize)]
struct WeightsOut {
    backtrack: f64,
    crossover: Vec<CrossoverOut>,
    similarity: f64,
    p_backtrack: f64,
}

#[derive(Serialize)]
struct CrossoverOut {
    island: u32,
    weight: f64,
    probability: f64,
}

/// Weights and selection probabilities for one triggered island against a
/// JSON array of partner progress values.
#[wasm_bindgen]
pub fn intervention_weights(a_i: f64, partners_json: &str) -> Result<String, JsValue> {
    to_js(intervention_weights_impl(a_i, partners_json))
}

fn intervention_weights_impl(a_i: f64, partners_json: &str) -> Result<String, String> {
    let values: Vec<f64> = serde_json::from_str(partners_json).map_err(err)?;
    if !(0.0..=1.0).contains(&a_i) || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(err("progress values must lie in [0, 1]"));
    }
    let partners: Vec<(IslandId, f64)> = values
        .iter()
        .enumerate()
        .map(|(i, v)| (IslandId(i as u32 + 1), *v))
        .collect();
    let weights = compute_weights(a_i, &partners);
    let probabilities = weights.probabilities();
    let out = WeightsOut {
        backtrack: weights.backtrack,
        similarity: weights.similarity,
        p_backtrack: probabilities[0],
        crossover: weights
            .crossover
            .iter()
            .zip(&probabilities[1..])
            .map(|((id, w), p)| CrossoverOut {
                island: id.0,
                weight: *w,
                probability: *p,
            })
            .collect(),
    };
    serde_json::to_string(&out).map_err(err)
}

/// P(backtrack) over a resolution x resolution grid of (A_i, A_partner)
/// for the two-island case; row-major, A_i on rows.
#[wasm_bindgen]
pub fn backtrack_probability_grid(resolution: u32) -> Result<String, JsValue> {
    to_js(backtrack_probability_grid_impl(resolution))
}

fn backtrack_probability_grid_impl(resolution: u32) -> Result<String, String> {
    let n = resolution.clamp(2, 512) as usize;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let a_i = i as f64 / (n - 1) as f64;
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let a_j = j as f64 / (n - 1) as f64;
            let weights = compute_weights(a_i, &[(IslandId(1), a_j)]);
            row.push(weights.probabilities()[0]);
        }
        rows.push(row);
    }
    serde_json::to_string(&rows).map_err(err)
}

#[derive(Serialize)]
struct ReversionOut {
    masses: Vec<f64>,
}

/// Normalized power-law mass over snapshot positions (earliest first).
#[wasm_bindgen]
pub fn reversion_masses(snapshots: u32, alpha: f64) -> Result<String, JsValue> {
    to_js(reversion_masses_impl(snapshots, alpha))
}

fn reversion_masses_impl(snapshots: u32, alpha: f64) -> Result<String, String> {
    if alpha <= 0.0 {
        return Err(err("alpha must be > 0"));
    }
    let masses = powerlaw_masses(snapshots.clamp(1, 256) as usize, alpha);
    let total: f64 = masses.iter().sum();
    let out = ReversionOut {
        masses: masses.iter().map(|m| m / total).collect(),
    };
    serde_json::to_string(&out).map_err(err)
}

/// Momentum decay from 1.0 under zero progress: the barren-run trajectory
/// against which the stagnation threshold is judged.
#[wasm_bindgen]
pub fn momentum_decay(beta: f64, horizon: u32) -> Result<String, JsValue> {
    to_js(momentum_decay_impl(beta, horizon))
}

fn momentum_decay_impl(beta: f64, horizon: u32) -> Result<String, String> {
    if !(0.0..1.0).contains(&beta) {
        return Err(err("beta must be in [0, 1)"));
    }
    let mut m = 1.0_f64;
    let mut series = vec![m];
    for _ in 0..horizon.clamp(1, 2000) {
        m *= beta;
        series.push(m);
    }
    serde_json::to_string(&series).map_err(err)
}

#[derive(Deserialize)]
struct SimRequest {
    landscape: String,
    #[serde(default = "default_islands")]
    islands: u32,
    #[serde(default = "default_iterations")]
    iterations: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default = "default_beta")]
    beta: f64,
    #[serde(default = "default_epsilon")]
    epsilon_rel: f64,
    #[serde(default)]
    initial_payloads: Option<Vec<String>>,
    #[serde(default)]
    probe_points: Option<Vec<Vec<f64>>>,
}

fn default_islands() -> u32 {
    2
}
fn default_iterations() -> u64 {
    150
}
fn default_mode() -> String {
    "full".into()
}
fn default_beta() -> f64 {
    0.9
}
fn default_epsilon() -> f64 {
    0.05
}

#[derive(Serialize)]
struct SimPoint {
    iteration: u64,
    best: f64,
    momentum: f64,
    a_t: f64,
}

#[derive(Serialize)]
struct SimMarker {
    iteration: u64,
    kind: String,
}

#[derive(Serialize)]
struct SimIsland {
    island: u32,
    points: Vec<SimPoint>,
    markers: Vec<SimMarker>,
}

#[derive(Serialize)]
struct SimOut {
    islands: Vec<SimIsland>,
    best_score: f64,
    best_payload: String,
    reason: String,
    backtracks: u64,
    crossovers: u64,
}

/// Runs a deterministic scripted search and returns the trajectory series.
#[wasm_bindgen]
pub fn simulate_run(request_json: &str) -> Result<String, JsValue> {
    to_js(simulate_run_impl(request_json))
}

fn simulate_run_impl(request_json: &str) -> Result<String, String> {
    let request: SimRequest = serde_json::from_str(request_json).map_err(err)?;
    let landscape = match request.landscape.as_str() {
        "sphere" => LandscapeKind::Sphere,
        "deceptive_two_basin" => LandscapeKind::DeceptiveTwoBasin,
        "staircase" => LandscapeKind::Staircase,
        other => return Err(err(format!("unknown landscape {other:?}"))),
    };
    let mode = match request.mode.as_str() {
        "none" => InterventionMode::None,
        "backtrack_only" => InterventionMode::BacktrackOnly,
        "full" => InterventionMode::Full,
        other => return Err(err(format!("unknown mode {other:?}"))),
    };
    let initial_payloads = request.initial_payloads.unwrap_or_else(|| match landscape {
        LandscapeKind::Sphere => vec!["2.5,2.5".into()],
        LandscapeKind::DeceptiveTwoBasin => vec!["3.2,2.8".into(), "-1.2,-1.2".into()],
        LandscapeKind::Staircase => vec!["0.5".into()],
    });

    let mut settings = ExplorerSettings::for_landscape(landscape, request.seed);
    if let Some(points) = request.probe_points {
        settings.probe_points = points;
    }
    let mut provider = ScriptedExplorer::new(settings);
    let mut evaluator = LandscapeEvaluator::new(landscape);
    let mut sink = MemorySink::default();
    let islands_count = request.islands.clamp(1, 8);
    let config = EngineConfig {
        islands: islands_count,
        iterations: request.iterations.clamp(1, 2000),
        seed: request.seed,
        beta: request.beta,
        mode,
        stop_on_target: false,
        initial_payloads,
        policy: evotide::policy::PolicyConfig {
            epsilon_rel: request.epsilon_rel,
            ..evotide::policy::PolicyConfig::default()
        },
        ..EngineConfig::default()
    };
    let mut engine =
        Engine::new(config, &mut provider, &mut evaluator, &mut sink).map_err(err)?;
    let report = engine.run().map_err(err)?;
    drop(engine);

    let mut islands: Vec<SimIsland> = (0..islands_count)
        .map(|i| SimIsland {
            island: i,
            points: Vec::new(),
            markers: Vec::new(),
        })
        .collect();
    let mut last_iteration: Vec<u64> = vec![0; islands.len()];
    for event in &sink.events {
        let Some(IslandId(island)) = event.island_id else {
            continue;
        };
        let idx = island as usize;
        match event.kind {
            EventKind::MomentumUpdated => {
                let p = &event.payload;
                let iteration = p["iteration"].as_u64().unwrap_or(0);
                last_iteration[idx] = iteration;
                islands[idx].points.push(SimPoint {
                    iteration,
                    best: p["best_ever"].as_f64().unwrap_or(f64::NAN),
                    momentum: p["momentum"].as_f64().unwrap_or(f64::NAN),
                    a_t: p["a_t"].as_f64().unwrap_or(f64::NAN),
                });
            }
            EventKind::TriggerFired | EventKind::BacktrackApplied | EventKind::CrossoverApplied => {
                let kind = match event.kind {
                    EventKind::TriggerFired => "trigger",
                    EventKind::BacktrackApplied => "backtrack",
                    _ => "crossover",
                };
                islands[idx].markers.push(SimMarker {
                    iteration: last_iteration[idx],
                    kind: kind.into(),
                });
            }
            _ => {}
        }
    }

    let out = SimOut {
        islands,
        best_score: report.best.score,
        best_payload: report.best.payload,
        reason: format!("{:?}", report.reason),
        backtracks: report.islands.iter().map(|i| i.backtracks).sum(),
        crossovers: report.islands.iter().map(|i| i.crossovers).sum(),
    };
    serde_json::to_string(&out).map_err(err)
}
