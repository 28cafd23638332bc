//! Operator entry point: `run`, `resume`, `simulate`, and `report`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checkpoint::{
    latest_checkpoint, restore_checkpoint, write_checkpoint, Checkpoint, CheckpointError,
};
use crate::config::{ConfigError, RunConfig, TaskConfig};
use crate::events::JsonlSink;
use crate::orchestrator::{Engine, InterventionMode, RunError, RunReport};
use crate::report::{extract_report_from_text, report_csv, ExtractedReport};

const EVENTS_FILE: &str = "events.jsonl";
const CONFIG_FILE: &str = "config.json";
const REPORT_FILE: &str = "report.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Event(#[from] crate::events::EventError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Checkpoint(CheckpointError::ConfigMismatch { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "evotide", version, about = "Progress-aware evolutionary search engine")]
pub struct Cli {
    /// Override the config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the config file's run directory.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Validate configuration and exit without side effects.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Keep per-evaluation workspace copies.
    #[arg(long, global = true)]
    pub keep_artifacts: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a run described by a JSON config file.
    Run {
        config: PathBuf,
        /// Stop cleanly after this many full rounds (resume later).
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Continue a run from its latest checkpoint.
    Resume {
        run_dir: PathBuf,
        /// Accept a config fingerprint mismatch.
        #[arg(long)]
        force: bool,
    },
    /// Re-run the same seeds under policy variants on a builtin landscape.
    Simulate {
        config: PathBuf,
        /// Output CSV path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract report.csv from a run directory (or aggregate child runs).
    Report { run_dir: PathBuf },
}

pub fn main_with(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run {
            ref config,
            stop_after,
        } => cmd_run(&cli, config, stop_after),
        Command::Resume { ref run_dir, force } => cmd_resume(run_dir, force),
        Command::Simulate { ref config, ref out } => cmd_simulate(&cli, config, out.as_deref()),
        Command::Report { ref run_dir } => cmd_report(run_dir),
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut config = RunConfig::from_json(&text)?;
    // Flags override the file.
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(run_dir) = &cli.run_dir {
        config.run_dir = run_dir.clone();
    }
    if cli.dry_run {
        config.dry_run = true;
    }
    if cli.keep_artifacts {
        config.keep_artifacts = true;
    }
    config.validate()?;
    Ok(config)
}

fn print_report(report: &RunReport) {
    println!("best score: {}", report.best.score);
    println!("best payload: {}", report.best.payload);
    println!(
        "found by {} at iteration {} ({:?})",
        report.best.island_id, report.best.iteration, report.reason
    );
    for island in &report.islands {
        println!(
            "{}: best_ever={} s_best={} A={:.4} m={:.4} iterations={} backtracks={} crossovers={}",
            island.island_id,
            island.best_ever,
            island.s_best,
            island.absolute_progress,
            island.momentum,
            island.iterations,
            island.backtracks,
            island.crossovers,
        );
    }
}

fn cmd_run(cli: &Cli, config_path: &Path, stop_after: Option<u64>) -> Result<i32, CliError> {
    let config = load_config(cli, config_path)?;
    if config.dry_run {
        println!("config OK (dry run): {}", config_path.display());
        return Ok(0);
    }
    std::fs::create_dir_all(&config.run_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", config.run_dir.display())))?;
    std::fs::write(config.run_dir.join(CONFIG_FILE), config.to_json())
        .map_err(|e| CliError::Io(e.to_string()))?;

    let mut provider = config.build_provider()?;
    let mut evaluator = config.build_evaluator()?;
    let (mut sink, _) = JsonlSink::open(&config.run_dir.join(EVENTS_FILE))?;
    let engine_config = config.engine_config();
    let engine = Engine::new(
        engine_config,
        provider.as_mut(),
        evaluator.as_mut(),
        &mut sink,
    )?;
    drive(engine, &config, stop_after)
}

fn cmd_resume(run_dir: &Path, force: bool) -> Result<i32, CliError> {
    let config_text =
        std::fs::read_to_string(run_dir.join(CONFIG_FILE)).map_err(|e| ConfigError::Io {
            path: run_dir.join(CONFIG_FILE).display().to_string(),
            detail: e.to_string(),
        })?;
    let config = RunConfig::from_json(&config_text)?;
    config.validate()?;

    let ckpt_path = latest_checkpoint(run_dir)?;
    let checkpoint = restore_checkpoint(&ckpt_path)?;
    if let Err(e) = checkpoint.validate_fingerprint(config.fingerprint()) {
        if force {
            eprintln!("warning: {e}; continuing under --force");
        } else {
            return Err(e.into());
        }
    }

    // The checkpoint is the authority: drop any events it never saw.
    let events_path = run_dir.join(EVENTS_FILE);
    if events_path.exists() {
        JsonlSink::truncate_after(&events_path, checkpoint.state.next_seq)?;
    }
    let (mut sink, _) = JsonlSink::open(&events_path)?;

    let mut provider = config.build_provider()?;
    let mut evaluator = config.build_evaluator()?;
    let engine = Engine::resume(
        config.engine_config(),
        checkpoint.state,
        provider.as_mut(),
        evaluator.as_mut(),
        &mut sink,
    )?;
    if engine.is_finished() {
        println!("run already finished; nothing to resume");
        print_report(&engine.report());
        return Ok(0);
    }
    drive(engine, &config, None)
}

/// Runs the engine to completion (or `stop_after` rounds), writing
/// checkpoints on the configured cadence and a final one at exit. An event
/// log failure still attempts a final checkpoint before surfacing.
fn drive(mut engine: Engine, config: &RunConfig, stop_after: Option<u64>) -> Result<i32, CliError> {
    let mut last_checkpoint_round = u64::MAX;
    let result = loop {
        match engine.tick() {
            Ok(more) => {
                let round = engine.completed_rounds();
                if round > 0
                    && round.is_multiple_of(config.checkpoint_interval)
                    && last_checkpoint_round != round
                {
                    write_checkpoint(&config.run_dir, &Checkpoint::new(round, engine.run_state()))?;
                    last_checkpoint_round = round;
                }
                if let Some(limit) = stop_after {
                    if round >= limit {
                        break Ok(None);
                    }
                }
                if !more {
                    break Ok(Some(engine.report()));
                }
            }
            Err(e) => break Err(e),
        }
    };
    match result {
        Ok(Some(report)) => {
            write_checkpoint(
                &config.run_dir,
                &Checkpoint::new(engine.completed_rounds(), engine.run_state()),
            )?;
            print_report(&report);
            Ok(0)
        }
        Ok(None) => {
            write_checkpoint(
                &config.run_dir,
                &Checkpoint::new(engine.completed_rounds(), engine.run_state()),
            )?;
            println!(
                "paused after {} round(s); resume with `evotide resume {}`",
                engine.completed_rounds(),
                config.run_dir.display()
            );
            Ok(0)
        }
        Err(e) => {
            // Best-effort final checkpoint on the way down.
            let _ = write_checkpoint(
                &config.run_dir,
                &Checkpoint::new(engine.completed_rounds(), engine.run_state()),
            );
            Err(e.into())
        }
    }
}

/// Simulation matrix config: the base run settings plus seeds and variants.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub base: RunConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_variants")]
    pub variants: Vec<InterventionMode>,
}

fn default_variants() -> Vec<InterventionMode> {
    vec![
        InterventionMode::None,
        InterventionMode::BacktrackOnly,
        InterventionMode::Full,
    ]
}

fn cmd_simulate(cli: &Cli, config_path: &Path, out: Option<&Path>) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(config_path).map_err(|e| ConfigError::Io {
        path: config_path.display().to_string(),
        detail: e.to_string(),
    })?;
    let sim: SimulateConfig =
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if !matches!(sim.base.task, TaskConfig::Builtin { .. }) {
        return Err(ConfigError::Invalid {
            field: "task",
            detail: "simulate requires a builtin landscape task".into(),
        }
        .into());
    }
    if sim.seeds.is_empty() {
        return Err(ConfigError::Invalid {
            field: "seeds",
            detail: "must list at least one seed".into(),
        }
        .into());
    }
    sim.base.validate()?;
    if cli.dry_run {
        println!("config OK (dry run): {}", config_path.display());
        return Ok(0);
    }

    let mut csv = String::from("variant,seed,final_score\n");
    for variant in &sim.variants {
        for &seed in &sim.seeds {
            let mut config = sim.base.clone();
            config.seed = seed;
            config.metrics.mode = *variant;
            let mut provider = config.build_provider()?;
            let mut evaluator = config.build_evaluator()?;
            let mut sink = crate::events::MemorySink::default();
            let mut engine = Engine::new(
                config.engine_config(),
                provider.as_mut(),
                evaluator.as_mut(),
                &mut sink,
            )?;
            let report = engine.run()?;
            csv.push_str(&format!(
                "{},{},{}\n",
                variant_name(*variant),
                seed,
                report.best.score
            ));
        }
    }
    match out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| CliError::Io(e.to_string()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

fn variant_name(mode: InterventionMode) -> &'static str {
    match mode {
        InterventionMode::None => "none",
        InterventionMode::BacktrackOnly => "backtrack_only",
        InterventionMode::Full => "full",
    }
}

fn cmd_report(run_dir: &Path) -> Result<i32, CliError> {
    let single = run_dir.join(EVENTS_FILE);
    let mut reports: Vec<ExtractedReport> = Vec::new();
    if single.exists() {
        let text =
            std::fs::read_to_string(&single).map_err(|e| CliError::Io(e.to_string()))?;
        reports.push(extract_report_from_text(&text)?);
    } else {
        // Aggregate immediate children that look like run directories.
        let mut children: Vec<PathBuf> = std::fs::read_dir(run_dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", run_dir.display())))?
            .flatten()
            .map(|entry| entry.path().join(EVENTS_FILE))
            .filter(|p| p.exists())
            .collect();
        children.sort();
        for path in children {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(e.to_string()))?;
            reports.push(extract_report_from_text(&text)?);
        }
        if reports.is_empty() {
            return Err(CliError::Io(format!(
                "no {EVENTS_FILE} under {} or its children",
                run_dir.display()
            )));
        }
    }
    for report in &reports {
        if let Some(warning) = &report.warning {
            eprintln!("warning: {warning}");
        }
    }
    let csv = report_csv(&reports);
    let out = run_dir.join(REPORT_FILE);
    std::fs::write(&out, &csv).map_err(|e| CliError::Io(e.to_string()))?;
    println!("wrote {}", out.display());
    Ok(0)
}
