//! Binary-level tests over the `evotide` CLI: run, resume, simulate,
//! report, flag overrides, and the file formats they produce.

use std::path::Path;
use std::process::Output;

fn evotide(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_evotide"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn write_config(dir: &Path, run_dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let json = format!(
        r#"{{
  "task": {{"type": "builtin", "landscape": "deceptive_two_basin", "initial_payloads": ["3.2,2.8"]}},
  "islands": 1,
  "iterations": 60,
  "provider": {{"type": "explorer"}},
  "metrics": {{"mode": "backtrack_only"}},
  "seed": 9,
  "stop_on_target": false,
  "run_dir": {run_dir:?}{extra}
}}"#,
        run_dir = run_dir.display()
    );
    std::fs::write(&path, json).unwrap();
    path
}

#[test]
fn dry_run_validates_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = write_config(dir.path(), &run_dir, "");
    let out = evotide(&["run", config.to_str().unwrap(), "--dry-run"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("config OK"));
    assert!(!run_dir.exists(), "dry run must not create the run dir");
}

#[test]
fn invalid_beta_fails_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = dir.path().join("bad.json");
    std::fs::write(
        &config,
        format!(
            r#"{{
  "task": {{"type": "builtin", "landscape": "sphere"}},
  "provider": {{"type": "explorer"}},
  "metrics": {{"beta": 1.5}},
  "run_dir": {:?}
}}"#,
            run_dir.display()
        ),
    )
    .unwrap();
    let out = evotide(&["run", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("metrics.beta"), "{}", stderr(&out));
}

#[test]
fn run_produces_events_checkpoint_and_report_output() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = write_config(dir.path(), &run_dir, "");
    let out = evotide(&["run", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("best score:"));
    assert!(run_dir.join("events.jsonl").exists());
    assert!(run_dir.join("config.json").exists());
    assert!(run_dir.join("checkpoints").exists());

    let report = evotide(&["report", run_dir.to_str().unwrap()]);
    assert!(report.status.success(), "{}", stderr(&report));
    let csv = std::fs::read_to_string(run_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("iteration,island,s_best,momentum,abs_progress,event"));
    assert!(csv.contains("summary,best,"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let ignored = dir.path().join("ignored");
    let overridden = dir.path().join("overridden");
    let config = write_config(dir.path(), &ignored, "");
    let out = evotide(&[
        "run",
        config.to_str().unwrap(),
        "--run-dir",
        overridden.to_str().unwrap(),
        "--seed",
        "123",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(overridden.exists());
    assert!(!ignored.exists());
    let effective = std::fs::read_to_string(overridden.join("config.json")).unwrap();
    assert!(effective.contains("\"seed\": 123"));
}

#[test]
fn kill_and_resume_reproduces_the_event_stream() {
    let dir = tempfile::tempdir().unwrap();

    // Uninterrupted reference run.
    let full_dir = dir.path().join("full");
    let config = write_config(dir.path(), &full_dir, ",\n  \"checkpoint_interval\": 20");
    let out = evotide(&["run", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let reference = std::fs::read(full_dir.join("events.jsonl")).unwrap();

    // Same config, paused after 20 rounds, then resumed.
    let paused_dir = dir.path().join("paused");
    let config2 = {
        let p = dir.path().join("config2.json");
        let json = std::fs::read_to_string(&config)
            .unwrap()
            .replace(&full_dir.display().to_string(), &paused_dir.display().to_string());
        std::fs::write(&p, json).unwrap();
        p
    };
    let out = evotide(&["run", config2.to_str().unwrap(), "--stop-after", "20"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("paused after 20"));
    let partial = std::fs::read(paused_dir.join("events.jsonl")).unwrap();
    assert!(partial.len() < reference.len());

    let out = evotide(&["resume", paused_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let resumed = std::fs::read(paused_dir.join("events.jsonl")).unwrap();

    // The resumed log matches the uninterrupted one byte for byte, except
    // that each run_started fingerprint reflects its own run_dir; strip
    // nothing: configs differ only in run_dir, which the fingerprint
    // covers, so compare event streams with the fingerprint field ignored.
    let normalize = |bytes: &[u8]| -> Vec<String> {
        String::from_utf8_lossy(bytes)
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                if let Some(payload) = v.get_mut("payload") {
                    if payload.get("config_fingerprint").is_some() {
                        payload["config_fingerprint"] = serde_json::json!(0);
                    }
                }
                v.to_string()
            })
            .collect()
    };
    assert_eq!(normalize(&resumed), normalize(&reference));
}

#[test]
fn resume_after_finish_is_a_noop() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = write_config(dir.path(), &run_dir, "");
    let out = evotide(&["run", config.to_str().unwrap()]);
    assert!(out.status.success());
    let events_before = std::fs::read(run_dir.join("events.jsonl")).unwrap();

    let out = evotide(&["resume", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("nothing to resume"));
    let events_after = std::fs::read(run_dir.join("events.jsonl")).unwrap();
    assert_eq!(events_before, events_after);
}

#[test]
fn resume_refuses_a_changed_config() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = write_config(dir.path(), &run_dir, ",\n  \"checkpoint_interval\": 20");
    let out = evotide(&["run", config.to_str().unwrap(), "--stop-after", "20"]);
    assert!(out.status.success(), "{}", stderr(&out));

    // Tamper with the persisted config.
    let persisted = run_dir.join("config.json");
    let text = std::fs::read_to_string(&persisted)
        .unwrap()
        .replace("\"seed\": 9", "\"seed\": 10");
    std::fs::write(&persisted, text).unwrap();

    let out = evotide(&["resume", run_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("fingerprint mismatch"), "{}", stderr(&out));

    // --force overrides.
    let out = evotide(&["resume", run_dir.to_str().unwrap(), "--force"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn resume_missing_directory_errors() {
    let out = evotide(&["resume", "/nonexistent/run/dir"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_emits_variant_seed_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("sim");
    let config_path = dir.path().join("sim.json");
    let json = format!(
        r#"{{
  "task": {{"type": "builtin", "landscape": "deceptive_two_basin", "initial_payloads": ["3.2,2.8"]}},
  "islands": 1,
  "iterations": 60,
  "provider": {{"type": "explorer"}},
  "stop_on_target": false,
  "run_dir": {:?},
  "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
}}"#,
        run_dir.display()
    );
    std::fs::write(&config_path, json).unwrap();
    let out_path = dir.path().join("matrix.csv");
    let out = evotide(&[
        "simulate",
        config_path.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,seed,final_score");
    // 3 variants x 10 seeds.
    assert_eq!(lines.len(), 1 + 30);
    for variant in ["none", "backtrack_only", "full"] {
        assert_eq!(
            lines.iter().filter(|l| l.starts_with(&format!("{variant},"))).count(),
            10,
            "missing rows for {variant}"
        );
    }
    // Identical seed columns across variants.
    let seeds_of = |v: &str| -> Vec<String> {
        lines
            .iter()
            .filter(|l| l.starts_with(&format!("{v},")))
            .map(|l| l.split(',').nth(1).unwrap().to_string())
            .collect()
    };
    assert_eq!(seeds_of("none"), seeds_of("full"));

    // The ablation direction holds: intervention variants escape the
    // shallow basin, the bare variant does not.
    let final_of = |line: &&str| -> f64 { line.split(',').nth(2).unwrap().parse().unwrap() };
    let none_scores: Vec<f64> = lines.iter().filter(|l| l.starts_with("none,")).map(final_of).collect();
    let full_scores: Vec<f64> = lines.iter().filter(|l| l.starts_with("full,")).map(final_of).collect();
    assert!(none_scores.iter().all(|s| *s >= 0.25 - 1e-9));
    assert!(full_scores.iter().filter(|s| **s < 0.25).count() >= 8);
}

#[test]
fn report_aggregates_child_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    for seed in [1u64, 2] {
        let run_dir = dir.path().join(format!("run-{seed}"));
        let config = write_config(&dir.path().join("."), &run_dir, "");
        let out = evotide(&[
            "run",
            config.to_str().unwrap(),
            "--seed",
            &seed.to_string(),
            "--run-dir",
            run_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let out = evotide(&["report", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("run,iteration"));
    assert!(csv.contains("summary,runs,2"));
}
