mod common;

use std::path::Path;
use std::process::{Command, Output};

use conformity::runner::{AgentSpec, Experiment, RunConfig};
use conformity::agents::EndpointSettings;
use conformity::{SyntheticAgentParams, TaskKind};

use common::synthetic_config;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conformity")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &RunConfig) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn full_cli_flow_writes_tables_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        trials_per_n: 4,
        pool_size: 8,
        ..synthetic_config(&dir.path().join("run"), TaskKind::LineJudgment, Experiment::Unanimity)
    };
    let config = write_config(dir.path(), &cfg);
    for cmd in ["calibrate", "run", "analyze", "report"] {
        let out = cli(&[cmd, "--config", &config]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let analysis = cfg.analysis_dir();
    for table in ["curves.csv", "auc.csv", "data_quality.csv", "analysis.json"] {
        assert!(analysis.join(table).exists(), "{table}");
    }
    let figures: Vec<_> = std::fs::read_dir(cfg.figures_dir()).unwrap().collect();
    assert!(!figures.is_empty());
    let auc = std::fs::read_to_string(analysis.join("auc.csv")).unwrap();
    assert!(auc.contains("100% wrong"));
}

#[test]
fn gen_stimuli_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stim");
    let res = cli(&["gen-stimuli", "--task", "dots_estimation", "--out", out.to_str().unwrap(), "--per-level", "2"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 20);
}

#[test]
fn init_config_round_trips() {
    let out = cli(&["init-config", "--task", "color_recognition", "--experiment", "normative"]);
    assert!(out.status.success());
    let cfg = RunConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.experiment, Experiment::Normative);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"trials_per_n": 0}"#).unwrap();
    assert_eq!(cli(&["run", "--config", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cli(&["init-config", "--task", "juggling"]).status.code(), Some(2));
}

#[test]
fn calibration_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // A baseline gap of 1 gives p_correct near 0.73, below the filter.
    let params = SyntheticAgentParams { p_floor_logit_gap: 1.0, gap_jitter: 0.0, ..Default::default() };
    let cfg = RunConfig {
        agent: AgentSpec::Synthetic(params),
        pool_size: 5,
        candidate_budget: 20,
        ..synthetic_config(&dir.path().join("run"), TaskKind::LineJudgment, Experiment::GroupSize)
    };
    let out = cli(&["calibrate", "--config", &write_config(dir.path(), &cfg)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("easier ladder"));
}

#[test]
fn unreachable_endpoint_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let settings = EndpointSettings {
        base_url: format!("http://127.0.0.1:{port}/v1"),
        model_name: "m".into(),
        max_retries: 0,
        backoff_ms: 1,
        timeout_secs: 2.0,
        ..Default::default()
    };
    let cfg = RunConfig {
        agent: AgentSpec::Remote(settings),
        pool_size: 2,
        ..synthetic_config(&dir.path().join("run"), TaskKind::LineJudgment, Experiment::GroupSize)
    };
    let out = cli(&["run", "--config", &write_config(dir.path(), &cfg)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn analysis_without_run_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(&dir.path().join("run"), TaskKind::LineJudgment, Experiment::GroupSize);
    let out = cli(&["analyze", "--config", &write_config(dir.path(), &cfg)]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn changed_config_is_refused_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        trials_per_n: 2,
        pool_size: 4,
        ..synthetic_config(&dir.path().join("run"), TaskKind::LineJudgment, Experiment::GroupSize)
    };
    let out = cli(&["run", "--config", &write_config(dir.path(), &cfg), "--max-trials", "5"]);
    assert!(out.status.success());
    let changed = RunConfig { master_seed: 9, ..cfg };
    let out = cli(&["run", "--config", &write_config(dir.path(), &changed)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
