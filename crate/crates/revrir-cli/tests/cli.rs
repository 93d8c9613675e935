//! Binary-level tests: command wiring, exit codes, machine-parsable errors,
//! idempotence, and a reduced pipeline from an empty directory.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use revrir_cli::config::RunConfig;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_revrir")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("revrir-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], out_dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .args(["--out", out_dir.to_str().unwrap()])
        .env_remove("REVRIR_SEED")
        .output()
        .expect("binary runs")
}

/// Reduced configuration that completes in seconds.
fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig::desk();
    cfg.seed = 3;
    cfg.data.rirs_per_class = 8;
    cfg.data.source_count = 10;
    cfg.data.pairs_per_class = 8;
    cfg.acoustics.rir_length = 2048;
    cfg.encoder.rir_input_bins = 1025;
    cfg.encoder.rir_hidden = vec![32, 16];
    cfg.encoder.speech_bins = 513;
    cfg.encoder.speech_proj = 24;
    cfg.encoder.speech_hidden = vec![16];
    cfg.spectrogram.frame_length = 1024;
    cfg.spectrogram.hop = 512;
    cfg.pretrain_epochs = 2;
    cfg.pretrain_batch = 8;
    cfg.finetune.epochs = 3;
    cfg.baseline.epochs = 5;
    let path = dir.join("small.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn full_pipeline_from_empty_directory() {
    let dir = tmp_dir("pipeline");
    let cfg = small_config(&dir);
    let cfg = cfg.to_str().unwrap();
    for args in [
        vec!["--config", cfg, "catalog"],
        vec!["--config", cfg, "gen-rirs"],
        vec!["--config", cfg, "build-data"],
        vec!["--config", cfg, "pretrain"],
        vec!["--config", cfg, "finetune", "--encoder", "speech", "--frozen", "true"],
        vec!["--config", cfg, "finetune", "--encoder", "rir", "--frozen", "false"],
        vec!["--config", cfg, "baseline"],
        vec!["--config", cfg, "evaluate", "--encoder", "speech", "--set", "speech", "--collapse", "types"],
        vec!["--config", cfg, "report"],
    ] {
        let out = run(&args, &dir);
        assert!(
            out.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(dir.join("catalog.txt").exists());
    assert!(dir.join("bank.rvrb").exists());
    assert!(dir.join("manifest.json").exists());
    assert!(dir.join("pretrain-seed3.rvck").exists());
    assert!(dir.join("report.txt").exists());
    let report = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("top-1"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn catalog_is_idempotent() {
    let dir = tmp_dir("idempotent");
    let cfg = small_config(&dir);
    let cfg = cfg.to_str().unwrap();
    assert!(run(&["--config", cfg, "catalog"], &dir).status.success());
    let first = std::fs::read(dir.join("catalog.txt")).unwrap();
    assert!(run(&["--config", cfg, "catalog"], &dir).status.success());
    let second = std::fs::read(dir.join("catalog.txt")).unwrap();
    assert_eq!(first, second);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_inputs_exit_with_data_code() {
    let dir = tmp_dir("missing");
    let out = run(&["--preset", "desk", "gen-rirs"], &dir);
    assert_eq!(out.status.code(), Some(3), "missing catalog should be a data error");
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or("");
    assert!(
        line.starts_with("error kind=data code=3"),
        "machine-parsable error line, got: {line}"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn config_hash_mismatch_is_refused() {
    let dir = tmp_dir("hash");
    let cfg = small_config(&dir);
    let cfg_str = cfg.to_str().unwrap();
    assert!(run(&["--config", cfg_str, "catalog"], &dir).status.success());

    // a different configuration must refuse the existing catalog
    let mut other = RunConfig::from_json(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    other.data.rirs_per_class = 9;
    let other_path = dir.join("other.json");
    std::fs::write(&other_path, serde_json::to_string_pretty(&other).unwrap()).unwrap();
    let out = run(&["--config", other_path.to_str().unwrap(), "gen-rirs"], &dir);
    assert_eq!(out.status.code(), Some(2), "hash mismatch should be a validation error");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("produced by config"), "stderr: {stderr}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn bad_environment_override_is_rejected() {
    let dir = tmp_dir("env");
    let out = Command::new(bin())
        .args(["--preset", "desk", "catalog", "--out", dir.to_str().unwrap()])
        .env("REVRIR_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn environment_override_applies_and_is_logged() {
    let dir = tmp_dir("envlog");
    let cfg = small_config(&dir);
    let out = Command::new(bin())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "catalog",
            "--out",
            dir.to_str().unwrap(),
        ])
        .env("REVRIR_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    let record = std::fs::read_to_string(dir.join("run-catalog.json")).unwrap();
    assert!(record.contains("REVRIR_SEED=99"), "run record must log overrides");
    assert!(record.contains("\"seed\": 99"));
    let _ = std::fs::remove_dir_all(&dir);
}
