mod common;

use std::path::Path;
use std::process::{Command, Output};

use equant::config::{RunConfig, RESOLVED_CONFIG_NAME};
use equant::core::model::HeadVariant;
use equant::squad::parse_squad;

fn equant(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equant"))
        .args(args)
        .current_dir(dir)
        .env_remove("EQUANT_CACHE_DIR")
        .output()
        .expect("spawn equant")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn ok(o: Output) -> String {
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    stdout(&o)
}

/// Writes the synthetic corpus and a small-model config; returns the config path.
fn setup(dir: &Path) -> String {
    let data = dir.join("data.json");
    common::write_json(&data, &common::synthetic_squad(4));
    let mut cfg = common::small_run(dir, HeadVariant::Equant3);
    cfg.paths.train_data = Some(data);
    cfg.eval.split = "train".into();
    cfg.train.max_iterations = 5;
    cfg.train.log_interval = 5;
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn count_params_prints_trunk_total() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(equant(dir.path(), &["count-params"]));
    assert!(out.lines().any(|l| l.split_whitespace().eq(["trunk", "788673"])), "{out}");
    let out = ok(equant(dir.path(), &["count-params", "--head", "equant3"]));
    assert!(out.lines().any(|l| l.split_whitespace().eq(["total", "927778"])), "{out}");
}

#[test]
fn preprocess_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    ok(equant(dir.path(), &["preprocess", "--config", &cfg, "--cache", "a.bin"]));
    ok(equant(dir.path(), &["preprocess", "--config", &cfg, "--cache", "b.bin"]));
    let a = std::fs::read(dir.path().join("a.bin")).unwrap();
    let b = std::fs::read(dir.path().join("b.bin")).unwrap();
    assert!(a == b, "caches differ");
    assert!(dir.path().join(RESOLVED_CONFIG_NAME).exists());
}

#[test]
fn unknown_key_is_a_single_line_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[model]\nhiden = 64\n").unwrap();
    let o = equant(dir.path(), &["count-params", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind=config: "), "{err}");
    assert!(err.contains("hiden"), "{err}");

    let o = equant(dir.path(), &["count-params", "--set", "train.sed=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sed"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = equant(dir.path(), &["count-params", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: kind=usage: "), "{}", stderr(&o));
    ok(equant(dir.path(), &["--help"]));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[model]\nhidden = 64\nattention_heads = 4\n").unwrap();
    let from_file = ok(equant(dir.path(), &["count-params", "--config", "c.toml"]));
    let flagged = ok(equant(dir.path(), &["count-params", "--config", "c.toml", "--hidden", "32"]));
    let set = ok(equant(dir.path(), &["count-params", "--config", "c.toml", "--set", "model.hidden=32"]));
    assert_ne!(from_file, flagged);
    assert_eq!(flagged, set);
}

#[test]
fn missing_input_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let o = equant(dir.path(), &["preprocess", "--train-data", "absent.json"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error: kind=config: ") && err.contains("absent.json"), "{err}");
}

#[test]
fn train_then_evaluate_force_answerable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    ok(equant(dir.path(), &["preprocess", "--config", &cfg]));
    let out = ok(equant(dir.path(), &["train", "--config", &cfg]));
    assert!(out.contains("final.ckpt"), "{out}");
    let run = dir.path().join("run");
    let echoed = RunConfig::resolve(Some(&run.join(RESOLVED_CONFIG_NAME)), &[], None).unwrap();
    assert_eq!(echoed.train.max_iterations, 5);
    assert!(run.join("run_log.jsonl").exists());

    let ckpt = run.join("final.ckpt");
    let out = ok(equant(
        dir.path(),
        &["evaluate", "--config", &cfg, "--checkpoint", ckpt.to_str().unwrap(), "--mode", "force_answerable", "--report", "fa.json"],
    ));
    assert!(out.starts_with("EM "), "{out}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("fa.json")).unwrap()).unwrap();
    assert_eq!(report["total"], 8);
    let preds: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("fa.predictions.json")).unwrap()).unwrap();
    let preds = preds.as_object().unwrap();
    assert_eq!(preds.len(), 8);
    assert!(preds.values().all(|v| !v.as_str().unwrap().is_empty()));
}

#[test]
fn shuffle_writes_unanswerable_cross_article_pairs() {
    let dir = tempfile::tempdir().unwrap();
    common::write_json(&dir.path().join("in.json"), &common::synthetic_answerable(3));
    let out = ok(equant(dir.path(), &["shuffle", "--input", "in.json", "--output", "out.json", "--seed", "3"]));
    assert!(out.starts_with("wrote 3 shuffled pairs"), "{out}");
    let pairs = parse_squad(&std::fs::read_to_string(dir.path().join("out.json")).unwrap()).unwrap();
    assert_eq!(pairs.len(), 3);
    assert!(pairs.iter().all(|p| !p.answerable() && p.id.contains("-shuffled-")));
}

#[test]
fn cache_dir_env_sets_default_cache_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text = text.lines().filter(|l| !l.starts_with("cache =")).collect::<Vec<_>>().join("\n");
    std::fs::write(&cfg, text).unwrap();
    let caches = dir.path().join("caches");
    std::fs::create_dir(&caches).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_equant"))
        .args(["preprocess", "--config", &cfg])
        .current_dir(dir.path())
        .env("EQUANT_CACHE_DIR", &caches)
        .output()
        .unwrap();
    ok(o);
    assert!(caches.join("equant.cache").exists());
    assert!(caches.join(RESOLVED_CONFIG_NAME).exists());
}
