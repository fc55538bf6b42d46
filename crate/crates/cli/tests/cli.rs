use std::path::Path;
use std::process::{Command, Output};

fn bsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn oracle_passes() {
    let out = bsr(&["oracle"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().count() >= 5);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn config_applies_overrides() {
    let out = bsr(&["config", "--profile", "exp2", "--agent", "ew", "--offset", "constant", "--set", "k=6", "--set", "epsilon=0.3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let table: toml::Table = text.parse().unwrap();
    assert_eq!(table["k"].as_integer(), Some(6));
    assert_eq!(table["epsilon"].as_float(), Some(0.3));
    assert_eq!(table["offset"].as_str(), Some("constant"));
    assert_eq!(table["profile"].as_str(), Some("exp2"));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "episodes = 77\nalpha_sr = 0.02\n").unwrap();
    let out = bsr(&["config", "--config", path.to_str().unwrap()]);
    assert!(out.status.success());
    let table: toml::Table = stdout(&out).parse().unwrap();
    assert_eq!(table["episodes"].as_integer(), Some(77));
    assert_eq!(table["alpha_sr"].as_float(), Some(0.02));
}

#[test]
fn bad_arguments_fail() {
    assert!(!bsr(&["run", "--agent", "nope"]).status.success());
    assert!(!bsr(&["config", "--set", "no_such_key=1"]).status.success());
    assert!(!bsr(&["config", "--set", "novalue"]).status.success());
    let out = bsr(&["analyze", "/nonexistent/dir"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

fn artifacts(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("artifacts.json")).unwrap()).unwrap()
}

#[test]
fn run_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = bsr(&["run", "--profile", "exp1", "--agent", "ssr", "--set", "episodes=60", "--seed", "4", "--runs", "2", "--out", out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.path().join("ssr").join("seed-4");
    let art = artifacts(&run_dir);
    assert_eq!(art["episodes"].as_array().unwrap().len(), 60);
    assert_eq!(art["config"]["seed"].as_u64(), Some(4));
    assert!(dir.path().join("ssr").join("seed-5").join("artifacts.json").exists());

    let out = bsr(&["analyze", out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("runs   2"), "{}", stdout(&out));
}

#[test]
fn identical_seeds_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = bsr(&["run", "--agent", "bsr", "--set", "episodes=40", "--seed", "9", "--out", d.path().to_str().unwrap()]);
        assert!(out.status.success());
    }
    let rel = Path::new("bsr-4").join("seed-9").join("artifacts.json");
    assert_eq!(std::fs::read(a.path().join(&rel)).unwrap(), std::fs::read(b.path().join(&rel)).unwrap());
}

#[test]
fn sweep_reports_best_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = bsr(&[
        "sweep", "--agents", "ssr,kq", "--epsilons", "0.1,0.2", "--alphas", "0.1", "--seeds", "2",
        "--set", "episodes=40", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("ssr: best eps"), "{text}");
    assert!(text.contains("kq-4: best eps"), "{text}");
}
