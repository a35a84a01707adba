//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

fn ebstokes(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebstokes"))
        .args(args)
        .current_dir(dir)
        .env("EBSTOKES_THREADS", "1")
        .output()
        .expect("binary runs")
}

#[test]
fn validate_tableau_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = ebstokes(&["validate-tableau"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("valid"));
}

#[test]
fn usage_errors_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ebstokes(&["no-such-command"], dir.path()).status.code(), Some(1));
    assert_eq!(ebstokes(&["study", "no_such_study"], dir.path()).status.code(), Some(1));
}

#[test]
fn bad_config_reports_key_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[physics]\nflow = \"couette\"\n[grid]\nnx = 32\n[time]\ndt = -1.0\n").unwrap();
    let out = ebstokes(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("time.dt") && err.contains("line 6"), "{err}");
}

#[test]
fn dumps_write_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[geometry]\nname = \"annulus\"\n[grid]\nnx = 16\n").unwrap();
    let g = ebstokes(&["dump-geometry", "--config", "c.toml"], dir.path());
    assert_eq!(g.status.code(), Some(0), "{}", String::from_utf8_lossy(&g.stderr));
    let moments = std::fs::read_to_string(dir.path().join("moments.csv")).unwrap();
    assert!(moments.lines().count() > 100);
    let o = ebstokes(&["dump-operator", "--config", "c.toml", "--operator", "divergence"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ops = std::fs::read_to_string(dir.path().join("operator.csv")).unwrap();
    assert!(ops.lines().count() > 100);
}

#[test]
fn run_writes_manifest_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tg.toml"), "[physics]\nflow = \"taylor_green\"\n[grid]\nnx = 32\n").unwrap();
    let out = ebstokes(&["run", "--config", "tg.toml", "--out", "result"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("result/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_code"], 0);
    for f in ["config.toml", "fields.csv", "history.csv"] {
        assert!(dir.path().join("result").join(f).exists(), "{f}");
    }
}

#[test]
fn sample_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ebstokes::cli::load_config(&path, &Default::default()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}
