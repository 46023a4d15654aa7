use std::path::Path;
use std::process::{Command, Output};

fn hemix(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hemix"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn gen_data_writes_every_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let out = hemix(dir.path(), &["gen-data"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let data = dir.path().join("data");
    assert_eq!(lines(&data.join("monazite.csv")), 526);
    assert_eq!(lines(&data.join("xenotime.csv")), 526);
    assert_eq!(lines(&data.join("fused.csv")), 1051);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("fused.manifest.json")).unwrap()).unwrap();
    assert!(manifest.to_string().contains("1050"));
    assert!(timings_has(dir.path(), "gen-data"));

    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("gen-data\t")).count(), 6);
}

fn timings_has(dir: &Path, stage: &str) -> bool {
    std::fs::read_to_string(dir.join("timings.json")).map_or(false, |s| s.contains(stage))
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(hemix(d.path(), &["gen-data", "--seed", "3"]).status.success());
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("data/fused.csv")).unwrap();
    assert_eq!(read(&a), read(&b));

    let c = tempfile::tempdir().unwrap();
    assert!(hemix(c.path(), &["gen-data", "--seed", "4"]).status.success());
    assert_ne!(read(&a), read(&c));
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[krr]\nsplit_ratio = 1.5\n").unwrap();
    let out = hemix(dir.path(), &["gen-data", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("krr.split_ratio"));

    std::fs::write(&cfg, "[sparsify]\nbogus = 1\n").unwrap();
    let out = hemix(dir.path(), &["gen-data", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn missing_config_file_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = hemix(dir.path(), &["gen-data", "--config", "does/not/exist.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does/not/exist.toml"));
}

#[test]
fn stages_without_data_name_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = hemix(dir.path(), &["krr-scan"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fused.csv"));

    let out = hemix(dir.path(), &["report"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing artifacts"), "{err}");
    assert!(err.contains("formulas.json"), "{err}");
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = hemix(dir.path(), &["gen-data", "--threads", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn show_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = hemix(dir.path(), &["show-config", "--seed", "9"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = hemix::RunConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.seeds.data, 9);
    assert_eq!(cfg.seeds.cv, 9);
    assert_eq!(cfg.paths.out_dir, dir.path());
}
