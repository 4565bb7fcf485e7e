use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("driftlab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn driftlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftlab")).args(args).output().unwrap()
}

fn run_to(config: &Path, dir: &Path) -> (i32, Value) {
    let o = driftlab(&["run", "--config", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    let report = std::fs::read_to_string(dir.join("report.json")).unwrap();
    (o.status.code().unwrap(), serde_json::from_str(&report).unwrap())
}

#[test]
fn inverse_radius_norm_fixture() {
    let dir = scratch("inv");
    let (code, r) = run_to(&fixture("inv_norm.json"), &dir);
    assert_eq!(code, 0);
    let v = r["result"]["value"].as_f64().unwrap();
    assert!((v - 3f64.sqrt()).abs() <= 0.01 * 3f64.sqrt(), "{v}");
    assert_eq!(r["op"], "morrey-norm");
}

#[test]
fn brownian_exit_mean_fixture() {
    let dir = scratch("bm");
    let (code, r) = run_to(&fixture("bm_d2.json"), &dir);
    assert_eq!(code, 0);
    let v = r["result"]["estimate"]["value"].as_f64().unwrap();
    assert!((v - 0.5).abs() <= 0.01, "{v}");
}

#[test]
fn bad_exponent_names_the_field() {
    let dir = scratch("bad");
    std::fs::create_dir_all(&dir).unwrap();
    let text = std::fs::read_to_string(fixture("inv_norm.json"))
        .unwrap()
        .replace("\"p\": 2.0", "\"p\": 0");
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, text).unwrap();
    let o = driftlab(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spec.p"));
}

#[test]
fn schema_errors_are_pointered() {
    let dir = scratch("schema");
    std::fs::create_dir_all(&dir).unwrap();
    let text = std::fs::read_to_string(fixture("bm_d2.json"))
        .unwrap()
        .replace("\"n_paths\": 100000", "\"n_paths\": \"many\"");
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, text).unwrap();
    let o = driftlab(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("params.spec.n_paths"), "{err}");
}

#[test]
fn failed_check_exits_two() {
    let dir = scratch("check");
    std::fs::create_dir_all(&dir).unwrap();
    let text = std::fs::read_to_string(fixture("inv_norm.json"))
        .unwrap()
        .replace("1.7320508075688772", "2.0");
    let cfg = dir.join("off.json");
    std::fs::write(&cfg, text).unwrap();
    let (code, r) = run_to(&cfg, &dir.join("out"));
    assert_eq!(code, 2);
    assert_eq!(r["verdict"]["pass"], false);
}

#[test]
fn catalog_lists_the_named_fields() {
    let o = driftlab(&["list-catalog"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("example_3_22_1"));
    assert!(text.contains("rotation_sigma"));
    assert!(text.lines().count() > 10);
}

#[test]
fn every_op_is_listed() {
    let o = driftlab(&["list-ops"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for op in [
        "morrey-norm",
        "exit-mean",
        "green-histogram",
        "rotation",
        "gehring-select",
        "nonuniqueness",
    ] {
        assert!(text.lines().any(|l| l.starts_with(op)), "{op}");
    }
}

#[test]
fn replay_is_byte_identical() {
    let a = scratch("replay-a");
    let b = scratch("replay-b");
    let cfg = fixture("bm_d2.json");
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let o = driftlab(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(
        std::fs::read(a.join("report.json")).unwrap(),
        std::fs::read(b.join("report.json")).unwrap()
    );
}

#[test]
fn example_configs_run_and_cover_every_op() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut covered = std::collections::BTreeSet::new();
    for sub in ["acceptance", "examples"] {
        for e in std::fs::read_dir(root.join(sub)).unwrap() {
            let text = std::fs::read_to_string(e.unwrap().path()).unwrap();
            let v: Value = serde_json::from_str(&text).unwrap();
            covered.insert(v["op"].as_str().unwrap().to_string());
        }
    }
    let listed = String::from_utf8(driftlab(&["list-ops"]).stdout).unwrap();
    for op in listed.lines().filter_map(|l| l.split_whitespace().next()) {
        assert!(covered.contains(op), "no config exercises {op}");
    }

    let out = scratch("examples");
    for e in std::fs::read_dir(root.join("examples")).unwrap() {
        let path = e.unwrap().path();
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let (code, r) = run_to(&path, &out.join(&name));
        assert_eq!(code, 0, "{name}: {}", r["verdict"]);
    }
}
