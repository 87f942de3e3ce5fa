//! End-to-end runs of the `iris-lab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn iris_lab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iris-lab"))
        .args(args)
        .current_dir(cwd)
        .env("IRIS_LAB_THREADS", "1")
        .output()
        .expect("spawn iris-lab")
}

fn generate(dir: &Path) {
    let out = iris_lab(
        &["--seed", "12", "--output", "pop", "generate", "--identities", "30", "--probes", "2"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn identify_prints_search_result_json() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let probes: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pop/probes.json")).unwrap()).unwrap();
    let probe = probes[0]["path"].as_str().unwrap();
    let probe_path = format!("pop/{probe}");
    let out = iris_lab(
        &["identify", "--method", "1first", "--threshold", "0.32", "--shifts", "14", &probe_path, "pop/gallery.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(v["method"], "1first");
    assert_eq!(v["decision"], "match");
    assert_eq!(v["matched_identity"], probes[0]["identity"]);
    assert_eq!(v["comparisons"].as_u64().unwrap(), v["matched_index"].as_u64().unwrap() + 1);
    assert!(v["score"]["value"].as_f64().unwrap() <= 0.32);
    assert!(v["score"]["best_shift"].as_i64().unwrap().abs() <= 14);

    let both = iris_lab(&["identify", "--threshold", "0.32", &probe_path, "pop/gallery.json"], dir.path());
    let text = String::from_utf8(both.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["method"], "1n");
    assert_eq!(lines[0]["comparisons"], 30);
    assert_eq!(lines[0]["decision"], lines[1]["decision"]);
}

#[test]
fn sweep_then_report_reproduces_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "population": {"synthetic": {"n_identities": 40, "probes_per_identity": 2}},
        "gallery_sizes": [20, 40],
        "thresholds": [0.30, 0.32, 0.34],
        "shift_ranges": [0, 3],
        "two_stage": {"narrow": 1, "wide": 3},
        "validation_probes": 5,
        "output_dir": "run"
    }"#;
    std::fs::write(dir.path().join("exp.json"), cfg).unwrap();
    let out = iris_lab(&["sweep", "--config", "exp.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(dir.path().join("run/rows.csv")).unwrap();
    assert!(rows.starts_with("method,gallery_size,threshold,shifts,tmr,fmr,fnmr,mean_comparisons\n"));
    // 2 sizes x 3 thresholds x (2 ranges x 2 methods + 2 two-stage)
    assert_eq!(rows.lines().count(), 1 + 2 * 3 * 6);
    assert!(rows.contains("2stage-1first,"));

    let out = iris_lab(&["--output", "again", "report", "run/rows.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["summary.csv", "roc.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("run").join(f)).unwrap(),
            std::fs::read(dir.path().join("again").join(f)).unwrap(),
            "{f}"
        );
    }
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/config.json")).unwrap()).unwrap();
    assert_eq!(echoed["gallery_sizes"], serde_json::json!([20, 40]));
}

#[test]
fn sweep_over_manifest_population() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let cfg = r#"{
        "population": {"manifest": {"gallery": "pop/gallery.json", "probes": "pop/probes.json"}},
        "gallery_sizes": [10, 30],
        "thresholds": [0.30, 0.35],
        "shift_ranges": [0, 2],
        "output_dir": "run"
    }"#;
    std::fs::write(dir.path().join("exp.json"), cfg).unwrap();
    let out = iris_lab(&["--config", "exp.json", "--method", "1n", "sweep"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(dir.path().join("run/rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 2);
    assert!(rows.lines().skip(1).all(|l| l.starts_with("1n,")));
}

#[test]
fn validate_reports_clean_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = iris_lab(&["validate", "--trials", "2000", "--pairs", "20"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("randomized equivalence: 2000 trials, 0 violations"), "{text}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(iris_lab(&["--help"], dir.path()).status.code(), Some(0));
    let bad = iris_lab(&["nonsense"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("Usage"));
    assert_eq!(iris_lab(&["--config", "missing.json", "sweep"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.json"), r#"{"gallery_sizes": []}"#).unwrap();
    assert_eq!(iris_lab(&["--config", "bad.json", "sweep"], dir.path()).status.code(), Some(1));
    let out = iris_lab(&["identify", "--threshold", "0.3", "nope.irt", "nope.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
