use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn voicerisk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voicerisk"))
        .args(args)
        .current_dir(cwd)
        .env_remove("VOICERISK_THREADS")
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn write_spec(dir: &Path, name: &str, json: &str) {
    std::fs::write(dir.join(name), json).unwrap();
}

const OPPOSED: &str = r#"{"n_subjects": 20, "high_risk_fraction": 0.35, "gender_split": 0.5, "noise_sd": 1.0, "seed": 0,
  "level": "feature", "effect": {"F0_80th": {"male": 1.5, "female": -1.5}, "arousal": {"male": 1.5, "female": -1.5}}}"#;

fn feature_cohort(dir: &Path) {
    write_spec(dir, "spec.json", OPPOSED);
    ok(&voicerisk(&["synth", "--spec", "spec.json", "--out", "cohort", "--seed", "3"], dir));
}

#[test]
fn extract_signal_cohort() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    write_spec(d, "sig.json", r#"{"n_subjects": 4, "high_risk_fraction": 0.5, "gender_split": 0.5, "noise_sd": 1.0, "seed": 0, "level": "signal"}"#);
    ok(&voicerisk(&["synth", "--spec", "sig.json", "--out", "sig", "--seed", "1"], d));
    ok(&voicerisk(&["extract", "--manifest", "sig/manifest.csv", "--seed", "1"], d));
    let first = std::fs::read(d.join("sig/features/gemlite.csv")).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 1 + 4 * 2 * 29);
    ok(&voicerisk(&["extract", "--manifest", "sig/manifest.csv", "--seed", "1", "--out", "again.csv"], d));
    assert_eq!(first, std::fs::read(d.join("again.csv")).unwrap());

    std::fs::remove_file(d.join("sig/alignments/s02_story2_1.json")).unwrap();
    let o = voicerisk(&["extract", "--manifest", "sig/manifest.csv", "--seed", "1", "--out", "x.csv"], d);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("s02_story2_1.json"));
    ok(&voicerisk(&["extract", "--manifest", "sig/manifest.csv", "--seed", "1", "--out", "x.csv", "--fallback-vad"], d));
}

#[test]
fn evaluate_grid_shapes_and_determinism() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    feature_cohort(d);
    let args = ["evaluate", "--manifest", "cohort/manifest.csv", "--features", "gemlite,embedding:w2v-emo", "--seed", "7", "--bootstrap", "200"];
    ok(&voicerisk(&[&args[..], &["--out", "a"]].concat(), d));
    let report: Value = serde_json::from_slice(&std::fs::read(d.join("a/report.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 12);
    let md = std::fs::read_to_string(d.join("a/report.md")).unwrap();
    assert_eq!(md.lines().count(), 2 + 4);
    assert!(md.lines().nth(2).unwrap().matches(" / ").count() == 3);

    let o = Command::new(env!("CARGO_BIN_EXE_voicerisk"))
        .args([&args[..], &["--out", "b"]].concat())
        .current_dir(d)
        .env("VOICERISK_THREADS", "1")
        .output()
        .unwrap();
    ok(&o);
    ok(&voicerisk(&[&args[..], &["--out", "c", "--threads", "8"]].concat(), d));
    for f in ["report.json", "report.md"] {
        let a = std::fs::read(d.join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, std::fs::read(d.join("c").join(f)).unwrap(), "{f}");
    }

    ok(&voicerisk(&["evaluate", "--manifest", "cohort/manifest.csv", "--modelling", "lambda0", "--seed", "7", "--bootstrap", "200", "--out", "l0"], d));
    let report: Value = serde_json::from_slice(&std::fs::read(d.join("l0/report.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 2);
    let md = std::fs::read_to_string(d.join("l0/report.md")).unwrap();
    assert!(md.starts_with("| Features | Normalisation | λ = 0 |"));
}

#[test]
fn analyze_finds_injected_feature() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    write_spec(d, "spec.json", r#"{"n_subjects": 20, "high_risk_fraction": 0.35, "gender_split": 0.5, "noise_sd": 1.0, "seed": 0,
        "level": "feature", "effect": {"Shimmer_local": {"male": 2.0, "female": 2.0}}}"#);
    ok(&voicerisk(&["synth", "--spec", "spec.json", "--out", "cohort", "--seed", "11"], d));
    ok(&voicerisk(&["analyze", "--manifest", "cohort/manifest.csv", "--seed", "7", "--out", "out"], d));
    let a: Value = serde_json::from_slice(&std::fs::read(d.join("out/analysis.json")).unwrap()).unwrap();
    let selected = a["selected"].as_array().unwrap();
    let hit = selected.iter().find(|f| f["name"] == "Shimmer_local").expect("injected feature in the top 5");
    assert!(hit["test"]["p_value"].as_f64().unwrap() < 0.05);
    assert!(selected.len() <= 5);
    assert_eq!(a["group_summaries"].as_object().unwrap().len(), 3);

    // with the report from evaluate, the same cell gives the same analysis
    ok(&voicerisk(&["evaluate", "--manifest", "cohort/manifest.csv", "--modelling", "global", "--norm", "global", "--seed", "7", "--out", "ev"], d));
    ok(&voicerisk(&["analyze", "--manifest", "cohort/manifest.csv", "--report", "ev/report.json", "--seed", "7", "--out", "out2"], d));
    assert_eq!(std::fs::read(d.join("out/analysis.json")).unwrap(), std::fs::read(d.join("out2/analysis.json")).unwrap());

    ok(&voicerisk(&["report", "--report", "ev/report.json", "--analysis", "out/analysis.json", "--out", "r.md"], d));
    assert!(std::fs::read_to_string(d.join("r.md")).unwrap().contains("Shimmer_local"));
}

#[test]
fn config_errors_exit_2() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    feature_cohort(d);
    let code = |args: &[&str]| voicerisk(args, d).status.code();
    assert_eq!(code(&["analyze", "--manifest", "missing.csv", "--seed", "1"]), Some(2));
    assert_eq!(code(&["analyze", "--manifest", "cohort/manifest.csv", "--report", "nope.json", "--seed", "1"]), Some(2));
    assert_eq!(code(&["evaluate", "--manifest", "cohort/manifest.csv"]), Some(2));
    assert_eq!(code(&["evaluate", "--manifest", "cohort/manifest.csv", "--modelling", "lambda2", "--seed", "1"]), Some(2));
    assert_eq!(code(&["evaluate", "--manifest", "cohort/manifest.csv", "--features", "embedding:none", "--seed", "1"]), Some(2));
    write_spec(d, "bad.json", r#"{"n_subjects": 2, "high_risk_fraction": 0.5, "gender_split": 0.5, "noise_sd": 1.0, "seed": 0, "level": "feature"}"#);
    assert_eq!(code(&["synth", "--spec", "bad.json", "--out", "x", "--seed", "1"]), Some(2));
    write_spec(d, "typo.json", r#"{"seed": 1, "modeling": "all"}"#);
    assert_eq!(code(&["--config", "typo.json", "evaluate", "--manifest", "cohort/manifest.csv"]), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    feature_cohort(d);
    let csv = d.join("cohort/features/gemlite.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let truncated: Vec<&str> = text.lines().take(100).collect();
    std::fs::write(&csv, truncated.join("\n") + "\n").unwrap();
    let o = voicerisk(&["evaluate", "--manifest", "cohort/manifest.csv", "--seed", "1"], d);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing"));
}

#[test]
fn config_file_with_flag_override() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    feature_cohort(d);
    write_spec(d, "run.json", r#"{"seed": 7, "manifest": "cohort/manifest.csv", "modelling": "all", "norm": "global", "bootstrap": 100, "out": "cfg"}"#);
    ok(&voicerisk(&["--config", "run.json", "evaluate", "--modelling", "lambda01"], d));
    let report: Value = serde_json::from_slice(&std::fs::read(d.join("cfg/report.json")).unwrap()).unwrap();
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0]["modelling"], "lambda01");
    assert_eq!(report["seed"], 7);
}
