use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bwbp::{gallery, parse_model, ModelSpec};

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn bwbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bwbp")).args(args).output().expect("binary runs")
}

fn model(name: &str) -> String {
    models_dir().join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim_end().to_string()
}

#[test]
fn classify_prints_one_line_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sa");
    let o = bwbp(&["classify", "--model", &model("sa_0.2_0.2.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "verdict=AlmostSureExtinction nu=2 gamma=0.8 inf_theta=0.4@1.0");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sa.report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["verdict"], "AlmostSureExtinction");
    assert_eq!(report["seed"], 0x5EED);
    assert_eq!(report["model_sha256"].as_str().unwrap().len(), 64);
    assert!(report["version"].is_string());
    assert!(report.get("workers").is_none());
    assert!(!dir.path().join("sa.data.csv").exists());
}

#[test]
fn prop1_at_one_generation_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let o = bwbp(&["prop1", "--model", &model("bs.json"), "--n", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.report.json")).unwrap()).unwrap();
    let rows = report["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["diff"] == 0.0));
    let csv = std::fs::read_to_string(dir.path().join("p.data.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("k,lhs,rhs,diff,se"));
}

#[test]
fn trivial_model_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    for sub in ["classify", "validate"] {
        let o = bwbp(&[sub, "--model", &model("invalid/p1_line.json"), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{sub}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("(A2)"), "{sub}");
    }
}

#[test]
fn malformed_model_is_structural() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = bwbp(&["classify", "--model", &model("invalid/unnormalized.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("law"));
    let o = bwbp(&["classify", "--model", "/nonexistent/model.json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn refusals_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = bwbp(&["prop1", "--model", &model("bs.json"), "--n", "6", "--cap", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("escaped mass"));
}

#[test]
fn missing_and_invalid_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = bwbp(&["extinction", "--model", &model("bs.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = bwbp(&["decay", "--model", &model("bs.json"), "--n", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("estimate"));
}

#[test]
fn decay_writes_csv_only_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let both = dir.path().join("both");
    let o = bwbp(&["decay", "--model", &model("sa_0.2_0.2.json"), "--n", "12", "--out", both.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("both.data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 14);
    assert!(csv.starts_with("n,e_tstar,ratio\n"));

    let json = dir.path().join("json");
    let o = bwbp(&[
        "decay", "--model", &model("sa_0.2_0.2.json"), "--n", "3", "--format", "json", "--out", json.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("json.report.json").exists());
    assert!(!dir.path().join("json.data.csv").exists());
}

fn report_bytes(dir: &Path, name: &str, args: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    let o = bwbp(&all);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(dir.join(format!("{name}.report.json"))).unwrap()
}

#[test]
fn reports_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let jobs: [(&str, Vec<&str>); 3] = [
        ("crit", vec!["extinction", "--reps", "100000", "--horizon", "200", "--zcap", "1000000"]),
        ("bs", vec!["extinction", "--reps", "2000", "--horizon", "200", "--zcap", "1000000"]),
        ("dich", vec!["dichotomy", "--reps", "2000", "--horizons", "10,50,100"]),
    ];
    let files = ["bs_critical.json", "bs.json", "bs.json"];
    for ((name, args), file) in jobs.iter().zip(files) {
        let path = model(file);
        let mut base = args.clone();
        base.extend(["--model", &path, "--seed", "12345"]);
        let mut one = base.clone();
        one.extend(["--workers", "1"]);
        let mut eight = base.clone();
        eight.extend(["--workers", "8"]);
        let a = report_bytes(dir.path(), &format!("{name}1"), &one);
        let b = report_bytes(dir.path(), &format!("{name}8"), &eight);
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn shipped_models_match_gallery() {
    for (stem, spec) in gallery::all() {
        let text = std::fs::read_to_string(models_dir().join(format!("{stem}.json"))).unwrap();
        let parsed: ModelSpec = parse_model(&text).unwrap();
        assert_eq!(parsed, spec, "{stem}");
    }
    let family = |name: &str| -> ModelSpec {
        parse_model(&std::fs::read_to_string(models_dir().join("families").join(name)).unwrap()).unwrap()
    };
    assert_eq!(family("bs_multinomial.json").sharing(), gallery::bs().sharing());
    assert_eq!(family("ld_leftmost.json").sharing(), gallery::ld().sharing());
    assert!(family("iid_poisson_like.json").validate().all_hold());
}
