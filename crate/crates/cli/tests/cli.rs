use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn robdiv(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robdiv"))
        .args(args)
        .env("ROBDIV_OUT_DIR", out)
        .output()
        .unwrap()
}

fn model(name: &str) -> String {
    models().join(name).to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn strip_timestamp(mut v: Value) -> Value {
    v["meta"].as_object_mut().unwrap().remove("generated_at");
    v
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = robdiv(&["check", "--model", &model("ou_baseline.json")], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    let report = read_json(&dir.path().join("assumptions.json"));
    assert_eq!(report["all_passed"], true);
    assert_eq!(report["meta"]["tool"], "robdiv");
    assert_eq!(report["meta"]["config_hash"].as_str().unwrap().len(), 64);
    assert!(report["meta"]["seed"].is_u64());

    for name in ["ou_low_payout.json", "ou_high_payout.json"] {
        let out = robdiv(&["check", "--model", &model(name)], dir.path());
        assert_eq!(out.status.code(), Some(3), "{name}");
        let report = read_json(&dir.path().join("assumptions.json"));
        assert_eq!(report["report"]["cond_iii"]["passed"], false);
    }

    let missing = robdiv(&["check", "--model", "/nonexistent/model.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn invalid_model_and_config_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad_model = dir.path().join("bad.json");
    fs::write(&bad_model, r#"{"family":"ornstein_uhlenbeck","params":{"kappa":0.5,"m":3,"sigma_bar":0.5},"rho":0.05,"R":1.5,"xi0":1.5}"#).unwrap();
    let out = robdiv(&["check", "--model", bad_model.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let bad_cfg = dir.path().join("run.json");
    fs::write(&bad_cfg, r#"{"model": "x.json", "unknown_field": 1}"#).unwrap();
    let out = robdiv(&["check", "--config", bad_cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn worst_case_simulation_needs_a_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = robdiv(&["simulate", "--model", &model("ou_baseline.json")], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--solution"));
}

#[test]
fn solution_file_feeds_simulation_and_config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("ou_baseline.json");
    assert_eq!(robdiv(&["solve", "--model", &m], dir.path()).status.code(), Some(0));
    let solution = dir.path().join("solution.json");
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(csv.starts_with("# robdiv"));
    assert_eq!(csv.lines().nth(1), Some("x,v,v_prime,v_double_prime,residual"));

    let cfg = dir.path().join("run.json");
    let cfg_text = serde_json::json!({
        "model": m,
        "simulate": { "n_paths": 150, "dt": 0.02, "t_max": 100.0, "x0": [0.5], "solution": solution, "seed": 5 }
    });
    fs::write(&cfg, cfg_text.to_string()).unwrap();
    let out = robdiv(&["simulate", "--config", cfg.to_str().unwrap(), "--paths", "120"], dir.path());
    assert!(matches!(out.status.code(), Some(0) | Some(5)), "{}", String::from_utf8_lossy(&out.stderr));
    let est = read_json(&dir.path().join("mc_estimate.json"));
    assert_eq!(est["simulate"]["n_paths"], 120);
    assert_eq!(est["simulate"]["seed"], 5);
    assert_eq!(est["meta"]["seed"], 5);
    assert_eq!(est["estimates"][0]["estimate"]["n_paths"], 120);
    assert!(est["estimates"][0]["v_star"].is_f64());

    // a solution for another model is refused
    let other = robdiv(
        &["simulate", "--model", &model("ou_low_payout.json"), "--solution", solution.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(other.status.code(), Some(2));
}

#[test]
fn out_dir_flag_beats_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let out = robdiv(
        &["check", "--model", &model("ou_baseline.json"), "--out-dir", flag_dir.path().to_str().unwrap()],
        env_dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(flag_dir.path().join("assumptions.json").exists());
    assert!(!env_dir.path().join("assumptions.json").exists());
}

#[test]
fn json_only_format_skips_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = robdiv(&["solve", "--model", &model("ou_baseline.json"), "--format", "json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("solution.json").exists());
    assert!(!dir.path().join("solution.csv").exists());
}

#[test]
fn repeated_runs_match_modulo_timestamp_and_leave_model_untouched() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let m = model("ou_baseline.json");
    let before = fs::read(&m).unwrap();
    let args = [
        "full", "--model", &m, "--paths", "120", "--dt", "0.02", "--t-max", "100", "--n-space", "50", "--levels", "1",
        "--lattice-t-max", "20", "--n-r", "3",
    ];
    let ra = robdiv(&args, a.path());
    let rb = robdiv(&args, b.path());
    assert_eq!(ra.status.code(), rb.status.code());
    assert_eq!(fs::read(&m).unwrap(), before);
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10);
    for name in names {
        let (pa, pb) = (a.path().join(&name), b.path().join(&name));
        if pa.extension().is_some_and(|e| e == "json") {
            assert_eq!(strip_timestamp(read_json(&pa)), strip_timestamp(read_json(&pb)), "{name:?}");
        } else {
            let skip_first = |p: &Path| fs::read_to_string(p).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
            assert_eq!(skip_first(&pa), skip_first(&pb), "{name:?}");
        }
    }
}
