use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn prosim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prosim"))
        .args(args)
        .env_remove("PROSIM_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = prosim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn generated_log(dir: &TempDir, cases: &str) -> String {
    let out = p(dir, "real.csv");
    let model = fixture("claims_model.json");
    ok(&["generate", "--model", model.to_str().unwrap(), "--cases", cases, "--seed", "5", "--out", &out]);
    out
}

#[test]
fn discover_simulate_evaluate_pipeline() {
    let dir = TempDir::new().unwrap();
    let real = generated_log(&dir, "120");
    let model = p(&dir, "model.json");
    let cals = p(&dir, "calendars.json");
    ok(&["discover", "--log", &real, "--out", &model, "--multitask", "global", "--dump-calendars", &cals]);

    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cals).unwrap()).unwrap();
    let calendars = doc["calendars"].as_object().unwrap();
    assert_eq!(calendars.len(), 4);
    assert_eq!(calendars["analyst"]["p_abs"].as_array().unwrap().len(), 7);

    let sim = p(&dir, "sim.csv");
    ok(&["simulate", "--model", &model, "--out", &sim, "--arrivals", &real]);
    let text = ok(&["evaluate", "--real", &real, "--sim", &sim, "--format", "json"]);
    let report: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(report["mmr"], 0.0);
    assert_eq!(report["real_cases"], 120);
    assert_eq!(report["sim_cases"], 120);
    assert!(report["red"].as_f64().unwrap() >= 0.0);

    let text = ok(&["evaluate", "--real", &real, "--model", &model, "--repetitions", "3"]);
    let mut lines = text.lines();
    let summary: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(summary["repetitions"], 3);
    assert!(lines.any(|l| l.starts_with("RED (h)")));
}

#[test]
fn evaluating_a_log_against_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let real = generated_log(&dir, "30");
    let text = ok(&["evaluate", "--real", &real, "--sim", &real, "--format", "json"]);
    let report: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(report["red"], 0.0);
    assert_eq!(report["ctd"], 0.0);
    assert_eq!(report["mmr"], 0.0);
}

#[test]
fn seed_from_environment_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let model = fixture("claims_model.json");
    let model = model.to_str().unwrap();
    let run = |name: &str, seed: &str| {
        let out = p(&dir, name);
        let status = Command::new(env!("CARGO_BIN_EXE_prosim"))
            .args(["simulate", "--model", model, "--cases", "40", "--out", &out])
            .env("PROSIM_SEED", seed)
            .status()
            .unwrap();
        assert!(status.success());
        fs::read(out).unwrap()
    };
    let a = run("a.csv", "11");
    let b = run("b.csv", "11");
    let c = run("c.csv", "12");
    assert_eq!(a, b);
    assert_ne!(a, c);

    let flag = p(&dir, "d.csv");
    ok(&["simulate", "--model", model, "--cases", "40", "--seed", "11", "--out", &flag]);
    assert_eq!(fs::read(flag).unwrap(), a);
}

#[test]
fn perturb_shift_and_relabel() {
    let dir = TempDir::new().unwrap();
    let real = generated_log(&dir, "80");
    let shifted = p(&dir, "shifted.csv");
    ok(&["perturb", "--log", &real, "--scenario", "tnt", "--weeks", "2", "--out", &shifted]);
    let a = fs::read_to_string(&real).unwrap();
    let b = fs::read_to_string(&shifted).unwrap();
    assert_eq!(a.lines().count(), b.lines().count());
    assert_ne!(a, b);

    let relabeled = p(&dir, "relabeled.csv");
    ok(&[
        "perturb", "--log", &real, "--scenario", "test", "--weeks", "1", "--resource", "clerk_a",
        "--substitute", "temp", "--out", &relabeled,
    ]);
    let text = fs::read_to_string(&relabeled).unwrap();
    assert!(text.contains(",temp,"));
    assert!(text.contains(",clerk_a,"));
}

#[test]
fn sweep_reports_best_cell() {
    let dir = TempDir::new().unwrap();
    let real = generated_log(&dir, "40");
    let out = p(&dir, "sweep.json");
    let text = ok(&["sweep", "--log", &real, "--split", "0.5", "--out", &out]);
    let best: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert!(best["red"].as_f64().unwrap().is_finite());
    let full: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(full["cells"].as_array().unwrap().len(), 60);
}

#[test]
fn custom_column_names() {
    let dir = TempDir::new().unwrap();
    let log = p(&dir, "custom.csv");
    fs::write(
        &log,
        "Case,Task,Who,Begin,Finish\n\
         1,A,ann,2024-01-01T09:00:00Z,2024-01-01T09:30:00Z\n\
         2,A,ann,2024-01-01T10:00:00Z,2024-01-01T10:20:00Z\n",
    )
    .unwrap();
    let text = ok(&[
        "evaluate", "--real", &log, "--sim", &log, "--format", "json", "--case-column", "Case",
        "--activity-column", "Task", "--resource-column", "Who", "--start-column", "Begin",
        "--end-column", "Finish",
    ]);
    assert!(text.contains("\"real_events\":2"));
}

#[test]
fn exit_codes() {
    assert_eq!(prosim(&["--help"]).status.code(), Some(0));
    assert_eq!(prosim(&["--version"]).status.code(), Some(0));
    assert_eq!(prosim(&["simulate"]).status.code(), Some(1));
    assert_eq!(prosim(&["frobnicate"]).status.code(), Some(1));

    let dir = TempDir::new().unwrap();
    let bad_csv = p(&dir, "bad.csv");
    fs::write(&bad_csv, "case_id,activity,start_time,end_time\n1,A,2024-01-01T09:00:00Z,2024-01-01T09:10:00Z\n")
        .unwrap();
    let out = prosim(&["discover", "--log", &bad_csv, "--out", &p(&dir, "m.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resource"));

    let backwards = p(&dir, "backwards.csv");
    fs::write(
        &backwards,
        "case_id,activity,resource,start_time,end_time\n1,A,ann,2024-01-01T09:00:00Z,2024-01-01T08:00:00Z\n",
    )
    .unwrap();
    assert_eq!(prosim(&["discover", "--log", &backwards, "--out", &p(&dir, "m.json")]).status.code(), Some(2));

    let bad_model = p(&dir, "bad.json");
    fs::write(&bad_model, "{\"schema_version\": 1}").unwrap();
    assert_eq!(
        prosim(&["simulate", "--model", &bad_model, "--out", &p(&dir, "s.csv")]).status.code(),
        Some(2)
    );

    let real = generated_log(&dir, "10");
    let out = prosim(&["discover", "--log", &real, "--out", &p(&dir, "m.json"), "--beta", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let missing = p(&dir, "missing.csv");
    assert_eq!(prosim(&["discover", "--log", &missing, "--out", &p(&dir, "m.json")]).status.code(), Some(3));
}
