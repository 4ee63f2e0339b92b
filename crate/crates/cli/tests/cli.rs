use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mvrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvrisk"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.lines().last().expect("summary line")).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs the analysis into `out` and returns the run directory.
fn run(out: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["run", "--out", s(out)];
    args.extend_from_slice(extra);
    let o = mvrisk(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    PathBuf::from(summary(&o)["output_dir"].as_str().unwrap())
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn cell_mut<'a>(table: &'a mut Value, row: &str, col: usize) -> &'a mut Value {
    let rows = table["rows"].as_array_mut().unwrap();
    let r = rows.iter_mut().find(|r| r["label"] == row).expect("row present");
    &mut r["cells"][col]
}

#[test]
fn synth_is_seed_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        let o = mvrisk(&["synth", "--seed", "5", "--out", s(d.path())]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["fundamentals.csv", "prices.csv", "riskfree.csv", "truth.json"] {
        let x = fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let c = TempDir::new().unwrap();
    assert_eq!(code(&mvrisk(&["synth", "--seed", "6", "--out", s(c.path())])), 0);
    assert_ne!(fs::read(a.path().join("prices.csv")).unwrap(), fs::read(c.path().join("prices.csv")).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&mvrisk(&["synth"])), 2);
    assert_eq!(code(&mvrisk(&["run"])), 2);
    assert_eq!(code(&mvrisk(&["bogus"])), 2);
    assert_eq!(code(&mvrisk(&["run", "--out", "x", "--marin-variant", "ratio"])), 2);
    let o = mvrisk(&["run", "--out", "x", "--data", "d", "--seed", "3"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
    let missing = mvrisk(&["run", "--out", "x", "--data", "/nonexistent/mvrisk"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn files_round_trip_through_ingest_and_run() {
    let data = TempDir::new().unwrap();
    assert_eq!(code(&mvrisk(&["synth", "--seed", "2", "--out", s(data.path())])), 0);
    let o = mvrisk(&["ingest-check", "--data", s(data.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sum = summary(&o);
    assert_eq!(sum["rows_rejected"], 0);
    assert_eq!(sum["balanced"], true);

    // Reading the generated files reproduces the in-memory synthetic run.
    let (from_files, in_memory) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let a = run(from_files.path(), &["--data", s(data.path())]);
    let b = run(in_memory.path(), &["--seed", "2"]);
    let diff = mvrisk(&["report-diff", s(&b), s(&a), "--rel-tol", "1e-9"]);
    assert_eq!(code(&diff), 0, "{}", stderr(&diff));
}

#[test]
fn verify_passes_and_catches_tampering() {
    let data = TempDir::new().unwrap();
    assert_eq!(code(&mvrisk(&["synth", "--seed", "1", "--out", s(data.path())])), 0);
    let out = TempDir::new().unwrap();
    let dir = run(out.path(), &["--data", s(data.path())]);

    let ok = mvrisk(&["verify", "--data", s(data.path()), "--out", s(out.path())]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert_eq!(summary(&ok)["failures"], 0);

    let empty = TempDir::new().unwrap();
    assert_eq!(code(&mvrisk(&["verify", "--data", s(empty.path()), "--out", s(out.path())])), 2);

    let path = dir.join("value_moderated.json");
    let mut table = read_json(&path);
    let c = cell_mut(&mut table, "X", 0);
    *c = Value::from(c.as_f64().unwrap() + 5.0);
    write_json(&path, &table);
    let bad = mvrisk(&["verify", "--data", s(data.path()), "--out", s(&dir)]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("value_moderated / X / Coefficient"), "{}", stderr(&bad));
}

#[test]
fn report_diff_exit_codes() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let da = run(a.path(), &["--seed", "3"]);
    let db = run(b.path(), &["--seed", "3"]);
    assert_eq!(code(&mvrisk(&["report-diff", s(&da), s(&db)])), 0);

    let path = db.join("risk_direct.json");
    let mut table = read_json(&path);
    let c = cell_mut(&mut table, "Marin", 0);
    *c = Value::from(c.as_f64().unwrap() * (1.0 + 1e-6));
    write_json(&path, &table);
    let o = mvrisk(&["report-diff", s(&da), s(&db)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("risk_direct / Marin / Coefficient"), "{}", stderr(&o));
    assert_eq!(code(&mvrisk(&["report-diff", s(&da), s(&db), "--rel-tol", "1e-5"])), 0);

    table["columns"].as_array_mut().unwrap().pop();
    write_json(&path, &table);
    assert_eq!(code(&mvrisk(&["report-diff", s(&da), s(&db)])), 2);
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# robustness run\nseed = 4\nmarin-variant = assets\nbeta_window = 48\n").unwrap();
    let out = dir.path().join("out");
    let run_dir = run(&out, &["--config", s(&cfg), "--marin-variant", "log"]);
    let m = read_json(&run_dir.join("manifest.json"));
    assert_eq!(m["config"]["seed"], "4");
    assert_eq!(m["config"]["marin_variant"], "log");
    assert_eq!(m["config"]["beta_window"], "48");
    assert_eq!(m["config"]["beta_min"], "48");
    assert_eq!(m["run_id"].as_str().unwrap(), &m["config_hash"].as_str().unwrap()[..12]);
    assert!(run_dir.ends_with(m["run_id"].as_str().unwrap()));

    let log_rows: Vec<&Value> =
        m["models"].as_array().unwrap().iter().filter(|x| x["marin_variant"] == "log").collect();
    assert!(!log_rows.is_empty());

    fs::write(&cfg, "seed = 4\ncolour = red\n").unwrap();
    assert_eq!(code(&mvrisk(&["run", "--config", s(&cfg), "--out", s(&out)])), 2);
}

#[test]
fn log_variant_never_gains_rows() {
    let out = TempDir::new().unwrap();
    let dir = run(out.path(), &["--seed", "8"]);
    let m = read_json(&dir.join("manifest.json"));
    let models = m["models"].as_array().unwrap();
    let nobs = |model: &str, variant: &str| {
        models.iter().find(|x| x["model"] == model && x["marin_variant"] == variant).map(|x| x["nobs"].as_u64().unwrap())
    };
    for model in ["value_moderated", "risk_moderated"] {
        let base = nobs(model, "sales").expect("baseline model");
        let log = nobs(model, "log").expect("log robustness model");
        assert!(log <= base, "{model}: {log} > {base}");
    }
}
