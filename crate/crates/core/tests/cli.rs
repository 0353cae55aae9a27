use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

const BIN: &str = env!("CARGO_BIN_EXE_forest-density");

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn golden(name: &str) -> PathBuf {
    manifest_dir().join("tests/golden").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_cmd(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn embedded_config(csv: &str) -> String {
    csv.lines()
        .find_map(|l| l.strip_prefix("# config: "))
        .expect("config comment")
        .to_string()
}

#[test]
fn missing_input_file_exits_one_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"input": "no_such_file.csv", "query": [0.5]}"#).unwrap();
    let o = run_cmd("fit", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_such_file.csv"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_one() {
    let o = run(&["mc", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/definitely/not/here.json"));
}

#[test]
fn out_of_range_outcome_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "y,x1\n0.2,0.1\n0.4,0.5\n1.5,0.7\n0.3,0.9\n").unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"input": "d.csv", "query": [0.5]}"#).unwrap();
    let o = run_cmd("fit", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"design": "D1", "n": 200, "reps": 2, "n_trees": 10}"#).unwrap();
    let o = run_cmd("mc", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_trees"), "{}", stderr(&o));
}

#[test]
fn estimation_failure_exits_two() {
    // Every outcome at the upper boundary: the moments cannot be matched.
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("y,x1\n");
    for i in 0..200 {
        csv.push_str(&format!("1,{}\n", i as f64 / 199.0));
    }
    fs::write(dir.path().join("d.csv"), csv).unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"input": "d.csv", "query": [0.5], "standard_errors": false, "forest": {"n_trees": 20}}"#,
    )
    .unwrap();
    let o = run_cmd("fit", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("estimation"), "{}", stderr(&o));
}

#[test]
fn fit_matches_golden_and_is_repeatable() {
    let expected = fs::read(golden("fit.csv")).unwrap();
    for workers in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run_cmd("fit", &golden("fit_config.json"), dir.path(), &["--workers", workers]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(fs::read(dir.path().join("fit.csv")).unwrap(), expected);
        let prov: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("provenance.json")).unwrap()).unwrap();
        assert_eq!(prov["seed"], 11);
        assert_eq!(prov["config"]["forest"]["n_trees"], 200);
    }
}

#[test]
fn fit_reruns_from_embedded_config() {
    let expected = fs::read_to_string(golden("fit.csv")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("cfg")).unwrap();
    fs::create_dir_all(dir.path().join("data")).unwrap();
    fs::copy(
        manifest_dir().join("tests/data/sample_d1.csv"),
        dir.path().join("data/sample_d1.csv"),
    )
    .unwrap();
    let cfg = dir.path().join("cfg/config.json");
    fs::write(&cfg, embedded_config(&expected)).unwrap();
    let o = run_cmd("fit", &cfg, &dir.path().join("out"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("out/fit.csv")).unwrap(), expected);
}

#[test]
fn seed_flag_overrides_config() {
    let a = tempfile::tempdir().unwrap();
    let o = run_cmd("fit", &golden("fit_config.json"), a.path(), &["--seed", "12"]);
    assert!(o.status.success());
    let text = fs::read_to_string(a.path().join("fit.csv")).unwrap();
    assert!(embedded_config(&text).contains(r#""seed":12"#));
    assert_ne!(text.as_bytes(), fs::read(golden("fit.csv")).unwrap().as_slice());
}

#[test]
fn mc_matches_golden_and_reruns_from_embedded_config() {
    let expected = fs::read_to_string(golden("mc.csv")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let o = run_cmd("mc", &golden("mc_config.json"), a.path(), &["--workers", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(a.path().join("mc.csv")).unwrap(), expected);

    let b = tempfile::tempdir().unwrap();
    let cfg = b.path().join("config.json");
    fs::write(&cfg, embedded_config(&expected)).unwrap();
    let o = run_cmd("mc", &cfg, b.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(b.path().join("mc.csv")).unwrap(), expected);

    // Same report apart from wall-clock time.
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(p.join("summary.json")).unwrap()).unwrap();
        v["report"]["runtime_secs"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn mc_report_has_one_row_per_design_point_plus_mise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"design": "D2", "n": 150, "reps": 2, "design_points": [0.2, 0.5, 0.8],
            "forest": {"n_trees": 40, "subsample_size": 30, "order": 3}}"#,
    )
    .unwrap();
    let o = run_cmd("mc", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("mc.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "y,truth,bias,sd,avg_se,coverage");
    assert_eq!(rows.len(), 1 + 3 + 1);
    assert_eq!(rows[1].split(',').next(), Some("0.2"));
    assert!(rows[4].starts_with("MISE,,"));
}

#[test]
fn mc_smoke_run_finishes_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"design": "D1", "n": 200, "reps": 2, "forest": {"subsample_size": 50}}"#,
    )
    .unwrap();
    let start = Instant::now();
    let o = run_cmd("mc", &cfg, dir.path(), &[]);
    let secs = start.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(secs < 300.0, "took {secs} s");
}
