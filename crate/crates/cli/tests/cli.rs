use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn psbench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psbench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn psbench")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, estimators: &str, n: usize) -> PathBuf {
    let path = dir.join("experiment.json");
    let text = format!(
        r#"{{
  "dataset": {{"generate": {{
    "generator": {{"n_samples": {n}}},
    "scenario": {{"kind": "occurrence_distance", "code_a": 7, "code_b": 23}}
  }}}},
  "estimators": {estimators},
  "train": {{"max_epochs": 3, "dims": {{"embed": 8, "hidden": 8, "layers": 1, "heads": 2}}}},
  "k": 3,
  "seed": 17,
  "out": "out"
}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn generate_creates_missing_output_dir_and_prints_stats() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"["oracle"]"#, 500);
    let out = psbench(&["generate", "--config", "experiment.json", "--out", "a/b/c"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(tmp.path().join("a/b/c/dataset.jsonl").exists());
    assert!(tmp.path().join("a/b/c/dataset.header.json").exists());
    let text = stdout(&out);
    assert!(text.contains("prev. treated"), "{text}");
    assert!(text.contains("Synthetic-OD"));
    assert!(text.contains(" 500 "));
}

#[test]
fn generate_then_run_is_byte_identical() {
    let estimators = r#"["oracle", "constant", "lr", "lstm", "bert-code"]"#;
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let tmp = tempfile::tempdir().unwrap();
        write_config(tmp.path(), estimators, 240);
        let g = psbench(&["generate", "--config", "experiment.json"], tmp.path());
        assert_eq!(code(&g), 0, "{}", stderr(&g));
        let r = psbench(&["run", "--config", "experiment.json", "--threads", "1"], tmp.path());
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        let out = tmp.path().join("out");
        let mut files = vec![out.join("dataset.jsonl"), out.join("dataset.header.json")];
        for name in ["oracle", "constant", "lr", "lstm", "bert-code"] {
            files.push(out.join("reports").join(format!("{name}.json")));
        }
        files.push(out.join("comparison.json"));
        files.push(out.join("comparison.txt"));
        snapshots.push(files.iter().map(|f| read(f)).collect::<Vec<_>>());
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn seed_flag_changes_the_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"["oracle"]"#, 200);
    for (seed, dir) in [("1", "s1"), ("2", "s2")] {
        let o = psbench(&["generate", "--config", "experiment.json", "--seed", seed, "--out", dir], tmp.path());
        assert_eq!(code(&o), 0);
    }
    assert_ne!(
        read(&tmp.path().join("s1/dataset.jsonl")),
        read(&tmp.path().join("s2/dataset.jsonl"))
    );
}

#[test]
fn oracle_run_has_zero_ps_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"["oracle"]"#, 300);
    let o = psbench(&["run", "--config", "experiment.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value =
        serde_json::from_slice(&read(&tmp.path().join("out/reports/oracle.json"))).unwrap();
    assert_eq!(report["aggregate"]["ps_mae"]["mean"].as_f64(), Some(0.0));
    assert_eq!(report["complete"], Value::Bool(true));
    assert_eq!(report["provenance"]["single_threaded"], Value::Bool(true));
}

#[test]
fn run_table_has_one_row_per_estimator_and_five_metric_columns() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"["lr", "lstm"]"#, 240);
    let o = psbench(&["run", "--config", "experiment.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(lines.len(), 4, "{text}");
    let header: Vec<&str> = lines[0].split_whitespace().collect();
    assert_eq!(header, ["Model", "Scenario", "PS", "PS_W", "ATE", "ATE_T", "ATE_C"]);
    assert!(lines[2..].iter().any(|l| l.starts_with("lr ")));
    assert!(lines[2..].iter().any(|l| l.starts_with("lstm ")));
}

#[test]
fn threaded_run_is_flagged_and_matches_sequential_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"["lr"]"#, 240);
    let a = psbench(&["run", "--config", "experiment.json", "--out", "seq"], tmp.path());
    let b = psbench(&["run", "--config", "experiment.json", "--out", "par", "--threads", "3"], tmp.path());
    assert_eq!((code(&a), code(&b)), (0, 0));
    let load = |d: &str| -> Value {
        serde_json::from_slice(&read(&tmp.path().join(d).join("reports/lr.json"))).unwrap()
    };
    let (s, p) = (load("seq"), load("par"));
    assert_eq!(s["provenance"]["single_threaded"], Value::Bool(true));
    assert_eq!(p["provenance"]["single_threaded"], Value::Bool(false));
    assert_eq!(s["folds"], p["folds"]);
}

#[test]
fn unknown_estimator_exits_2_and_lists_registry() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"["lr", "random-forest"]"#, 100);
    let o = psbench(&["run", "--config", "experiment.json"], tmp.path());
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    for name in ["random-forest", "lr-hdps", "mlp-hdps", "bert-code", "bert-record", "oracle", "constant"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn invalid_scenario_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("bad.json"),
        r#"{"dataset": {"generate": {"scenario": {"kind": "occurrence_distance", "code_a": 7}}}}"#,
    )
    .unwrap();
    let o = psbench(&["generate", "--config", "bad.json"], tmp.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn malformed_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.json"), "{ not json").unwrap();
    let o = psbench(&["run", "--config", "bad.json"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_files_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = psbench(&["generate", "--config", "nowhere.json"], tmp.path());
    assert_eq!(code(&o), 3);
    std::fs::write(
        tmp.path().join("c.json"),
        r#"{"dataset": {"path": "missing.jsonl"}, "estimators": ["oracle"]}"#,
    )
    .unwrap();
    let o = psbench(&["run", "--config", "c.json"], tmp.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn usage_error_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&psbench(&["run"], tmp.path())), 2);
    assert_eq!(code(&psbench(&["frobnicate"], tmp.path())), 2);
}

#[test]
fn run_reads_a_generated_dataset_by_path() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"["oracle"]"#, 200);
    assert_eq!(code(&psbench(&["generate", "--config", "experiment.json"], tmp.path())), 0);
    std::fs::write(
        tmp.path().join("from_file.json"),
        r#"{"dataset": {"path": "out/dataset.jsonl"}, "estimators": ["oracle", "constant"], "k": 4, "out": "second"}"#,
    )
    .unwrap();
    let o = psbench(&["run", "--config", "from_file.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value =
        serde_json::from_slice(&read(&tmp.path().join("second/reports/constant.json"))).unwrap();
    assert_eq!(r["k"].as_u64(), Some(4));
    assert_eq!(r["provenance"]["dataset_size"].as_u64(), Some(200));
}

#[test]
fn corpus_source_injects_confounding() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("patient_id,date,code\n");
    for p in 0..60 {
        csv += &format!("p{p},2020-01-01,flu\n");
        csv += &format!("p{p},2020-02-01,cough\n");
        if p % 3 != 0 {
            csv += &format!("p{p},2020-03-01,asthma\n");
        }
        csv += &format!("p{p},2020-04-01,cough\n");
    }
    std::fs::write(tmp.path().join("claims.csv"), csv).unwrap();
    std::fs::write(
        tmp.path().join("c.json"),
        r#"{"dataset": {"corpus": {"path": "claims.csv", "code_a": "flu", "code_b": "asthma"}},
            "estimators": ["oracle"], "k": 2}"#,
    )
    .unwrap();
    let o = psbench(&["generate", "--config", "c.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("Semi-synthetic"));
    assert!(stdout(&o).contains(" 40 "), "{}", stdout(&o));

    std::fs::write(
        tmp.path().join("c2.json"),
        r#"{"dataset": {"corpus": {"path": "claims.csv", "code_a": "flu", "code_b": "measles"}}}"#,
    )
    .unwrap();
    assert_eq!(code(&psbench(&["generate", "--config", "c2.json"], tmp.path())), 2);
}

fn make_reports(tmp: &Path) -> PathBuf {
    write_config(tmp, r#"["oracle", "constant", "lr", "bert-code"]"#, 240);
    let o = psbench(&["run", "--config", "experiment.json"], tmp);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    tmp.join("out/reports")
}

#[test]
fn report_merges_sorted_by_ps_mae_with_absent_attention() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = make_reports(tmp.path());
    let o = psbench(&["report", dir.to_str().unwrap(), "--out", "merged"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(2).filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("oracle"));
    assert!(text.lines().next().unwrap().contains("Conf"));
    let lr = rows.iter().find(|l| l.starts_with("lr ")).unwrap();
    assert!(lr.trim_end().ends_with('—'), "{lr}");

    let merged: Vec<Value> =
        serde_json::from_slice(&read(&tmp.path().join("merged/comparison.json"))).unwrap();
    let maes: Vec<f64> = merged
        .iter()
        .map(|r| r["aggregate"]["ps_mae"]["mean"].as_f64().unwrap())
        .collect();
    assert!(maes.windows(2).all(|w| w[0] <= w[1]), "{maes:?}");
    assert_eq!(
        std::fs::read_to_string(tmp.path().join("merged/comparison.txt")).unwrap().trim_end(),
        text.trim_end()
    );
}

#[test]
fn single_report_round_trips_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = make_reports(tmp.path());
    let file = dir.join("lr.json");
    let o = psbench(&["report", file.to_str().unwrap(), "--json"], tmp.path());
    assert_eq!(code(&o), 0);
    let out: Vec<Value> = serde_json::from_str(&stdout(&o)).unwrap();
    let original: Value = serde_json::from_slice(&read(&file)).unwrap();
    assert_eq!(out, vec![original]);
}

#[test]
fn incomplete_reports_are_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = make_reports(tmp.path());
    let mut r: Value = serde_json::from_slice(&read(&dir.join("lr.json"))).unwrap();
    r["folds"].as_array_mut().unwrap().truncate(1);
    r["complete"] = Value::Bool(false);
    std::fs::write(tmp.path().join("partial.json"), serde_json::to_vec(&r).unwrap()).unwrap();
    let o = psbench(&["report", "partial.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("(incomplete)"));
}

#[test]
fn report_schema_mismatch_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = make_reports(tmp.path());
    let mut r: Value = serde_json::from_slice(&read(&dir.join("lr.json"))).unwrap();
    r["schema_version"] = Value::from(99);
    std::fs::write(tmp.path().join("future.json"), serde_json::to_vec(&r).unwrap()).unwrap();
    let o = psbench(&["report", "future.json"], tmp.path());
    assert_eq!(code(&o), 2);
    assert_eq!(code(&psbench(&["report", "absent.json"], tmp.path())), 3);
}
