use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use datavalue::FrequencyValueFunction;
use datavalue_cli::io::{parse_dataset, parse_value_function, read_report, report_json, DataMode};
use tempfile::TempDir;

const MAJORITY: &str = r#"{"family": "majority", "correct": 100, "wrong": -100, "none": 0}"#;

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn datavalue(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_datavalue")).args(args).output().unwrap()
}

fn arg(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Three examples in one bin, two of them agreeing with the query label.
fn frequency_fixture() -> (TempDir, PathBuf, PathBuf, PathBuf) {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "data.csv", "id,bin,label,coalition\n1,x,yes,A\n2,x,yes,A\n3,x,no,B\n4,y,no,B\n");
    let queries = write(&dir, "queries.csv", "bin,label\nx,yes\n");
    let value = write(&dir, "value.json", MAJORITY);
    (dir, data, queries, value)
}

#[test]
fn parses_three_row_dataset() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "d.csv", "id,bin,label\n1, x ,yes\n2,x,no\n3,z,yes\n");
    let d = parse_dataset(&path, DataMode::Frequency).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d.examples()[0].bin.as_deref(), Some("x"));
    assert!(d.examples().iter().all(|e| e.coalition.is_none()));
}

#[test]
fn rejects_third_label() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "d.csv", "id,bin,label\n1,x,a\n2,x,b\n3,x,c\n");
    let err = parse_dataset(&path, DataMode::Frequency).unwrap_err();
    assert!(err.to_string().contains("label"), "{err}");
}

#[test]
fn rejects_duplicate_ids() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "d.csv", "id,bin,label\n1,x,a\n1,x,b\n");
    assert!(parse_dataset(&path, DataMode::Frequency).is_err());
}

#[test]
fn ragged_knn_rows_are_dimension_errors() {
    let dir = TempDir::new().unwrap();
    for body in ["1,a,0.5\n", "1,a,0.5,\n", "1,a,0.5,0.5,0.5\n"] {
        let path = write(&dir, "d.csv", &format!("id,label,f0,f1\n0,b,0,0\n{body}"));
        let err = parse_dataset(&path, DataMode::Knn).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{body:?}: {err}");
    }
}

#[test]
fn knn_feature_columns_must_be_contiguous() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "d.csv", "id,label,f0,f2\n0,b,0,0\n");
    assert!(parse_dataset(&path, DataMode::Knn).is_err());
}

#[test]
fn value_function_documents() {
    let dir = TempDir::new().unwrap();
    let majority = write(&dir, "m.json", MAJORITY);
    assert_eq!(parse_value_function(&majority).unwrap(), FrequencyValueFunction::majority(100.0, -100.0, 0.0).unwrap());

    let table = write(
        &dir,
        "t.json",
        r#"{"family": "table", "entries": [{"a": 0, "b": 0, "value": 1.5}], "default": -2}"#,
    );
    let vf = parse_value_function(&table).unwrap();
    assert_eq!(vf.value(0, 0).unwrap(), 1.5);
    assert_eq!(vf.value(3, 1).unwrap(), -2.0);

    let empty = write(&dir, "e.json", "  \n");
    assert!(parse_value_function(&empty).is_err());

    let duplicate = write(
        &dir,
        "dup.json",
        r#"{"family": "table", "entries": [{"a": 1, "b": 0, "value": 1}, {"a": 1, "b": 0, "value": 2}]}"#,
    );
    assert!(parse_value_function(&duplicate).unwrap_err().to_string().contains("duplicate"));

    let unknown = write(&dir, "u.json", r#"{"family": "median"}"#);
    assert!(parse_value_function(&unknown).is_err());
}

#[test]
fn shapley_report_is_efficient() {
    let (dir, data, queries, value) = frequency_fixture();
    let out = dir.path().join("report.json");
    let status = datavalue(&[
        "shapley-freq", "--data", arg(&data), "--queries", arg(&queries), "--value", arg(&value),
        "--numeric", "exact", "--out", arg(&out),
    ]);
    assert!(status.status.success(), "{}", stderr(&status));
    let report = read_report(&out).unwrap();
    // Grand coalition: 2 agree, 1 disagrees, majority pays 100; empty set pays 0.
    let total: f64 = report.values().iter().sum();
    assert!((total - 100.0).abs() < 1e-9, "{total}");
    assert_eq!(report.examples[3].exact.as_deref(), Some("0"));
    assert_eq!(report.coalitions.len(), 2);
}

#[test]
fn owen_report_matches_oracle() {
    let (dir, data, queries, value) = frequency_fixture();
    let fast = dir.path().join("fast.json");
    let slow = dir.path().join("slow.json");
    let common = ["--data", arg(&data), "--queries", arg(&queries), "--value", arg(&value)];
    let a = datavalue(&[&["owen-freq", "--numeric", "exact", "--out", arg(&fast)], &common[..]].concat());
    let b = datavalue(&[&["oracle", "--method", "exact-owen", "--model", "freq", "--out", arg(&slow)], &common[..]].concat());
    assert!(a.status.success() && b.status.success(), "{}{}", stderr(&a), stderr(&b));
    let (fast, slow) = (read_report(&fast).unwrap(), read_report(&slow).unwrap());
    assert_eq!(fast.exact_values(), slow.exact_values());
    assert_eq!(fast.coalitions, slow.coalitions);
}

#[test]
fn owen_without_coalitions_fails() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "id,bin,label\n1,x,yes\n");
    let queries = write(&dir, "q.csv", "bin,label\nx,yes\n");
    let value = write(&dir, "v.json", MAJORITY);
    let out = datavalue(&["owen-freq", "--data", arg(&data), "--queries", arg(&queries), "--value", arg(&value)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("coalitions"));
}

#[test]
fn coalition_file_overrides_column() {
    let (dir, data, queries, value) = frequency_fixture();
    let groups = write(&dir, "groups.csv", "id,coalition\n1,P\n2,Q\n3,Q\n4,P\n");
    let out = dir.path().join("r.json");
    let status = datavalue(&[
        "owen-freq", "--data", arg(&data), "--queries", arg(&queries), "--value", arg(&value),
        "--coalitions", arg(&groups), "--out", arg(&out),
    ]);
    assert!(status.status.success(), "{}", stderr(&status));
    let report = read_report(&out).unwrap();
    let ids: Vec<_> = report.coalitions.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids, ["P", "Q"]);
}

#[test]
fn query_value_override_is_relative_to_query_file() {
    let (dir, data, _, value) = frequency_fixture();
    std::fs::create_dir(dir.path().join("sub")).unwrap();
    write(&dir, "sub/double.json", r#"{"family": "majority", "correct": 200, "wrong": -200, "none": 0}"#);
    let queries = write(&dir, "sub/q.csv", "bin,label,value\nx,yes,double.json\nx,yes,\n");
    let out = dir.path().join("r.json");
    let status = datavalue(&[
        "shapley-freq", "--data", arg(&data), "--queries", arg(&queries), "--value", arg(&value),
        "--out", arg(&out),
    ]);
    assert!(status.status.success(), "{}", stderr(&status));
    let total: f64 = read_report(&out).unwrap().values().iter().sum();
    assert!((total - 300.0).abs() < 1e-9, "{total}");
}

#[test]
fn oracle_guard_exits_two() {
    let dir = TempDir::new().unwrap();
    let rows: String = (1..=11).map(|i| format!("{i},x,{}\n", if i % 2 == 0 { "yes" } else { "no" })).collect();
    let data = write(&dir, "d.csv", &format!("id,bin,label\n{rows}"));
    let queries = write(&dir, "q.csv", "bin,label\nx,yes\n");
    let value = write(&dir, "v.json", MAJORITY);
    let base = ["oracle", "--method", "exact-shapley", "--model", "freq", "--data", arg(&data), "--queries", arg(&queries), "--value", arg(&value)];

    let refused = datavalue(&base);
    assert_eq!(refused.status.code(), Some(2), "{}", stderr(&refused));
    assert!(stderr(&refused).contains("refused"));

    let raised = datavalue(&[&base[..], &["--max-n", "11"]].concat());
    assert_eq!(raised.status.code(), Some(2));

    let allowed = datavalue(&[&base[..], &["--max-n", "11", "--yes-i-know"]].concat());
    assert!(allowed.status.success(), "{}", stderr(&allowed));
}

#[test]
fn even_k_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "id,label,f0\n1,yes,0\n2,no,1\n");
    let queries = write(&dir, "q.csv", "label,f0\nyes,0.2\n");
    let out = datavalue(&["shapley-knn", "--data", arg(&data), "--queries", arg(&queries), "--k", "4", "--values", "1,-1,0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("k must be odd"), "{}", stderr(&out));
}

#[test]
fn unparsable_arguments_exit_one() {
    assert_eq!(datavalue(&["shapley-knn", "--bogus"]).status.code(), Some(1));
    assert_eq!(datavalue(&["--help"]).status.code(), Some(0));
}

fn knn_fixture() -> (TempDir, PathBuf, PathBuf) {
    let dir = TempDir::new().unwrap();
    let data = write(
        &dir,
        "d.csv",
        "id,label,coalition,f0,f1\n1,yes,A,0,0\n2,no,A,1,0.25\n3,yes,B,0.3,0.9\n4,no,C,0.7,0.7\n5,yes,C,0.1,0.4\n",
    );
    let queries = write(&dir, "q.csv", "label,f0,f1\nyes,0.2,0.1\nno,0.8,0.6\n");
    (dir, data, queries)
}

#[test]
fn report_round_trip_is_bit_identical() {
    let (dir, data, queries) = knn_fixture();
    let out = dir.path().join("r.json");
    let status = datavalue(&[
        "owen-knn", "--data", arg(&data), "--queries", arg(&queries), "--k", "3", "--values", "1,-0.3,0.1",
        "--per-query", "--out", arg(&out),
    ]);
    assert!(status.status.success(), "{}", stderr(&status));
    let text = std::fs::read_to_string(&out).unwrap();
    let report = read_report(&out).unwrap();
    assert_eq!(report_json(&report).unwrap(), text);
    for (a, b) in report.values().iter().zip(serde_json::from_str::<serde_json::Value>(&text).unwrap()["examples"].as_array().unwrap()) {
        assert_eq!(a.to_bits(), b["value"].as_f64().unwrap().to_bits());
    }
}

#[test]
fn output_is_deterministic_apart_from_wall_time() {
    let (_dir, data, queries) = knn_fixture();
    let run = || {
        let out = datavalue(&[
            "shapley-knn", "--data", arg(&data), "--queries", arg(&queries), "--k", "3", "--values", "1,-1,0",
            "--numeric", "exact",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_time_ms"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(run(), run());
}

#[test]
fn csv_export_lists_every_example() {
    let (dir, data, queries) = knn_fixture();
    let csv = dir.path().join("values.csv");
    let out = datavalue(&[
        "oracle", "--method", "mc-shapley", "--model", "knn", "--data", arg(&data), "--queries", arg(&queries),
        "--k", "1", "--values", "1,-1,0", "--samples", "200", "--seed", "7", "--csv", arg(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("id,value,exact,standard_error,coalition"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.len() == 5 && !r[3].is_empty()));
    assert_eq!(rows[0][4], "A");
}
