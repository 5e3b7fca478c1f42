use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(format!("{name}.jsonl"))
}

fn stance(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stance"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_mock(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

struct MockRun<'a> {
    dataset: &'a str,
    config: &'a str,
    scheme: &'a str,
    model: &'a str,
    mock: &'a str,
    out: &'a Path,
    cache: Option<&'a Path>,
    parallel: &'a str,
}

impl MockRun<'_> {
    fn run(&self) -> Output {
        let dataset = fixture(self.dataset);
        let mut args = vec![
            "run",
            "--dataset",
            dataset.to_str().unwrap(),
            "--dataset-config",
            self.config,
            "--scheme",
            self.scheme,
            "--model",
            self.model,
            "--mock",
            self.mock,
            "--out-dir",
            self.out.to_str().unwrap(),
            "--parallel",
            self.parallel,
            "--seed",
            "17",
        ];
        if let Some(c) = self.cache {
            args.extend(["--cache-dir", c.to_str().unwrap()]);
        }
        stance(&args)
    }
}

fn default_run<'a>(mock: &'a str, out: &'a Path) -> MockRun<'a> {
    MockRun {
        dataset: "election2016",
        config: "election2016",
        scheme: "coda",
        model: "m1",
        mock,
        out,
        cache: None,
        parallel: "1",
    }
}

#[test]
fn run_writes_one_row_per_record() {
    let dir = tempfile::tempdir().unwrap();
    let mock = write_mock(dir.path(), "mock.json", r#"{"rule":"echo_gold"}"#);
    let out = dir.path().join("out");
    let o = default_run(&mock, &out).run();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = jsonl(&out.join("results.jsonl"));
    assert_eq!(rows.len(), 10);
    let hash = rows[0]["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    for r in &rows {
        assert_eq!(r["gold"], r["pred"]);
        assert_eq!(r["validity"], "good");
        assert_eq!(r["config_hash"], hash.as_str());
        assert_eq!(r["seed"], 17);
    }
    let transcripts = jsonl(&out.join("transcripts.jsonl"));
    assert_eq!(transcripts.len(), 10);
    assert_eq!(transcripts[0]["stages"].as_array().unwrap().len(), 6);
    assert_eq!(transcripts[0]["status"], "complete");
    assert_eq!(transcripts[0]["config_hash"], hash.as_str());
    let run_info: Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_info["config_hash"], hash.as_str());
    assert_eq!(run_info["seed"], 17);
}

#[test]
fn missing_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mock = write_mock(dir.path(), "mock.json", r#"{"rule":"echo_gold"}"#);
    let out = dir.path().join("out");
    let o = stance(&[
        "run",
        "--dataset",
        "/nonexistent/data.jsonl",
        "--dataset-config",
        "srq",
        "--scheme",
        "task-only",
        "--model",
        "m",
        "--mock",
        &mock,
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_config_and_bad_mock_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_mock(dir.path(), "bad.json", r#"{"nope":1}"#);
    let good = write_mock(dir.path(), "good.json", r#"{"always":"for"}"#);
    let out = dir.path().join("out");
    let mut run = default_run(&bad, &out);
    assert_eq!(run.run().status.code(), Some(2));
    run.mock = &good;
    run.config = "no-such-dataset";
    assert_eq!(run.run().status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn warm_cache_and_parallelism_reproduce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mock = write_mock(dir.path(), "mock.json", r#"{"rule":"echo_gold"}"#);
    let cache = dir.path().join("cache");
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    let mut run = default_run(&mock, &a);
    run.cache = Some(&cache);
    let first = run.run();
    assert!(first.status.success());
    assert!(String::from_utf8_lossy(&first.stderr).contains("60 requests sent"));
    run.out = &b;
    run.parallel = "8";
    let second = run.run();
    assert!(String::from_utf8_lossy(&second.stderr).contains(" 0 requests sent"));
    let mut uncached = default_run(&mock, &c);
    uncached.parallel = "8";
    assert!(uncached.run().status.success());
    for file in ["results.jsonl", "transcripts.jsonl", "run.json"] {
        let x = fs::read(a.join(file)).unwrap();
        assert_eq!(x, fs::read(b.join(file)).unwrap(), "{file}");
        assert_eq!(x, fs::read(c.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn total_backend_outage_exits_3_with_outputs() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let endpoint = format!("http://127.0.0.1:{port}");
    let o = stance(&[
        "run",
        "--dataset",
        fixture("srq").to_str().unwrap(),
        "--dataset-config",
        "srq",
        "--scheme",
        "task-only",
        "--model",
        "m",
        "--endpoint",
        &endpoint,
        "--out-dir",
        out.to_str().unwrap(),
        "--max-retries",
        "1",
        "--backoff-ms",
        "1",
        "--parallel",
        "4",
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rows = jsonl(&out.join("results.jsonl"));
    assert_eq!(rows.len(), 10);
    assert!(rows
        .iter()
        .all(|r| r["aborted"] == true && r["validity"] == "bad" && r["pred"] == "neutral"));
}

#[test]
fn eval_builds_reports_and_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let echo = write_mock(dir.path(), "echo.json", r#"{"rule":"echo_gold"}"#);
    let junk = write_mock(dir.path(), "junk.json", r#"{"always":"unconfirmed"}"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut run = default_run(&echo, &a);
    run.scheme = "task-only";
    assert!(run.run().status.success());
    run.mock = &junk;
    run.model = "m2";
    run.out = &b;
    assert!(run.run().status.success());

    let report_dir = dir.path().join("report");
    let o = stance(&[
        "eval",
        a.join("results.jsonl").to_str().unwrap(),
        b.join("results.jsonl").to_str().unwrap(),
        "--out-dir",
        report_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(report_dir.join("matrix_election2016.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("model,task-only\nm1,1.00\nm2,"));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    let m2 = reports.iter().find(|r| r["model"] == "m2").unwrap();
    assert!(m2.get("macro_f1_good").is_none());
    assert_eq!(m2["valid_proportion"], 0.0);
    assert_eq!(report["provenance"].as_array().unwrap().len(), 2);
}

#[test]
fn eval_of_nothing_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("results.jsonl");
    fs::write(&empty, "").unwrap();
    let o = stance(&[
        "eval",
        empty.to_str().unwrap(),
        "--out-dir",
        dir.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_separable_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.jsonl");
    let mut body = String::new();
    for i in 0..60 {
        let good = i % 4 != 0;
        let row = serde_json::json!({
            "record_id": format!("r{i:02}"),
            "dataset": "d",
            "model": if i % 2 == 0 { "a" } else { "b" },
            "scheme": "task-only",
            "gold": "agree",
            "pred": if good { "agree" } else { "neutral" },
            "validity": if good { "good" } else { "bad" },
            "word_count": 1 + i % 5,
            "non_stance_word_count": i % 3,
            "config_hash": "h",
            "seed": 1,
        });
        body.push_str(&row.to_string());
        body.push('\n');
    }
    fs::write(&path, body).unwrap();
    let out = dir.path().join("analysis.json");
    let o = stance(&[
        "analyze",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(a["tree"]["test_acc"], 1.0);
    assert_eq!(a["tree"]["split_seed"], 3);
    assert!(a["correlation"]["r"].is_number());
    assert_eq!(a["length_stats"].as_array().unwrap().len(), 2);
    assert_eq!(a["provenance"][0]["config_hash"], "h");
}

#[test]
fn export_prompts_for_finetuning() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("prompts.jsonl");
    let o = stance(&[
        "export-prompts",
        "--dataset",
        fixture("semeval2016").to_str().unwrap(),
        "--dataset-config",
        "SemEval2016",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = jsonl(&out);
    assert_eq!(lines.len(), 12);
    let first = &lines[0];
    assert_eq!(first["record_id"], "semeval2016-01");
    assert_eq!(first["dataset"], "SemEval2016");
    assert_eq!(first["raw_label"], "FAVOR");
    assert_eq!(first["canonical"], "agree");
    assert_eq!(first["stance_word"], "for");
    let golden = fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/context-analyze.txt"),
    )
    .unwrap();
    let expected = golden.replace("{event}", "Atheism").replace(
        "{statement}",
        "Post number 1 about Atheism, written for the semeval2016 fixture.",
    );
    assert_eq!(first["prompt"], expected.as_str());
}
