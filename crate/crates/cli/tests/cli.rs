//! End-to-end runs of the `amlkit` binary on the checked-in fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn amlkit(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_amlkit"));
    cmd.args(args);
    cmd.env_remove("AMLKIT_DATA_DIR");
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("binary should spawn")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    let text = String::from_utf8_lossy(&output.stdout);
    let line = text.lines().last().expect("some output");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("bad JSON {line:?}: {e}"))
}

#[test]
fn ingest_builds_a_two_step_bundle_and_caches_it() {
    let out = tempfile::tempdir().unwrap();
    let data = fixture_dir("elliptic-mini");
    let run = || {
        amlkit(
            &[
                "ingest",
                "--data-dir",
                data.to_str().unwrap(),
                "--out",
                out.path().to_str().unwrap(),
            ],
            &[],
        )
    };
    let first = stdout_json(&run());
    assert_eq!(first["n_graphs"], 2);
    assert_eq!(first["cache_hit"], false);

    let second = stdout_json(&run());
    assert_eq!(second["cache_hit"], true);
    assert_eq!(second["sha256"], first["sha256"]);
}

#[test]
fn data_dir_comes_from_the_environment_when_flags_are_absent() {
    let out = tempfile::tempdir().unwrap();
    let data = fixture_dir("elliptic-mini");
    let output = amlkit(
        &["ingest", "--out", out.path().to_str().unwrap()],
        &[("AMLKIT_DATA_DIR", data.as_path())],
    );
    assert_eq!(stdout_json(&output)["n_graphs"], 2);
}

#[test]
fn train_rf_on_the_separable_fixture_is_perfect_and_deterministic() {
    let data = fixture_dir("elliptic-sep");
    let run = |dir: &Path| {
        let output = amlkit(
            &[
                "train",
                "--model",
                "rf",
                "--data-dir",
                data.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
                "--seeds",
                "0,1",
                "--split",
                "1-4,5-5,6-6",
            ],
            &[],
        );
        stdout_json(&output)
    };
    let out_a = tempfile::tempdir().unwrap();
    let summary = run(out_a.path());
    assert_eq!(summary["model"], "rf");
    assert_eq!(summary["f2"], 1.0);
    assert_eq!(summary["seeds"], 2);

    let doc_path = out_a.path().join("rf.result.json");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&doc_path).unwrap()).unwrap();
    assert_eq!(doc["model_kind"], "rf");

    let out_b = tempfile::tempdir().unwrap();
    run(out_b.path());
    let doc_b: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_b.path().join("rf.result.json")).unwrap(),
    )
    .unwrap();
    for field in ["per_seed", "aggregate", "per_step_f2", "config"] {
        let mut a = doc[field].clone();
        let mut b = doc_b[field].clone();
        for v in [&mut a, &mut b] {
            if let Some(rows) = v.as_array_mut() {
                for row in rows {
                    if let Some(obj) = row.as_object_mut() {
                        obj.remove("train_time_s");
                        obj.remove("infer_time_s");
                    }
                }
            }
        }
        assert_eq!(a, b, "field {field} differs between identical runs");
    }
}

#[test]
fn train_reuses_an_ingested_bundle() {
    let cache = tempfile::tempdir().unwrap();
    let data = fixture_dir("elliptic-sep");
    let ingest = amlkit(
        &[
            "ingest",
            "--data-dir",
            data.to_str().unwrap(),
            "--out",
            cache.path().to_str().unwrap(),
        ],
        &[],
    );
    let bundle = stdout_json(&ingest)["bundle"].as_str().unwrap().to_owned();

    let out = tempfile::tempdir().unwrap();
    let output = amlkit(
        &[
            "train",
            "--model",
            "gbt",
            "--bundle",
            &bundle,
            "--out",
            out.path().to_str().unwrap(),
            "--seeds",
            "0",
            "--split",
            "1-4,5-5,6-6",
        ],
        &[],
    );
    let summary = stdout_json(&output);
    assert_eq!(summary["model"], "gbt");
    assert_eq!(summary["f2"], 1.0);
}

#[test]
fn report_renders_a_sorted_table_and_series_files() {
    let data = fixture_dir("elliptic-sep");
    let out = tempfile::tempdir().unwrap();
    for model in ["rf", "gbt"] {
        let output = amlkit(
            &[
                "train",
                "--model",
                model,
                "--data-dir",
                data.to_str().unwrap(),
                "--out",
                out.path().to_str().unwrap(),
                "--seeds",
                "0",
                "--split",
                "1-4,5-5,6-6",
            ],
            &[],
        );
        stdout_json(&output);
    }
    let series = tempfile::tempdir().unwrap();
    let rf_doc = out.path().join("rf.result.json");
    let gbt_doc = out.path().join("gbt.result.json");
    let output = amlkit(
        &[
            "report",
            rf_doc.to_str().unwrap(),
            gbt_doc.to_str().unwrap(),
            "--series-dir",
            series.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("model"), "table header missing:\n{text}");
    assert!(text.contains("rf") && text.contains("gbt"));

    let rf_series = std::fs::read_to_string(series.path().join("rf-series.csv")).unwrap();
    let mut lines = rf_series.lines();
    assert_eq!(lines.next(), Some("step,f2"));
    assert_eq!(lines.next(), Some("6,1.000000"));
    assert!(series.path().join("gbt-series.csv").exists());
}

#[test]
fn failures_exit_nonzero_with_a_machine_readable_line() {
    let out = tempfile::tempdir().unwrap();
    let output = amlkit(
        &[
            "ingest",
            "--data-dir",
            out.path().join("missing").to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().last().expect("an error line");
    let value: serde_json::Value = serde_json::from_str(line).unwrap();
    assert!(value["error"].as_str().unwrap().contains("features"));

    let output = amlkit(&["train", "--model", "nope"], &[]);
    assert!(!output.status.success());
}
