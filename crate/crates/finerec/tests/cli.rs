//! Command-line surface checks: exit codes, determinism of file outputs and
//! the error paths the pipeline promises.

use std::path::Path;
use std::process::{Command, Output};

fn finerec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finerec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn expect_success(args: &[&str]) -> Output {
    let output = finerec(args);
    assert!(
        output.status.success(),
        "finerec {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn usage_error_exits_two() {
    let output = finerec(&["no-such-command"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn module_error_exits_one_with_diagnostic() {
    let output = finerec(&[
        "preprocess",
        "--in",
        &fixture("reviews.jsonl"),
        "--out-dir",
        "/tmp/unused-finerec-out",
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("--pairs or --lexicon"), "{stderr}");
}

#[test]
fn lexicon_extract_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.jsonl");
    let out_b = dir.path().join("b.jsonl");
    for out in [&out_a, &out_b] {
        expect_success(&[
            "extract",
            "--in",
            &fixture("reviews.jsonl"),
            "--mode",
            "lexicon",
            "--attributes",
            &fixture("attributes.json"),
            "--lexicon",
            &fixture("lexicon.json"),
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

/// Shared pipeline for the checkpoint-dependent commands.
fn prepared_workspace(dir: &Path) -> (String, String) {
    let synth_dir = dir.join("synth");
    let data_dir = dir.join("data");
    let model_dir = dir.join("model");
    expect_success(&[
        "synth",
        "--out-dir",
        synth_dir.to_str().unwrap(),
        "--users",
        "40",
        "--items",
        "30",
        "--interactions",
        "8",
        "--seed",
        "7",
    ]);
    expect_success(&[
        "preprocess",
        "--in",
        synth_dir.join("corpus.jsonl").to_str().unwrap(),
        "--out-dir",
        data_dir.to_str().unwrap(),
        "--pairs",
        synth_dir.join("pairs.jsonl").to_str().unwrap(),
        "--attributes",
        synth_dir.join("attributes.json").to_str().unwrap(),
    ]);
    expect_success(&[
        "train",
        "--data-dir",
        data_dir.to_str().unwrap(),
        "--out",
        model_dir.to_str().unwrap(),
        "--d",
        "4",
        "--epochs",
        "2",
        "--patience",
        "2",
    ]);
    (
        data_dir.display().to_string(),
        model_dir.join("best.ckpt").display().to_string(),
    )
}

#[test]
fn evaluate_recommend_and_graph_dumps_work() {
    let dir = tempfile::tempdir().unwrap();
    let (data_dir, ckpt) = prepared_workspace(dir.path());

    let output = expect_success(&["evaluate", "--ckpt", &ckpt, "--data-dir", &data_dir]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.starts_with("metric,k,value\n"), "{stdout}");
    assert!(stdout.contains("prec,10,"), "{stdout}");
    assert!(stdout.contains("ndcg,20,"), "{stdout}");

    // Per-user dump.
    let per_user = dir.path().join("per_user.jsonl");
    expect_success(&[
        "evaluate",
        "--ckpt",
        &ckpt,
        "--data-dir",
        &data_dir,
        "--per-user",
        per_user.to_str().unwrap(),
    ]);
    let dump = std::fs::read_to_string(&per_user).unwrap();
    assert!(dump.lines().count() > 0);
    assert!(dump.lines().all(|l| l.contains("\"rank\"")), "{dump}");

    // Recommend prints a ranked list with explanations for a known user.
    let users_file = std::fs::read_to_string(Path::new(&data_dir).join("train.jsonl")).unwrap();
    let first_user = serde_json::from_str::<serde_json::Value>(users_file.lines().next().unwrap())
        .unwrap()["user"]
        .as_str()
        .unwrap()
        .to_string();
    let output = expect_success(&[
        "recommend",
        "--ckpt",
        &ckpt,
        "--data-dir",
        &data_dir,
        "--user",
        &first_user,
        "--top",
        "5",
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("top 5 recommendations"), "{stdout}");
    assert!(stdout.contains("1. item_"), "{stdout}");
    assert!(stdout.contains("battery:"), "missing explanation: {stdout}");

    // Graph dumps, one JSONL per attribute.
    let graph_dir = dir.path().join("graphs");
    expect_success(&[
        "build-graphs",
        "--data-dir",
        &data_dir,
        "--d",
        "4",
        "--out-dir",
        graph_dir.to_str().unwrap(),
    ]);
    for n in 0..3 {
        let dump = std::fs::read_to_string(graph_dir.join(format!("graph-{n}.jsonl"))).unwrap();
        assert!(dump.lines().count() > 0);
        let first: serde_json::Value = serde_json::from_str(dump.lines().next().unwrap()).unwrap();
        assert!(first["user"].is_string() && first["vector"].is_array());
    }

    // Unknown user is a clean failure.
    let output = finerec(&[
        "recommend",
        "--ckpt",
        &ckpt,
        "--data-dir",
        &data_dir,
        "--user",
        "nobody",
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn build_graphs_survives_core_filtered_pairs() {
    // Default synth sizes leave plenty of items below the 5-core threshold,
    // so the pair file references items the split no longer carries.
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("synth");
    let data_dir = dir.path().join("data");
    let graph_dir = dir.path().join("graphs");
    expect_success(&["synth", "--out-dir", synth_dir.to_str().unwrap(), "--seed", "42"]);
    expect_success(&[
        "preprocess",
        "--in",
        synth_dir.join("corpus.jsonl").to_str().unwrap(),
        "--out-dir",
        data_dir.to_str().unwrap(),
        "--pairs",
        synth_dir.join("pairs.jsonl").to_str().unwrap(),
        "--attributes",
        synth_dir.join("attributes.json").to_str().unwrap(),
    ]);
    expect_success(&[
        "build-graphs",
        "--data-dir",
        data_dir.to_str().unwrap(),
        "--d",
        "4",
        "--out-dir",
        graph_dir.to_str().unwrap(),
    ]);
    assert!(graph_dir.join("graph-0.jsonl").exists());
}

#[test]
fn evaluate_mismatched_checkpoint_names_shape_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = prepared_workspace(dir.path());

    // A second, smaller dataset with the same attribute count.
    let other = tempfile::tempdir().unwrap();
    let synth_dir = other.path().join("synth");
    let data_dir = other.path().join("data");
    expect_success(&[
        "synth",
        "--out-dir",
        synth_dir.to_str().unwrap(),
        "--users",
        "30",
        "--items",
        "20",
        "--interactions",
        "7",
        "--seed",
        "8",
    ]);
    expect_success(&[
        "preprocess",
        "--in",
        synth_dir.join("corpus.jsonl").to_str().unwrap(),
        "--out-dir",
        data_dir.to_str().unwrap(),
        "--pairs",
        synth_dir.join("pairs.jsonl").to_str().unwrap(),
        "--attributes",
        synth_dir.join("attributes.json").to_str().unwrap(),
    ]);
    let output = finerec(&[
        "evaluate",
        "--ckpt",
        &ckpt,
        "--data-dir",
        data_dir.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("users") && stderr.contains("items"),
        "diagnostic should name the shape conflict: {stderr}"
    );
}
