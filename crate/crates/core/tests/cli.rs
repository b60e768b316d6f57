use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memoir::data::{parse_dataset, ParseOptions};
use memoir::eval::{evaluate, F1Mode};
use memoir::model_io::load_model;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn memoir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memoir"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn train_toy(dir: &Path, extra: &[&str]) -> (Output, PathBuf) {
    let model = dir.join("toy.model");
    let train = data("toy.svm");
    let held = data("toy_heldout.svm");
    let mut args = vec![
        "train",
        "--train",
        train.to_str().unwrap(),
        "--heldout",
        held.to_str().unwrap(),
        "--algo",
        "l2",
        "--backend",
        "exact",
        "--epochs",
        "100",
        "--model-out",
        model.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    (memoir(&args), model)
}

#[test]
fn train_reports_heldout_accuracy_and_writes_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("train.tsv");
    let (out, model) = train_toy(dir.path(), &["--log-out", log.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let acc = summary["heldout_acc"].as_f64().unwrap();
    assert!(acc >= 0.95, "heldout accuracy {acc}");
    assert!(model.exists());

    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch\tobjective\theldout_acc\theldout_maf1\tnnz\tseconds\tindex_refreshes"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 100);
    let last: Vec<&str> = rows[99].split('\t').collect();
    assert_eq!(last[0], "100");
    assert!(last[2].parse::<f64>().unwrap() >= 0.95);
}

#[test]
fn eval_matches_library_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let (out, model_path) = train_toy(dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let test = data("toy_heldout.svm");
    let out = memoir(&[
        "eval",
        "--model",
        model_path.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();

    let model = load_model(&model_path).unwrap();
    let opts = ParseOptions {
        dim: Some(model.dim()),
        num_classes: Some(model.num_classes()),
        labels: Some(model.labels.clone()),
        ..ParseOptions::default()
    };
    let (d, _) = parse_dataset(&test, &opts).unwrap();
    let expected = evaluate(&model.weights, &d, F1Mode::Harmonic).unwrap();
    assert_eq!(report["n"].as_u64().unwrap() as usize, expected.n);
    assert_eq!(report["accuracy"].as_f64().unwrap(), expected.accuracy);
    assert_eq!(report["macro_f1"].as_f64().unwrap(), expected.macro_f1);
}

#[test]
fn predict_writes_one_label_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let (out, model) = train_toy(dir.path(), &["--model-format", "text"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let preds = dir.path().join("preds.txt");
    let input = data("toy_heldout.svm");
    let out = memoir(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--output",
        preds.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(preds).unwrap();
    let truth = std::fs::read_to_string(input).unwrap();
    assert_eq!(text.lines().count(), truth.lines().count());
    let correct = text
        .lines()
        .zip(truth.lines())
        .filter(|(p, t)| t.split_whitespace().next() == Some(*p))
        .count();
    assert!(correct as f64 / 60.0 >= 0.95);
}

#[test]
fn missing_model_is_reported_by_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such.model");
    let out = memoir(&[
        "predict",
        "--model",
        missing.to_str().unwrap(),
        "--input",
        data("toy.svm").to_str().unwrap(),
        "--output",
        dir.path().join("p.txt").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no_such.model"), "{}", stderr(&out));
}

#[test]
fn mismatched_index_flags_warn() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = train_toy(dir.path(), &["--lsh-bits", "16"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stderr(&out).contains("warning: --lsh-* flags are ignored"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn bad_arguments_fail() {
    let out = memoir(&["train", "--no-such-flag"]);
    assert!(!out.status.success());
    let out = memoir(&["frobnicate"]);
    assert!(!out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = train_toy(dir.path(), &["--lambda", "-1"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}
