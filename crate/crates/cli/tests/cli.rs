mod common;

use std::collections::BTreeMap;

use common::*;
use memotion_core::dataset::store::{split_path, write_records};
use memotion_core::dataset::synthetic::write_official_csv;
use memotion_core::dataset::Split;
use serde_json::Value;

fn read_json(path: &std::path::Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn preprocess_keeps_going_past_a_bad_row() {
    let tmp = tempfile::tempdir().unwrap();
    let images = tmp.path().join("images");
    let mut records = balanced(6, 3, "m", &images);
    records[0].corrected_text = Some("\"quoted\" caption".into());
    records[1].ocr_text = None;
    records[1].corrected_text = None;
    let csv = tmp.path().join("train.csv");
    write_official_csv(&csv, &records).unwrap();
    let mut text = std::fs::read_to_string(&csv).unwrap();
    text.push_str("99,broken.png,only three fields\n");
    std::fs::write(&csv, text).unwrap();

    let store = tmp.path().join("store");
    let out = run(&["preprocess", "--csv", s(&csv), "--images", s(&images), "--out-dir", s(&store)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("rejected"), "expected a warning, got {:?}", stderr(&out));

    let rejects = read_json(&store.join("train.rejects.json"));
    assert_eq!(rejects["rejects"].as_array().unwrap().len(), 1);
    let lines = std::fs::read_to_string(store.join("train.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 6);
    assert!(lines.contains("quoted caption") && !lines.contains("\\\"quoted"));
    assert_eq!(std::fs::read_to_string(store.join("train.needs_manual_text.txt")).unwrap(), "m_1\n");

    let manifest = read_json(&store.join("manifest.train.json"));
    assert_eq!(manifest["command"], "preprocess");
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["input_paths"][0], s(&csv));
}

#[test]
fn preprocess_without_image_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("train.csv");
    write_official_csv(&csv, &balanced(3, 3, "m", &tmp.path().join("images"))).unwrap();
    let missing = tmp.path().join("nope");
    let out = run(&["preprocess", "--csv", s(&csv), "--images", s(&missing), "--out-dir", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("image directory"));
}

#[test]
fn verify_reports_mismatch_and_missing_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let store = toy_store(tmp.path(), 8, 4);
    let out = run(&["verify", "--store", s(&store)]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL"), "{}", stdout(&out));

    let mut unlabeled = balanced(2, 5, "u", &tmp.path().join("images"));
    unlabeled[1].labels = None;
    let bare = tmp.path().join("bare");
    std::fs::create_dir_all(&bare).unwrap();
    write_records(&split_path(&bare, Split::Test), &unlabeled).unwrap();
    let out = run(&["verify", "--store", s(&bare)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("labels required"), "{}", stderr(&out));
}

#[test]
fn unknown_preset_lists_valid_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let store = toy_store(tmp.path(), 8, 4);
    let out = run(&["train", "--store", s(&store), "--preset", "fast", "--toy-encoders", "--out-dir", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    for name in memotion_core::trainer::PRESET_NAMES {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn train_evaluate_predict_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let store = toy_store(tmp.path(), 24, 12);
    let config = quick_config(tmp.path());
    let run_dir = tmp.path().join("run");
    for task in ["A", "B_funny"] {
        let out = run(&[
            "train", "--store", s(&store), "--preset", "comparative_bert_densenet", "--task", task,
            "--toy-encoders", "--config", s(&config), "--seed", "7", "--out-dir", s(&run_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(run_dir.join(task).join("best.safetensors").is_file());
        assert!(run_dir.join(task).join("history.jsonl").is_file());
    }
    let manifest = read_json(&run_dir.join("manifest.json"));
    assert_eq!(manifest["config_preset"], "comparative_bert_densenet");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["timestamp"], "1970-01-01T00:00:00Z");
    let summary = read_json(&run_dir.join("train_summary.json"));
    assert_eq!(summary["config"]["dropout_rate"], 0.3);
    assert_eq!(summary["config"]["l2_coefficient"], 0.04);
    assert_eq!(summary["config"]["max_epochs"], 2);

    let eval_dir = tmp.path().join("eval");
    let out = run(&["evaluate", "--store", s(&store), "--checkpoint", s(&run_dir), "--out-dir", s(&eval_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let eval = read_json(&eval_dir.join("evaluation.json"));
    assert_eq!(eval["split"], "dev");
    let scored: Vec<&String> = eval["per_subtask"].as_object().unwrap().keys().collect();
    assert_eq!(scored, ["A", "B_funny"]);
    assert!(eval["report"].is_null());

    let image = tmp.path().join("images").join("tr_0.png");
    let out = run(&[
        "predict", "--checkpoint", s(&run_dir), "--image", s(&image), "--caption", "awesome bitlol",
        "--tasks", "B_funny,A",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let pred: BTreeMap<String, Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(pred.keys().collect::<Vec<_>>(), ["A", "B_funny"]);
    let funny = &pred["B_funny"];
    let p = funny["probabilities"][0].as_f64().unwrap();
    assert_eq!(funny["label"], if p >= 0.5 { "funny" } else { "not_funny" });

    let out = run(&["predict", "--checkpoint", s(&run_dir), "--caption", "no image here", "--tasks", "A"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing image"), "{}", stderr(&out));

    let out = run(&["predict", "--checkpoint", s(&run_dir), "--caption", "x", "--tasks", "C_funny"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn compare_subset_gives_one_fresh_row_per_model() {
    let tmp = tempfile::tempdir().unwrap();
    let store = toy_store(tmp.path(), 16, 8);
    let config = quick_config(tmp.path());
    let out_dir = tmp.path().join("cmp");
    let out = run(&[
        "compare", "--store", s(&store), "--models", "densenet,resnet", "--toy-encoders", "--config",
        s(&config), "--out-dir", s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cmp = read_json(&out_dir.join("comparison.json"));
    let rows = cmp["table"]["rows"].as_array().unwrap();
    let fresh: Vec<&str> = rows
        .iter()
        .filter(|r| r["source"] == "fresh")
        .map(|r| r["model"].as_str().unwrap())
        .collect();
    assert_eq!(fresh, ["DenseNet", "ResNet"]);
    assert_eq!(rows.len(), 4);
    let results = std::fs::read_to_string(out_dir.join("results.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 16);
    let first: Value = serde_json::from_str(results.lines().next().unwrap()).unwrap();
    assert_eq!(first["preset"], "comparative_densenet");
    assert_eq!(first["seed"], 42);
    assert!(std::fs::read_to_string(out_dir.join("comparison.txt")).unwrap().contains("DenseNet"));
}

#[test]
fn exit_codes_distinguish_validation_from_fatal_errors() {
    use memotion_cli::exit_code_for;
    use memotion_core::Error;
    let e = anyhow::Error::new(Error::LabelsRequired("x".into())).context("verify");
    assert_eq!(exit_code_for(&e), 1);
    assert_eq!(exit_code_for(&anyhow::Error::new(Error::Config("bad".into()))), 2);
    assert_eq!(exit_code_for(&anyhow::anyhow!("plain")), 2);
}
