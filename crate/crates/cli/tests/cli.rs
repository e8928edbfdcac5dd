//! Drives the `pumpguard` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pumpguard::eval::EvaluationReport;
use pumpguard::models::gbt::{RegNode, RegressionTree};
use pumpguard::models::svm::Standardizer;
use pumpguard::models::{
    BoostedModel, DecisionTree, FeatureLayout, ForestModel, ModelKind, SvmModel, TrainedModel,
    TreeNode,
};
use pumpguard::pipeline::{
    model_path, ALERT_COUNTS_CSV, EVENTS_JSONL, REPORT_CSV, THRESHOLDS_JSON,
};
use pumpguard::ParameterKind;

const SMALL: &str = r#"{
  "generator": {"sample_count": 1200},
  "models": {"forest": {"n_trees": 10}, "gbt": {"rounds": 10}, "svm": {"epochs": 10}}
}"#;

fn pumpguard(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pumpguard"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pumpguard(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stages(dir: &Path, config: &str, names: &[&str]) {
    for s in names {
        ok(dir, &[s, "--config", config]);
    }
}

#[test]
fn run_all_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_config(a.path(), SMALL);
    let lines = ok(a.path(), &["run-all", "--config", &cfg]);
    assert_eq!(lines.lines().count(), 6);
    ok(b.path(), &["run-all", "--config", &cfg]);
    for rel in [
        REPORT_CSV,
        THRESHOLDS_JSON,
        "labeled.csv",
        "manifest.json",
        "plots/flow.svg",
    ] {
        assert_eq!(
            fs::read(a.path().join(rel)).unwrap(),
            fs::read(b.path().join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["generate", "--seed", "1"]);
    ok(b.path(), &["generate", "--seed", "2"]);
    assert_ne!(
        fs::read(a.path().join("baseline.csv")).unwrap(),
        fs::read(b.path().join("baseline.csv")).unwrap()
    );
}

#[test]
fn clean_data_raises_no_fixed_alerts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"injection": {"count_per_parameter": 0}}"#);
    stages(dir.path(), &cfg, &["generate", "inject", "label"]);
    let table = fs::read_to_string(dir.path().join(ALERT_COUNTS_CSV)).unwrap();
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header
        .iter()
        .position(|h| h.contains("fixed") && h.contains("alert"))
        .expect("fixed alert column");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert_eq!(row.split(',').nth(col), Some("0"), "{row}");
    }
}

#[test]
fn training_twice_writes_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    stages(dir.path(), &cfg, &["generate", "inject", "label", "train"]);
    let first: Vec<Vec<u8>> = all_models(dir.path());
    ok(dir.path(), &["train", "--config", &cfg]);
    assert_eq!(first, all_models(dir.path()));
}

fn all_models(dir: &Path) -> Vec<Vec<u8>> {
    ModelKind::ALL
        .iter()
        .flat_map(|&k| ParameterKind::ALL.map(|p| fs::read(dir.join(model_path(k, p))).unwrap()))
        .collect()
}

/// Models that encode the labeling rule exactly for one parameter.
fn perfect_models(p: ParameterKind, adaptive: f64, fixed: f64) -> [TrainedModel; 3] {
    let layout = FeatureLayout::Univariate(p);
    let split = |threshold, left, right| TreeNode::Split {
        feature: 0,
        threshold,
        left,
        right,
    };
    let leaf = |class_counts| TreeNode::Leaf { class_counts };
    let forest = ForestModel {
        trees: vec![DecisionTree {
            nodes: vec![
                split(adaptive, 1, 2),
                leaf([1, 0, 0]),
                split(fixed, 3, 4),
                leaf([0, 1, 0]),
                leaf([0, 0, 1]),
            ],
            n_features: 1,
        }],
        config: Default::default(),
        seed: 0,
        layout,
        target: p,
    };
    let band = |low: f64, mid: f64, high: f64| RegressionTree {
        nodes: vec![
            RegNode::Split {
                feature: 0,
                threshold: adaptive,
                left: 1,
                right: 2,
            },
            RegNode::Leaf { value: low },
            RegNode::Split {
                feature: 0,
                threshold: fixed,
                left: 3,
                right: 4,
            },
            RegNode::Leaf { value: mid },
            RegNode::Leaf { value: high },
        ],
    };
    let gbt = BoostedModel {
        base_score: [0.0; 3],
        rounds: vec![[
            band(1.0, 0.0, 0.0),
            band(0.0, 1.0, 0.0),
            band(0.0, 0.0, 1.0),
        ]],
        config: Default::default(),
        objective_history: Vec::new(),
        layout,
        target: p,
    };
    // Scores a - x, 0 and x - f; ties resolve to the milder class.
    let svm = SvmModel {
        weights: [vec![-1.0], vec![0.0], vec![1.0]],
        biases: [adaptive, 0.0, -fixed],
        standardizer: Standardizer {
            mean: vec![0.0],
            stddev: vec![1.0],
        },
        config: Default::default(),
        seed: 0,
        objective_history: [Vec::new(), Vec::new(), Vec::new()],
        layout,
        target: p,
    };
    [
        TrainedModel::Forest(forest),
        TrainedModel::Gbt(gbt),
        TrainedModel::Svm(svm),
    ]
}

#[test]
fn evaluating_perfect_models_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    stages(dir.path(), &cfg, &["generate", "inject", "label", "train"]);

    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join(THRESHOLDS_JSON)).unwrap()).unwrap();
    for p in ParameterKind::ALL {
        let pair = &doc["thresholds"]["pairs"][p.name()];
        let (adaptive, fixed) = (
            pair["adaptive"].as_f64().unwrap(),
            pair["fixed"].as_f64().unwrap(),
        );
        for model in perfect_models(p, adaptive, fixed) {
            model.check_consistent().unwrap();
            let path = dir.path().join(model_path(model.kind(), p));
            fs::write(path, model.to_json().unwrap()).unwrap();
        }
    }
    ok(dir.path(), &["evaluate", "--config", &cfg]);
    let rows =
        EvaluationReport::read_csv(fs::read(dir.path().join(REPORT_CSV)).unwrap().as_slice())
            .unwrap();
    assert_eq!(rows.len(), 15);
    for r in &rows {
        assert_eq!(r.accuracy, 1.0, "{} {}", r.approach, r.parameter);
        assert_eq!(r.f1_macro, 1.0, "{} {}", r.approach, r.parameter);
    }
}

#[test]
fn simulate_streams_events() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    stages(dir.path(), &cfg, &["generate", "inject", "label", "train"]);
    let line = ok(dir.path(), &["simulate", "--config", &cfg]);
    let n: usize = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    let events = fs::read_to_string(dir.path().join(EVENTS_JSONL)).unwrap();
    assert!(n > 0);
    assert_eq!(events.lines().count(), n);
    for l in events.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["timestamp"].is_string());
    }
}

#[test]
fn bad_configuration_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"generator": {"samples": 10}}"#);
    let out = pumpguard(dir.path(), &["generate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("samples"));

    let cfg = write_config(dir.path(), r#"{"split": {"test_fraction": 1.5}}"#);
    let out = pumpguard(dir.path(), &["generate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("test_fraction"));
}

#[test]
fn missing_files_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = pumpguard(dir.path(), &["inject"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("baseline.csv"));

    let out = pumpguard(
        dir.path(),
        &["generate", "--config", "/nonexistent/config.json"],
    );
    assert_eq!(out.status.code(), Some(2));
}
