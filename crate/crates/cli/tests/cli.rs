use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tcrex::data::load_labeled_csv;
use tcrex::{cre_brute_force, FeatureSchema, LabeledDataset, ModelFile, ModelKind};

fn tcrex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcrex")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// The two-rule toy: approved when x1 > 3 and x2 > 6, or 1 < x1 ≤ 3 and x2 ≤ 6.
fn write_toy(dir: &Path) -> (PathBuf, PathBuf) {
    let mut csv = String::from("x1,x2,y\n");
    for i in 0..10 {
        for j in 0..5 {
            let (x1, x2) = (0.5 + f64::from(i), 1.0 + 2.0 * f64::from(j));
            let ok = (x1 > 3.0 && x2 > 5.0) || (x1 > 1.0 && x1 <= 3.0 && x2 <= 5.0);
            csv.push_str(&format!("{x1},{x2},{}\n", if ok { "approved" } else { "denied" }));
        }
    }
    let data = dir.join("toy.csv");
    let schema = dir.join("toy_schema.json");
    fs::write(&data, csv).unwrap();
    fs::write(
        &schema,
        r#"{"features":[{"type":"numerical","name":"x1"},{"type":"numerical","name":"x2"}]}"#,
    )
    .unwrap();
    (data, schema)
}

fn fit_toy(dir: &Path, rho: &str) -> PathBuf {
    let (data, schema) = write_toy(dir);
    let model = dir.join("toy_model.json");
    let o = tcrex(&[
        "fit", "--data", p(&data), "--schema", p(&schema), "--model-out", p(&model),
        "--target-class", "approved", "--tau", "0.9", "--rho", rho,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    model
}

fn synth(dir: &Path, kind: &str, seed: &str) -> PathBuf {
    let out = dir.join(format!("{kind}_{seed}"));
    let o = tcrex(&["synth", "--kind", kind, "--seed", seed, "--out-dir", p(&out)]);
    assert_eq!(code(&o), 0);
    out
}

#[test]
fn fit_writes_a_valid_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_toy(dir.path(), "0.2");
    let file = ModelFile::load(&model).unwrap();
    let (data, schema) = write_toy(dir.path());
    let schema = FeatureSchema::from_json_file(schema).unwrap();
    let (d, y) = load_labeled_csv(data, &schema, "y", ModelKind::Classifier).unwrap();
    let labeled = LabeledDataset::new(d, y.unwrap()).unwrap();
    let ModelFile::Single(m) = file else { panic!("expected a single model") };
    let mask = labeled.target_mask(&m.config.target).unwrap();
    for r in m.rule_list() {
        let s = r.stats(&labeled.data, &mask);
        assert!(s.accuracy >= 0.9 && s.feasibility >= 0.2);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_toy(dir.path());
    let out = dir.path().join("m.json");
    let base = ["fit", "--data", p(&data), "--schema", p(&schema), "--model-out", p(&out), "--target-class", "approved"];
    let run = |extra: &[&str]| code(&tcrex(&[&base[..], extra].concat()));
    assert_eq!(run(&["--tau", "1.5"]), 1);
    assert_eq!(run(&["--rho", "0"]), 1);
    assert_eq!(run(&["--no-such-flag"]), 1);
    assert_eq!(run(&["--rho", "0.05", "--cell-limit", "2"]), 3);
    assert!(!out.exists());

    let noisy = synth(dir.path(), "noisy", "3");
    let o = tcrex(&[
        "fit", "--data", p(&noisy.join("data.csv")), "--schema", p(&noisy.join("schema.json")),
        "--model-out", p(&out), "--target-class", "blue", "--tau", "1.0", "--rho", "0.1",
    ]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&tcrex(&["fit", "--data", "/no/such.csv", "--schema", p(&schema), "--model-out", p(&out), "--target-class", "a"])), 1);
}

#[test]
fn explain_point_in_the_orange_region() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_toy(dir.path(), "0.05");
    let points = dir.path().join("points.csv");
    fs::write(&points, "x1,x2\n0.5,1\n").unwrap();
    let o = tcrex(&["explain", "--model-in", p(&model), "--data", p(&points), "--format", "text"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let changes: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with("change")).collect();
    assert_eq!(changes, ["  change x1 to (1, 3]"], "{text}");

    let ModelFile::Single(m) = ModelFile::load(&model).unwrap() else { panic!() };
    let (data, _) = write_toy(dir.path());
    let schema = m.schema.clone();
    let (d, _) = load_labeled_csv(data, &schema, "y", ModelKind::Classifier).unwrap();
    let want = cre_brute_force(&[0.5, 1.0], &m.rule_list(), &d);
    assert!(text.starts_with(&format!("row 0: Rule R{}", want + 1)), "{text}");
}

#[test]
fn explain_flags_rows_already_in_target() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_toy(dir.path(), "0.05");
    let (data, _) = write_toy(dir.path());
    let o = tcrex(&["explain", "--model-in", p(&model), "--data", p(&data), "--format", "both"]);
    let text = stdout(&o);
    // row 7 is (1.5, 5): approved
    assert!(text.contains("row 7: already satisfies target"), "{text}");
    assert!(text.contains(r#"{"row":7,"status":"already_satisfies_target"}"#));
}

#[test]
fn batch_explain_keeps_order() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    assert_eq!(code(&tcrex(&["synth", "--rows", "1000", "--seed", "2", "--out-dir", p(&c)])), 0);
    let model = dir.path().join("m.json");
    let o = tcrex(&[
        "fit", "--data", p(&c.join("data.csv")), "--schema", p(&c.join("schema.json")), "--model-out", p(&model),
        "--target-untargeted", "--rho", "0.1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = tcrex(&["explain", "--model-in", p(&model), "--data", p(&c.join("data.csv")), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let rows: Vec<u64> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["row"].as_u64().unwrap())
        .collect();
    assert_eq!(rows, (0..1000).collect::<Vec<_>>());

    let mut one = Command::new(env!("CARGO_BIN_EXE_tcrex"));
    one.env("TCREX_THREADS", "1")
        .args(["explain", "--model-in", p(&model), "--data", p(&c.join("data.csv")), "--format", "json"]);
    assert_eq!(one.output().unwrap().stdout, o.stdout);
}

#[test]
fn explain_rejects_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_toy(dir.path(), "0.05");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n").unwrap();
    assert_eq!(code(&tcrex(&["explain", "--model-in", p(&model), "--data", p(&bad)])), 1);
}

#[test]
fn cross_validation_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_toy(dir.path());
    let c = synth(dir.path(), "clusters", "1");
    let reports = dir.path().join("reports");
    let o = tcrex(&[
        "evaluate", "--data", p(&c.join("data.csv")), "--schema", p(&c.join("schema.json")),
        "--target-class", "blue", "--rho", "0.1", "--folds", "10", "--report-dir", p(&reports),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..10 {
        assert!(reports.join(format!("fold_{k}.csv")).exists());
        assert!(reports.join(format!("fold_{k}.json")).exists());
    }
    assert!(reports.join("summary.json").exists());

    let model = fit_toy(dir.path(), "0.05");
    let single = dir.path().join("single");
    let o = tcrex(&["evaluate", "--data", p(&data), "--model-in", p(&model), "--report-dir", p(&single)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_eq!(code(&tcrex(&["synth", "--seed", "7", "--out-dir", p(out)])), 0);
    }
    for f in ["data.csv", "schema.json", "model.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn render_prunes_to_sample() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_toy(dir.path(), "0.05");
    let full = stdout(&tcrex(&["render", "--model-in", p(&model)]));
    assert!(full.starts_with("3 metarules for 2 distinct rules"), "{full}");
    let sample = dir.path().join("sample.csv");
    fs::write(&sample, "x1,x2\n5,9\n6,8\n0,7\n").unwrap();
    let pruned = stdout(&tcrex(&["render", "--model-in", p(&model), "--sample", p(&sample)]));
    assert!(pruned.starts_with("1 metarule for 1 distinct rule"), "{pruned}");
    assert!(pruned.contains("(n=3)"), "{pruned}");
    assert_eq!(pruned.lines().count(), 2, "{pruned}");
}

#[test]
fn regression_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let r = synth(dir.path(), "regression", "4");
    let model = dir.path().join("r.json");
    let o = tcrex(&[
        "fit", "--data", p(&r.join("data.csv")), "--schema", p(&r.join("schema.json")), "--model-out", p(&model),
        "--target-high", "--target-low", "--rho", "0.05",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let via_labels = tcrex(&["explain", "--model-in", p(&model), "--data", p(&r.join("data.csv"))]);
    let via_tree = tcrex(&[
        "explain", "--model-in", p(&model), "--data", p(&r.join("data.csv")), "--model-tree", p(&r.join("model.json")),
    ]);
    assert_eq!(code(&via_labels), 0);
    assert_eq!(via_labels.stdout, via_tree.stdout);
    let o = tcrex(&["evaluate", "--data", p(&r.join("data.csv")), "--model-in", p(&model), "--report-dir", p(&dir.path().join("rep"))]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&tcrex(&["render", "--model-in", p(&model), "--summary"])), 0);
}
