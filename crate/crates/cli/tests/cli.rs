use std::path::Path;
use std::process::{Command, Output};

fn codeaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codeaug")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_corpus(dir: &Path) {
    let out = codeaug(&["synth", "--out", s(dir), "--n-train", "40", "--n-test", "10", "--codebase-size", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn data_args(data: &Path, out: &Path) -> Vec<String> {
    vec![
        "--train".into(),
        data.join("train.jsonl").display().to_string(),
        "--test".into(),
        data.join("test.jsonl").display().to_string(),
        "--test-codebase".into(),
        data.join("test_codebase.jsonl").display().to_string(),
        "--out".into(),
        out.display().to_string(),
        "--seed".into(),
        "1".into(),
    ]
}

fn run_stage(stage: &str, data: &Path, out: &Path) -> Output {
    let mut args = vec![stage.to_string()];
    args.extend(data_args(data, out));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    codeaug(&refs)
}

#[test]
fn filter_without_a_trained_model_points_at_train_filter() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("run"));
    small_corpus(&data);
    let aug = run_stage("augment", &data, &out);
    assert!(aug.status.success(), "{}", String::from_utf8_lossy(&aug.stderr));
    let filter = run_stage("filter", &data, &out);
    assert_eq!(filter.status.code(), Some(3));
    let err = String::from_utf8_lossy(&filter.stderr);
    assert!(err.contains("cross_encoder.json") && err.contains("codeaug train-filter"), "{err}");
}

#[test]
fn filter_before_augment_points_at_augment() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("run"));
    small_corpus(&data);
    let filter = run_stage("filter", &data, &out);
    assert_eq!(filter.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&filter.stderr).contains("codeaug augment"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(codeaug(&["no-such-stage"]).status.code(), Some(2));
    assert_eq!(codeaug(&["sweep", "--param", "theta-q"]).status.code(), Some(2));
    assert_eq!(codeaug(&["sweep", "--param", "depth", "--values", "1"]).status.code(), Some(2));
    assert_eq!(codeaug(&["train", "--original", "--no-filter"]).status.code(), Some(2));
}

#[test]
fn bad_config_is_reported_with_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "theta_q = 0.9\nseeds = [1]\nthta_c = 0.8\n").unwrap();
    let out = codeaug(&["stats", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.toml:3:") && err.contains("thta_c"), "{err}");

    std::fs::write(&cfg, "theta_q = 1.5\n").unwrap();
    assert_eq!(codeaug(&["stats", "--config", s(&cfg)]).status.code(), Some(3));
}

#[test]
fn missing_input_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.jsonl");
    let out = codeaug(&["stats", "--train", s(&missing)]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stages_chain_and_eval_exports_embeddings() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("run"));
    small_corpus(&data);
    let cfg = tmp.path().join("fast.toml");
    std::fs::write(&cfg, "bi_epochs = 2\ncross_epochs = 3\nbi_batch_size = 8\ncross_batch_size = 8\n").unwrap();
    let mut args: Vec<String> = vec!["pipeline".into(), "--config".into(), cfg.display().to_string()];
    args.extend(data_args(&data, &out));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let run = codeaug(&refs);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["augment/dict_q.jsonl", "augment/dict_c.jsonl", "filter-model/seed-1/cross_encoder.json", "filter/seed-1/d_aug.jsonl", "train/seed-1/bi_encoder.json", "eval/report.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval/report.json")).unwrap()).unwrap();
    let mrr = report["mrr"].as_f64().unwrap();
    assert!(mrr > 0.0 && mrr <= 1.0);

    let mut args: Vec<String> = vec!["eval".into(), "--config".into(), cfg.display().to_string(), "--export".into(), "--project".into()];
    args.extend(data_args(&data, &out));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let eval = codeaug(&refs);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let csv = std::fs::read_to_string(out.join("eval/embeddings-seed-1.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(",p0,p1,pair_distance"));
    assert_eq!(csv.lines().count(), 1 + 2 * 10);
}
