mod common;

use common::{artifacts, fixture, ok, pipeline, ppr, s};
use ppr_core::eval::{AgreementReport, EvalReport};
use ppr_core::splits::{verify_split, SplitManifest};
use ppr_core::Dataset;

fn build(root: &std::path::Path) -> std::path::PathBuf {
    let fx = fixture();
    let stdout = ok(&[
        "build",
        "--lexicon",
        s(&fx.join("lexicon.csv")),
        "--index",
        s(&fx.join("index.csv")),
        "--out",
        s(&root.join("build")),
    ]);
    assert!(stdout.contains("matched 6 videos across 3 glosses"), "{stdout}");
    root.join("build/dataset.json")
}

#[test]
fn build_fixture_gives_six_records() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = Dataset::load(&build(dir.path())).unwrap();
    assert_eq!(dataset.records.len(), 6);
    assert!(dataset.records.iter().all(|r| r.sequence.shape() == (150, 27, 3)));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("build/join_report.json")).unwrap()).unwrap();
    assert_eq!(report["matched_videos"], 6);
    assert_eq!(report["matched_glosses"], 3);
}

#[test]
fn build_reads_the_data_root_variable() {
    let dir = tempfile::tempdir().unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_ppr"))
        .args(["build", "--out", s(&dir.path().join("b"))])
        .env("PPR_DATA_ROOT", fixture())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(Dataset::load(&dir.path().join("b/dataset.json")).unwrap().records.len(), 6);
}

#[test]
fn missing_keypoint_file_names_the_video() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir_all(corpus.join("keypoints")).unwrap();
    for f in ["lexicon.csv", "index.csv"] {
        std::fs::copy(fx.join(f), corpus.join(f)).unwrap();
    }
    for id in ["00000", "00001", "00002", "00004", "00005"] {
        let name = format!("keypoints/{id}.json");
        std::fs::copy(fx.join(&name), corpus.join(&name)).unwrap();
    }
    let out = ppr(&[
        "build",
        "--lexicon",
        s(&corpus.join("lexicon.csv")),
        "--index",
        s(&corpus.join("index.csv")),
        "--out",
        s(&dir.path().join("b")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[ingest]: "), "{stderr}");
    assert!(stderr.contains("00003"), "{stderr}");
}

#[test]
fn gloss_split_verifies_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = build(dir.path());
    let mut manifests = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let stdout = ok(&[
            "split", "--dataset", s(&dataset), "--property", "sign_type", "--mode", "gloss", "--seed", "9", "--out",
            s(&out),
        ]);
        assert!(stdout.contains("One Handed"), "{stdout}");
        manifests.push(std::fs::read(out.join("split.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    let manifest: SplitManifest = serde_json::from_slice(&manifests[0]).unwrap();
    let records = Dataset::load(&dataset).unwrap().records;
    assert!(verify_split(&manifest, &records).is_valid());
}

#[test]
fn bad_ratios_are_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = build(dir.path());
    for ratios in ["0.5,0.5,0.5", "0.7,0.3"] {
        let out = ppr(&[
            "split", "--dataset", s(&dataset), "--property", "movement", "--ratios", ratios, "--out",
            s(&dir.path().join("s")),
        ]);
        assert_eq!(out.status.code(), Some(1));
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.starts_with("error[usage]: "), "{stderr}");
    }
}

#[test]
fn too_few_samples_names_the_class() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = build(dir.path());
    // Gloss mode on movement: Straight has one gloss, Curved two.
    let out = ppr(&[
        "split", "--dataset", s(&dataset), "--property", "movement", "--mode", "gloss", "--out",
        s(&dir.path().join("s")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[split]: "), "{stderr}");
    assert!(stderr.contains("\"Curved\" has 2 units"), "{stderr}");
}

#[test]
fn pipeline_produces_complete_reports() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), 5);
    let report = EvalReport::load(&dir.path().join("eval_mlp/report.json")).unwrap();
    let m = &report.metrics;
    for v in [
        m.accuracy,
        m.balanced_accuracy,
        m.micro_precision,
        m.micro_recall,
        m.macro_precision,
        m.macro_recall,
        m.mcc,
    ] {
        assert!(v.is_finite());
    }
    assert_eq!(report.predictions.len(), 2);
    let ids: Vec<String> = serde_json::from_str(&std::fs::read_to_string(dir.path().join("mlp/trained_ids.json")).unwrap()).unwrap();
    assert_eq!(ids.len(), 4);
    let table = std::fs::read_to_string(dir.path().join("report/table.txt")).unwrap();
    assert!(table.contains("movement A") && table.contains("baseline") && table.contains("mlp"), "{table}");
}

#[test]
fn baseline_eval_reproduces_majority_frequency() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), 2);
    let report = EvalReport::load(&dir.path().join("eval_baseline/report.json")).unwrap();
    let predicted: std::collections::BTreeSet<&str> = report.predictions.iter().map(|p| p.predicted.as_str()).collect();
    assert_eq!(predicted.len(), 1);
    let majority = *predicted.iter().next().unwrap();
    let hits = report.predictions.iter().filter(|p| p.truth == majority).count();
    assert_eq!(report.metrics.accuracy, hits as f64 / report.predictions.len() as f64);
}

#[test]
fn analyze_three_reports_emits_kappa_and_ids() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), 4);
    let base = dir.path().join("eval_baseline/report.json");
    // A third rater: the baseline under another name.
    let mut copy = EvalReport::load(&base).unwrap();
    copy.model = "baseline-copy".into();
    let third = dir.path().join("copy.json");
    copy.save(&third).unwrap();
    let stdout = ok(&[
        "analyze",
        "--reports",
        s(&dir.path().join("eval_mlp/report.json")),
        s(&base),
        s(&third),
        "--out",
        s(&dir.path().join("an3")),
    ]);
    assert!(stdout.contains("κ"), "{stdout}");
    let text = std::fs::read_to_string(dir.path().join("an3/agreement.json")).unwrap();
    let reports: Vec<AgreementReport> = serde_json::from_str(&text).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].models.len(), 3);
    let mlp = EvalReport::load(&dir.path().join("eval_mlp/report.json")).unwrap();
    let baseline = EvalReport::load(&base).unwrap();
    let expected: Vec<String> = mlp
        .predictions
        .iter()
        .zip(&baseline.predictions)
        .filter(|(a, b)| a.truth != a.predicted && b.truth != b.predicted)
        .map(|(a, _)| a.video_id.clone())
        .collect();
    assert_eq!(reports[0].joint.ids, expected);
}

#[test]
fn pipeline_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(&dir.path().join("a"), 11);
    pipeline(&dir.path().join("b"), 11);
    let (a, b) = (artifacts(&dir.path().join("a")), artifacts(&dir.path().join("b")));
    assert!(a.len() >= 15, "{:?}", a.keys().collect::<Vec<_>>());
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{k} differs");
    }
    // Timestamps live only in the sidecar log.
    assert!(dir.path().join("a/mlp/ppr.log").exists());
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let lock = std::fs::OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(dir.path().join(".ppr.lock"))
        .unwrap();
    lock.lock().unwrap();
    let out = ppr(&["taxonomy", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[lock]: "));
    lock.unlock().unwrap();
    ok(&["taxonomy", "--out", s(dir.path())]);
    assert!(dir.path().join("taxonomy.json").exists());
}

#[test]
fn config_errors_are_prefixed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "propertee = \"movement\"\n").unwrap();
    let out = ppr(&["taxonomy", "--config", s(&cfg), "--out", s(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]: "));

    let out = ppr(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[usage]: "));

    let out = ppr(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn search_writes_trial_log_and_loadable_best_config() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), 1);
    let cfg = dir.path().join("search.toml");
    std::fs::write(
        &cfg,
        r#"
[search]
learning_rate = [0.001, 0.01]
scheduler_step_size = [5]
gamma = [1.0]
epochs = [2]
batch_size = [4]
dropout = [0.0]
budget = 3
[search.architecture]
family = "mlp"
layers = [1]
hidden_dim = [4]
"#,
    )
    .unwrap();
    let dataset = dir.path().join("build/dataset.json");
    let split = dir.path().join("split/split.json");
    ok(&[
        "search", "--dataset", s(&dataset), "--split", s(&split), "--config", s(&cfg), "--seed", "3", "--out",
        s(&dir.path().join("search")),
    ]);
    let log = std::fs::read_to_string(dir.path().join("search/trials.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    ok(&[
        "train", "--dataset", s(&dataset), "--split", s(&split), "--config", s(&dir.path().join("search/best.toml")),
        "--out", s(&dir.path().join("retrain")),
    ]);
    let out = ok(&[
        "seed-study", "--dataset", s(&dataset), "--split", s(&split), "--family", "baseline", "--seeds", "3", "--out",
        s(&dir.path().join("seeds")),
    ]);
    assert!(out.contains("± 0.00"), "{out}");
}

#[test]
fn synth_matches_bundled_fixture() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "synth", "--classes", "0,1,1", "--videos", "3,2,1", "--frames", "20", "--seed", "7", "--out", s(dir.path()),
    ]);
    let (a, b) = (artifacts(dir.path()), artifacts(&fixture()));
    assert_eq!(a, b);
}
