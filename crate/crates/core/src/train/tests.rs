use super::*;
use crate::autodiff::softmax_cross_entropy;
use crate::splits::{split, SplitSpec};
use crate::synthetic::{separable_dataset, SyntheticSpec, SYNTHETIC_PROPERTY};

fn dataset(per_class: usize, frames: usize, seed: u64) -> crate::ingest::Dataset {
    separable_dataset(&SyntheticSpec {
        per_class,
        frames,
        seed,
        ..SyntheticSpec::default()
    })
}

fn manifest(ds: &crate::ingest::Dataset) -> SplitManifest {
    split(&ds.records, &SplitSpec::new(SYNTHETIC_PROPERTY, SplitMode::Phoneme, 3)).unwrap()
}

fn mlp(task: &Task, layers: usize) -> ModelConfig {
    task.model_config(
        Architecture::Mlp {
            layers,
            hidden_dim: 16,
        },
        0.0,
    )
    .unwrap()
}

#[test]
fn schedule_is_step_decay() {
    let cfg = TrainConfig {
        learning_rate: 0.1,
        scheduler_step_size: 3,
        gamma: 0.5,
        ..TrainConfig::default()
    };
    let lrs: Vec<f64> = (0..7).map(|e| cfg.learning_rate_at(e)).collect();
    assert_eq!(lrs, [0.1, 0.1, 0.1, 0.05, 0.05, 0.05, 0.025]);
    let flat = TrainConfig { gamma: 1.0, ..cfg.clone() };
    assert!((0..50).all(|e| flat.learning_rate_at(e) == 0.1));
    let warm = TrainConfig {
        warmup_epochs: 4,
        ..flat
    };
    assert_eq!(warm.learning_rate_at(0), 0.025);
    assert_eq!(warm.learning_rate_at(3), 0.1);
}

#[test]
fn config_validation() {
    let ok = TrainConfig::default();
    ok.validate().unwrap();
    for bad in [
        TrainConfig { learning_rate: 0.0, ..ok.clone() },
        TrainConfig { gamma: 0.0, ..ok.clone() },
        TrainConfig { gamma: 1.5, ..ok.clone() },
        TrainConfig { batch_size: 0, ..ok.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(TrainError::InvalidConfig(_))));
    }
}

#[test]
fn mlp_fits_small_separable_set() {
    let ds = dataset(10, 150, 1);
    let m = manifest(&ds);
    let task = Task::new(&ds.records, &m, &Taxonomy::builtin()).unwrap();
    assert_eq!(task.classes.len(), 6);
    let cfg = TrainConfig {
        learning_rate: 1e-4,
        epochs: 200,
        batch_size: 8,
        gamma: 1.0,
        seed: 4,
        ..TrainConfig::default()
    };
    let (_, history) = train(&task, &mlp(&task, 1), &cfg).unwrap();
    let best = history.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max);
    assert_eq!(best, 1.0, "{:?}", history.epochs.iter().map(|e| (e.train_loss, e.train_accuracy)).collect::<Vec<_>>());
    assert!(history.epochs.iter().all(|e| e.learning_rate == 1e-4));
    assert_eq!(history.argmax_val_mcc(), Some(history.best_epoch));
}

#[test]
fn identical_seeds_give_identical_parameters() {
    let ds = dataset(4, 12, 2);
    let m = manifest(&ds);
    let task = Task::new(&ds.records, &m, &Taxonomy::builtin()).unwrap();
    let mut config = mlp(&task, 1);
    config.dropout = 0.3;
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let (a, ha) = train(&task, &config, &cfg).unwrap();
    let (b, hb) = train(&task, &config, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(ha, hb);
    let (c, _) = train(&task, &config, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn convex_problem_loss_is_non_increasing() {
    let ds = dataset(4, 4, 3);
    let m = manifest(&ds);
    let task = Task::new(&ds.records, &m, &Taxonomy::builtin()).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-4,
        epochs: 40,
        batch_size: task.train.len(),
        gamma: 1.0,
        seed: 5,
        ..TrainConfig::default()
    };
    let (_, history) = train(&task, &mlp(&task, 0), &cfg).unwrap();
    for w in history.epochs.windows(2) {
        assert!(w[1].train_loss <= w[0].train_loss, "{} > {}", w[1].train_loss, w[0].train_loss);
    }
}

#[test]
fn inverse_frequency_is_neutral_on_balanced_batches() {
    let logits = Tensor::from_rows(&[&[0.3, -1.0, 2.0], &[1.0, 0.0, 0.5], &[-0.2, 0.4, 0.1]]);
    let targets = [0, 1, 2];
    let ds = dataset(3, 4, 4);
    let m = manifest(&ds);
    let task = Task::new(&ds.records, &m, &Taxonomy::builtin()).unwrap();
    let weights = class_weights(&task.train, task.classes.len(), ClassWeighting::InverseFrequency).unwrap();
    assert!(weights.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    let (plain, _) = softmax_cross_entropy(&logits, &targets, None).unwrap();
    let (weighted, _) = softmax_cross_entropy(&logits, &targets, Some(&weights[..3])).unwrap();
    assert!((plain - weighted).abs() < 1e-12);
}

#[test]
fn final_fit_uses_train_and_val_only() {
    let ds = dataset(5, 8, 5);
    let m = manifest(&ds);
    let task = Task::new(&ds.records, &m, &Taxonomy::builtin()).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        seed: 1,
        ..TrainConfig::default()
    };
    let fit = final_fit(&task, &mlp(&task, 1), &cfg, 2).unwrap();
    assert_eq!(fit.trained_ids.len(), m.train.len() + m.val.len());
    let test: BTreeSet<&String> = m.test.iter().collect();
    assert!(fit.trained_ids.iter().all(|id| !test.contains(id)));
    assert_eq!(fit.model.provenance.epochs, 2);
}

#[test]
fn baseline_predicts_training_majority() {
    let mut ds = dataset(4, 4, 6);
    // Make class 0 the majority of the training split.
    let extra: Vec<_> = ds.records[..4]
        .iter()
        .enumerate()
        .map(|(i, r)| SignRecord {
            video_id: format!("extra{i}"),
            ..r.clone()
        })
        .collect();
    ds.records.extend(extra);
    let m = manifest(&ds);
    let task = Task::new(&ds.records, &m, &Taxonomy::builtin()).unwrap();
    let config = task.model_config(Architecture::Baseline, 0.0).unwrap();
    let (model, history) = train(&task, &config, &TrainConfig::default()).unwrap();
    assert_eq!(model.majority, 0);
    let report = evaluate(&model, &task, Partition::Test, "baseline", 0.05).unwrap();
    let majority_code = &task.classes[0];
    let expected = task.test.iter().filter(|s| s.record.label.get(task.property) == majority_code).count() as f64
        / task.test.len() as f64;
    assert_eq!(report.metrics.accuracy, expected);
    assert_eq!(history.epochs.len(), 1);
}

#[test]
fn empty_validation_split_is_rejected() {
    let ds = dataset(3, 4, 7);
    let mut m = manifest(&ds);
    m.val.clear();
    let task = Task::new(&ds.records, &m, &Taxonomy::builtin()).unwrap();
    let err = train(&task, &mlp(&task, 1), &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, TrainError::EmptySplit(Partition::Val)));
}

fn tiny_space(learning_rate: Vec<f64>, budget: usize) -> SearchSpace {
    SearchSpace {
        architecture: ArchitectureSpace::Mlp {
            layers: vec![1],
            hidden_dim: vec![8],
        },
        learning_rate,
        scheduler_step_size: vec![5],
        gamma: vec![1.0],
        epochs: vec![4],
        batch_size: vec![8],
        dropout: vec![0.0],
        warmup_epochs: vec![0],
        budget,
    }
}

#[test]
fn search_budget_one_returns_the_sampled_config() {
    let ds = dataset(4, 6, 8);
    let m = manifest(&ds);
    let task = Task::new(&ds.records, &m, &Taxonomy::builtin()).unwrap();
    let out = search(&task, &tiny_space(vec![1e-3], 1), 11).unwrap();
    assert_eq!(out.trials.len(), 1);
    assert_eq!(out.best_trial, 0);
    assert_eq!(out.best_train.learning_rate, 1e-3);
}

#[test]
fn search_skips_diverging_trials() {
    let ds = dataset(4, 6, 9);
    let m = manifest(&ds);
    let task = Task::new(&ds.records, &m, &Taxonomy::builtin()).unwrap();
    let out = search(&task, &tiny_space(vec![1e-3, 1e308], 2), 12).unwrap();
    assert_eq!(out.trials.len(), 2);
    assert_eq!(out.best_train.learning_rate, 1e-3);
    let aborted: Vec<_> = out.trials.iter().filter(|t| t.status == TrialStatus::Aborted).collect();
    assert_eq!(aborted.len(), 1);
    assert_eq!(aborted[0].train.learning_rate, 1e308);
    assert_eq!(out.trial_log().lines().count(), 2);

    assert!(matches!(
        search(&task, &tiny_space(vec![1e308], 1), 12),
        Err(TrainError::NoSuccessfulTrial)
    ));
    assert!(search(&task, &tiny_space(vec![], 1), 12).is_err());
}

#[test]
fn baseline_seed_study_has_zero_spread() {
    let ds = dataset(4, 4, 10);
    let m = manifest(&ds);
    let task = Task::new(&ds.records, &m, &Taxonomy::builtin()).unwrap();
    let config = task.model_config(Architecture::Baseline, 0.0).unwrap();
    let study = seed_study(&task, &config, &TrainConfig::default(), 5).unwrap();
    assert_eq!(study.runs.len(), 5);
    assert_eq!(study.std, 0.0);
    assert!(study.formatted().ends_with("± 0.00"));
    assert!(seed_study(&task, &config, &TrainConfig::default(), 1).is_err());
}

#[test]
fn seed_study_uses_sample_deviation() {
    let runs = [0.8, 0.9, 0.85]
        .iter()
        .enumerate()
        .map(|(i, &a)| SeedRun {
            seed: i as u64,
            best_epoch: 0,
            test_accuracy: a,
        })
        .collect();
    let s = SeedStudy::from_runs(runs);
    assert!((s.mean - 0.85).abs() < 1e-12);
    assert!((s.std - 0.05).abs() < 1e-12);
    assert_eq!(s.formatted(), "85.00 ± 5.00");
}
