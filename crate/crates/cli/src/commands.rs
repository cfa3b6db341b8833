use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use ppr_core::eval::{
    agreement, cross_task_misclassification, render_csv, render_table, EvalError, EvalReport, TaskErrors,
};
use ppr_core::ingest::{build_dataset, parse_lexicon, parse_video_index, BuildOptions, IngestError};
use ppr_core::models::{load_checkpoint, save_checkpoint, Architecture, ModelError};
use ppr_core::phonology::PhonologyError;
use ppr_core::splits::{metadata_hash, split, verify_split, Partition, SplitError, SplitManifest, SplitSpec, DEFAULT_RATIOS};
use ppr_core::synthetic::{synthetic_label, write_raw_corpus, RawGloss};
use ppr_core::train::{evaluate, final_fit, search, seed_study, SearchSpace, Task, TrainConfig, TrainError};
use ppr_core::{Dataset, Taxonomy};

use crate::config::{ConfigError, ExperimentConfig, ModelSection};
use crate::output::{Locked, OutDir};
use crate::{Command, TaskArgs, DATA_ROOT_ENV};

/// Machine-parsable category of an error, from the first recognised cause.
pub fn error_code(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<IngestError>() {
            return "ingest";
        }
        if let Some(s) = cause.downcast_ref::<SplitError>() {
            return match s {
                SplitError::InvalidRatios(_) | SplitError::UnknownMode(_) => "usage",
                _ => "split",
            };
        }
        if cause.is::<TrainError>() {
            return "train";
        }
        if cause.is::<ModelError>() {
            return "model";
        }
        if cause.is::<EvalError>() {
            return "eval";
        }
        if cause.is::<PhonologyError>() {
            return "phonology";
        }
        if cause.is::<ConfigError>() {
            return "config";
        }
        if cause.is::<Locked>() {
            return "lock";
        }
    }
    if e.chain().any(|c| c.is::<std::io::Error>()) {
        "io"
    } else {
        "internal"
    }
}

pub fn run(command: Command) -> anyhow::Result<()> {
    let (common, name) = match &command {
        Command::Build { common, .. } => (common, "build"),
        Command::Split { common, .. } => (common, "split"),
        Command::Train { common, .. } => (common, "train"),
        Command::Search { common, .. } => (common, "search"),
        Command::SeedStudy { common, .. } => (common, "seed-study"),
        Command::Eval { common, .. } => (common, "eval"),
        Command::Analyze { common, .. } => (common, "analyze"),
        Command::Report { common, .. } => (common, "report"),
        Command::Taxonomy { common } => (common, "taxonomy"),
        Command::Synth { common, .. } => (common, "synth"),
    };
    let config = ExperimentConfig::load_optional(common.config.as_deref())?;
    let out = OutDir::open(&common.out)?;
    out.log(&format!("{name} started"));
    let result = dispatch(command, &config, &out);
    match &result {
        Ok(()) => out.log(&format!("{name} finished")),
        Err(e) => out.log(&format!("{name} failed: {e:#}")),
    }
    result
}

fn dispatch(command: Command, config: &ExperimentConfig, out: &OutDir) -> anyhow::Result<()> {
    match command {
        Command::Build {
            lexicon,
            index,
            keypoints,
            data_root,
            tracker,
            no_normalize_coords,
            ..
        } => {
            let from_root = |explicit: Option<PathBuf>, configured: &Option<PathBuf>, file: &str| {
                explicit
                    .or_else(|| configured.clone())
                    .or_else(|| data_root.as_ref().map(|r| if file.is_empty() { r.clone() } else { r.join(file) }))
                    .ok_or_else(|| {
                        ConfigError::Invalid(format!("no {} path: pass a flag or set {DATA_ROOT_ENV}", if file.is_empty() { "keypoint root" } else { file }))
                    })
            };
            let lexicon = from_root(lexicon, &config.paths.lexicon, "lexicon.csv")?;
            let index = from_root(index, &config.paths.index, "index.csv")?;
            let keypoints = match from_root(keypoints, &config.paths.keypoints, "") {
                Ok(p) => p,
                Err(_) => index.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            let options = BuildOptions {
                tracker: tracker.or(config.tracker),
                normalize_coords: !no_normalize_coords,
                ..BuildOptions::default()
            };
            cmd_build(&lexicon, &index, &keypoints, &options, out)
        }
        Command::Split {
            dataset,
            property,
            mode,
            ratios,
            seed,
            ..
        } => {
            let dataset = required(dataset, &config.paths.dataset, "dataset")?;
            let property = property
                .or(config.property)
                .ok_or_else(|| ConfigError::Invalid("no property: pass --property".into()))?;
            let spec = SplitSpec {
                property,
                mode: mode.or(config.mode).unwrap_or(ppr_core::SplitMode::Phoneme),
                ratios: ratios.or(config.ratios).unwrap_or(DEFAULT_RATIOS),
                seed: seed.or(config.seed).unwrap_or(0),
            };
            cmd_split(&dataset, &spec, out)
        }
        Command::Train {
            task,
            family,
            seed,
            final_fit,
            ..
        } => {
            let (model, train) = model_and_train(config, family.as_deref(), seed)?;
            cmd_train(&task, config, &model, &train, final_fit, out)
        }
        Command::Search {
            task,
            family,
            budget,
            seed,
            ..
        } => {
            let mut space = match (&config.search, family.as_deref()) {
                (Some(space), _) => space.clone(),
                (None, family) => {
                    let family = family.unwrap_or("mlp");
                    SearchSpace::default_for(family).ok_or_else(|| ConfigError::Invalid(format!("unknown model family {family:?}")))?
                }
            };
            if let Some(b) = budget {
                space.budget = b;
            }
            let seed = seed.or(config.seed).unwrap_or(0);
            cmd_search(&task, config, &space, seed, out)
        }
        Command::SeedStudy { task, family, seeds, .. } => {
            let (model, train) = model_and_train(config, family.as_deref(), None)?;
            cmd_seed_study(&task, config, &model, &train, seeds, out)
        }
        Command::Eval {
            task,
            model,
            partition,
            alpha,
            name,
            ..
        } => cmd_eval(&task, config, &model, partition, alpha, name, out),
        Command::Analyze { reports, .. } => cmd_analyze(&reports, out),
        Command::Report { reports, .. } => cmd_report(&reports, out),
        Command::Taxonomy { .. } => {
            let path = out.path("taxonomy.json");
            Taxonomy::builtin().save(&path).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Synth {
            classes,
            videos,
            frames,
            tracker,
            seed,
            ..
        } => cmd_synth(&classes, &videos, frames, tracker, seed, out),
    }
}

fn required(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| ConfigError::Invalid(format!("no {what} path: pass --{what} or set paths.{what}")).into())
}

fn model_and_train(
    config: &ExperimentConfig,
    family: Option<&str>,
    seed: Option<u64>,
) -> anyhow::Result<(ModelSection, TrainConfig)> {
    let model = match (&config.model, family) {
        (Some(m), None) => m.clone(),
        (Some(m), Some(f)) if m.architecture.family() == f => m.clone(),
        (_, family) => {
            let family = family.unwrap_or("mlp");
            ModelSection {
                architecture: Architecture::default_for(family)
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown model family {family:?}")))?,
                dropout: 0.0,
            }
        }
    };
    let mut train = config.train.clone().unwrap_or_default();
    if let Some(s) = seed.or(config.seed) {
        train.seed = s;
    }
    Ok((model, train))
}

fn cmd_build(lexicon: &Path, index: &Path, keypoints: &Path, options: &BuildOptions, out: &OutDir) -> anyhow::Result<()> {
    let taxonomy = Taxonomy::builtin();
    let lexicon = parse_lexicon(lexicon, &taxonomy)?;
    let index = parse_video_index(index)?;
    let (dataset, report) = build_dataset(&lexicon, &index, keypoints, options)?;
    let path = out.path("dataset.json");
    dataset.save(&path)?;
    out.write_json("join_report.json", &report)?;
    println!(
        "matched {} videos across {} glosses ({} lexicon glosses and {} index glosses unmatched)",
        report.matched_videos,
        report.matched_glosses,
        report.unmatched_lexicon_glosses.len(),
        report.unmatched_index_glosses.len()
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn load_manifest(path: &Path) -> anyhow::Result<SplitManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        }
        .into()
    })
}

fn cmd_split(dataset: &Path, spec: &SplitSpec, out: &OutDir) -> anyhow::Result<()> {
    let dataset = Dataset::load(dataset)?;
    let manifest = split(&dataset.records, spec)?;
    let report = verify_split(&manifest, &dataset.records);
    if !report.is_valid() {
        bail!("generated split failed verification: {:?}", report.violations);
    }
    let path = out.write("split.json", manifest.to_json())?;
    let mut table = format!("{:<24} {:>6} {:>6} {:>6}\n", spec.property.as_str(), "train", "val", "test");
    for (class, counts) in &report.class_counts {
        let _ = writeln!(table, "{:<24} {:>6} {:>6} {:>6}", class, counts[0], counts[1], counts[2]);
    }
    print!("{table}");
    println!("wrote {}", path.display());
    Ok(())
}

/// Dataset and manifest of a task; the manifest must belong to the dataset.
fn load_task_inputs(args: &TaskArgs, config: &ExperimentConfig) -> anyhow::Result<(Dataset, SplitManifest)> {
    let dataset_path = required(args.dataset.clone(), &config.paths.dataset, "dataset")?;
    let split_path = required(args.split.clone(), &config.paths.split, "split")?;
    let dataset = Dataset::load(&dataset_path)?;
    let manifest = load_manifest(&split_path)?;
    if manifest.dataset_hash != metadata_hash(&dataset.records) {
        return Err(ConfigError::Invalid(format!(
            "{} was not generated from {}",
            split_path.display(),
            dataset_path.display()
        ))
        .into());
    }
    Ok((dataset, manifest))
}

fn cmd_train(
    args: &TaskArgs,
    config: &ExperimentConfig,
    section: &ModelSection,
    cfg: &TrainConfig,
    refit: bool,
    out: &OutDir,
) -> anyhow::Result<()> {
    let (dataset, manifest) = load_task_inputs(args, config)?;
    let task = Task::new(&dataset.records, &manifest, &Taxonomy::builtin())?;
    let model_config = task.model_config(section.architecture.clone(), section.dropout)?;
    let (model, history) = ppr_core::train::train(&task, &model_config, cfg)?;
    out.write("history.jsonl", history.to_jsonl())?;
    let best = &history.epochs[history.best_epoch];
    println!(
        "best epoch {} of {}: val accuracy {:.4}, val mcc {:.4}",
        history.best_epoch,
        history.epochs.len(),
        best.val_accuracy,
        best.val_mcc
    );
    let model = if refit {
        let fit = final_fit(&task, &model_config, cfg, history.best_epoch + 1)?;
        out.write_json("trained_ids.json", &fit.trained_ids)?;
        println!("refit on {} train+val videos for {} epochs", fit.trained_ids.len(), history.best_epoch + 1);
        fit.model
    } else {
        model
    };
    let resolved = ExperimentConfig {
        property: Some(task.property),
        mode: Some(task.mode),
        tracker: task.tracker,
        model: Some(section.clone()),
        train: Some(cfg.clone()),
        ..ExperimentConfig::default()
    };
    out.write("experiment.toml", resolved.to_toml())?;
    let path = out.path("model.ckpt");
    save_checkpoint(&model, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_search(args: &TaskArgs, config: &ExperimentConfig, space: &SearchSpace, seed: u64, out: &OutDir) -> anyhow::Result<()> {
    let (dataset, manifest) = load_task_inputs(args, config)?;
    let task = Task::new(&dataset.records, &manifest, &Taxonomy::builtin())?;
    let outcome = search(&task, space, seed)?;
    out.write("trials.jsonl", outcome.trial_log())?;
    let best = ExperimentConfig {
        property: Some(task.property),
        mode: Some(task.mode),
        tracker: task.tracker,
        model: Some(ModelSection {
            architecture: outcome.best_model.architecture.clone(),
            dropout: outcome.best_model.dropout,
        }),
        train: Some(outcome.best_train.clone()),
        ..ExperimentConfig::default()
    };
    let path = out.write("best.toml", best.to_toml())?;
    let aborted = outcome.trials.iter().filter(|t| t.val_mcc.is_none()).count();
    println!(
        "{} trials ({} aborted); best trial {} with val mcc {:.4}",
        outcome.trials.len(),
        aborted,
        outcome.best_trial,
        outcome.trials[outcome.best_trial].val_mcc.unwrap_or(f64::NAN)
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_seed_study(
    args: &TaskArgs,
    config: &ExperimentConfig,
    section: &ModelSection,
    cfg: &TrainConfig,
    seeds: usize,
    out: &OutDir,
) -> anyhow::Result<()> {
    let (dataset, manifest) = load_task_inputs(args, config)?;
    let task = Task::new(&dataset.records, &manifest, &Taxonomy::builtin())?;
    let model_config = task.model_config(section.architecture.clone(), section.dropout)?;
    let study = seed_study(&task, &model_config, cfg, seeds)?;
    let path = out.write_json("seed_study.json", &study)?;
    println!("{} test accuracy over {} seeds: {}", section.architecture.family(), seeds, study.formatted());
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_eval(
    args: &TaskArgs,
    config: &ExperimentConfig,
    model: &Path,
    partition: Partition,
    alpha: f64,
    name: Option<String>,
    out: &OutDir,
) -> anyhow::Result<()> {
    let (dataset, manifest) = load_task_inputs(args, config)?;
    let task = Task::new(&dataset.records, &manifest, &Taxonomy::builtin())?;
    let model = load_checkpoint(model)?;
    if model.provenance.split_hash != task.split_hash {
        log::warn!("checkpoint was trained on a different dataset");
    }
    let label = name.unwrap_or_else(|| model.config.architecture.family().to_string());
    let report = evaluate(&model, &task, partition, &label, alpha)?;
    let path = out.path("report.json");
    report.save(&path)?;
    let m = &report.metrics;
    println!(
        "{label} on {partition}: A {:.2} ± {:.2}, Ā {:.2}, P {:.2}/{:.2}, R {:.2}/{:.2}, MCC {:.4}",
        100.0 * m.accuracy,
        100.0 * report.ci_half_width,
        100.0 * m.balanced_accuracy,
        100.0 * m.micro_precision,
        100.0 * m.macro_precision,
        100.0 * m.micro_recall,
        100.0 * m.macro_recall,
        m.mcc
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn load_reports(paths: &[PathBuf]) -> anyhow::Result<Vec<EvalReport>> {
    paths.iter().map(|p| Ok(EvalReport::load(p)?)).collect()
}

fn task_key(r: &EvalReport) -> String {
    match r.tracker {
        Some(t) => format!("{}/{}/{}", r.property, r.mode, t),
        None => format!("{}/{}", r.property, r.mode),
    }
}

fn cmd_analyze(paths: &[PathBuf], out: &OutDir) -> anyhow::Result<()> {
    let reports = load_reports(paths)?;
    let mut groups: BTreeMap<String, Vec<EvalReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(task_key(&r)).or_default().push(r);
    }
    let mut agreements = Vec::new();
    let mut tasks = Vec::new();
    for (key, group) in &groups {
        let joint = if group.len() >= 2 {
            let a = agreement(group)?;
            match a.kappa {
                Some(k) => println!("{key}: κ = {k:.4} over {} jointly misclassified videos", a.joint.ids.len()),
                None => println!("{key}: κ undefined over {} jointly misclassified videos", a.joint.ids.len()),
            }
            if !a.joint.ids.is_empty() {
                println!("  {}", a.joint.ids.join(" "));
            }
            let ids = a.joint.ids.iter().cloned().collect();
            agreements.push(a);
            ids
        } else {
            println!("{key}: one report, no agreement computed");
            group[0]
                .predictions
                .iter()
                .filter(|p| p.truth != p.predicted)
                .map(|p| p.video_id.clone())
                .collect()
        };
        tasks.push(TaskErrors {
            task: key.clone(),
            test_ids: group[0].predictions.iter().map(|p| p.video_id.clone()).collect(),
            joint,
        });
    }
    out.write_json("agreement.json", &agreements)?;
    if tasks.len() >= 2 {
        let rates = cross_task_misclassification(&tasks)?;
        for r in &rates {
            match r.rate {
                Some(rate) => println!("in {} test sets: {}/{} jointly misclassified ({:.1}%)", r.m, r.jointly_misclassified, r.videos, 100.0 * rate),
                None => println!("in {} test sets: no videos", r.m),
            }
        }
        out.write_json("cross_task.json", &rates)?;
    }
    println!("wrote {}", out.path("agreement.json").display());
    Ok(())
}

fn cmd_report(paths: &[PathBuf], out: &OutDir) -> anyhow::Result<()> {
    let reports = load_reports(paths)?;
    let table = render_table(&reports);
    out.write("table.txt", &table)?;
    out.write("table.csv", render_csv(&reports))?;
    print!("{table}");
    Ok(())
}

fn cmd_synth(
    classes: &[usize],
    videos: &[usize],
    frames: usize,
    tracker: ppr_core::TrackerKind,
    seed: u64,
    out: &OutDir,
) -> anyhow::Result<()> {
    if videos.len() != 1 && videos.len() != classes.len() {
        return Err(ConfigError::Invalid(format!("{} video counts for {} glosses", videos.len(), classes.len())).into());
    }
    if frames == 0 {
        return Err(ConfigError::Invalid("frames must be positive".into()).into());
    }
    let taxonomy = Taxonomy::builtin();
    let glosses: Vec<RawGloss> = classes
        .iter()
        .enumerate()
        .map(|(i, &class)| RawGloss {
            gloss: format!("GLOSS{i}"),
            class,
            label: synthetic_label(class, &taxonomy),
            videos: if videos.len() == 1 { videos[0] } else { videos[i] },
        })
        .collect();
    write_raw_corpus(&out.path(""), &glosses, frames, tracker, seed)?;
    println!(
        "wrote {} glosses and {} videos to {}",
        glosses.len(),
        glosses.iter().map(|g| g.videos).sum::<usize>(),
        out.path("").display()
    );
    Ok(())
}
