use serde::{Deserialize, Serialize};

use super::{evaluate, final_fit, train, Task, TrainConfig, TrainError};
use crate::models::{Architecture, CellKind};
use crate::rng::SplitMix64;
use crate::splits::Partition;
use crate::models::ModelConfig;

fn two() -> Vec<usize> {
    vec![2]
}

fn one() -> Vec<usize> {
    vec![1]
}

fn yes() -> Vec<bool> {
    vec![true]
}

fn zero() -> Vec<usize> {
    vec![0]
}

/// Candidate structural hyperparameters of one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ArchitectureSpace {
    Baseline,
    Mlp {
        layers: Vec<usize>,
        hidden_dim: Vec<usize>,
    },
    Rnn {
        cell: Vec<CellKind>,
        layers: Vec<usize>,
        hidden_dim: Vec<usize>,
    },
    Stgcn {
        blocks: Vec<usize>,
        channels: Vec<usize>,
        temporal_kernel: Vec<usize>,
        #[serde(default = "two")]
        stride: Vec<usize>,
        #[serde(default = "one")]
        groups: Vec<usize>,
        #[serde(default = "yes")]
        residual: Vec<bool>,
    },
}

impl ArchitectureSpace {
    fn radices(&self) -> Vec<usize> {
        match self {
            ArchitectureSpace::Baseline => vec![],
            ArchitectureSpace::Mlp { layers, hidden_dim } => vec![layers.len(), hidden_dim.len()],
            ArchitectureSpace::Rnn {
                cell,
                layers,
                hidden_dim,
            } => vec![cell.len(), layers.len(), hidden_dim.len()],
            ArchitectureSpace::Stgcn {
                blocks,
                channels,
                temporal_kernel,
                stride,
                groups,
                residual,
            } => vec![
                blocks.len(),
                channels.len(),
                temporal_kernel.len(),
                stride.len(),
                groups.len(),
                residual.len(),
            ],
        }
    }

    fn decode(&self, d: &[usize]) -> Architecture {
        match self {
            ArchitectureSpace::Baseline => Architecture::Baseline,
            ArchitectureSpace::Mlp { layers, hidden_dim } => Architecture::Mlp {
                layers: layers[d[0]],
                hidden_dim: hidden_dim[d[1]],
            },
            ArchitectureSpace::Rnn {
                cell,
                layers,
                hidden_dim,
            } => Architecture::Rnn {
                cell: cell[d[0]],
                layers: layers[d[1]],
                hidden_dim: hidden_dim[d[2]],
            },
            ArchitectureSpace::Stgcn {
                blocks,
                channels,
                temporal_kernel,
                stride,
                groups,
                residual,
            } => Architecture::Stgcn {
                blocks: blocks[d[0]],
                channels: channels[d[1]],
                temporal_kernel: temporal_kernel[d[2]],
                stride: stride[d[3]],
                groups: groups[d[4]],
                residual: residual[d[5]],
            },
        }
    }
}

/// Finite candidate sets for every searched hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub architecture: ArchitectureSpace,
    pub learning_rate: Vec<f64>,
    pub scheduler_step_size: Vec<usize>,
    pub gamma: Vec<f64>,
    pub epochs: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub dropout: Vec<f64>,
    #[serde(default = "zero")]
    pub warmup_epochs: Vec<usize>,
    /// Number of trials.
    pub budget: usize,
}

impl SearchSpace {
    /// Declared default candidate sets for a family name.
    pub fn default_for(family: &str) -> Option<SearchSpace> {
        let architecture = match family {
            "baseline" => ArchitectureSpace::Baseline,
            "mlp" => ArchitectureSpace::Mlp {
                layers: vec![1, 2, 3],
                hidden_dim: vec![64, 128, 256],
            },
            "rnn" => ArchitectureSpace::Rnn {
                cell: vec![CellKind::Gru, CellKind::Lstm],
                layers: vec![1, 2],
                hidden_dim: vec![32, 64, 128],
            },
            "stgcn" => ArchitectureSpace::Stgcn {
                blocks: vec![2, 3],
                channels: vec![16, 32],
                temporal_kernel: vec![5, 9],
                stride: two(),
                groups: one(),
                residual: yes(),
            },
            _ => return None,
        };
        Some(SearchSpace {
            architecture,
            learning_rate: vec![1e-4, 3e-4, 1e-3, 3e-3],
            scheduler_step_size: vec![5, 10, 20],
            gamma: vec![0.1, 0.5, 1.0],
            epochs: vec![30],
            batch_size: vec![32],
            dropout: vec![0.0, 0.2, 0.5],
            warmup_epochs: zero(),
            budget: 20,
        })
    }

    fn radices(&self) -> Vec<usize> {
        let mut r = self.architecture.radices();
        r.extend([
            self.learning_rate.len(),
            self.scheduler_step_size.len(),
            self.gamma.len(),
            self.epochs.len(),
            self.batch_size.len(),
            self.dropout.len(),
            self.warmup_epochs.len(),
        ]);
        r
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.budget == 0 {
            return Err(TrainError::InvalidConfig("search budget must be at least 1".into()));
        }
        if self.radices().contains(&0) {
            return Err(TrainError::InvalidConfig("every candidate set must be non-empty".into()));
        }
        Ok(())
    }

    /// Number of distinct configurations (saturating).
    pub fn grid_size(&self) -> usize {
        self.radices().iter().fold(1usize, |acc, &r| acc.saturating_mul(r))
    }

    fn decode(&self, mut index: usize) -> (Architecture, TrainConfig, f64) {
        let radices = self.radices();
        let digits: Vec<usize> = radices
            .iter()
            .map(|&r| {
                let d = index % r;
                index /= r;
                d
            })
            .collect();
        let a = self.architecture.radices().len();
        let d = &digits[a..];
        let cfg = TrainConfig {
            learning_rate: self.learning_rate[d[0]],
            scheduler_step_size: self.scheduler_step_size[d[1]],
            gamma: self.gamma[d[2]],
            epochs: self.epochs[d[3]],
            batch_size: self.batch_size[d[4]],
            warmup_epochs: self.warmup_epochs[d[6]],
            ..TrainConfig::default()
        };
        (self.architecture.decode(&digits[..a]), cfg, self.dropout[d[5]])
    }
}

/// Largest grid enumerated exactly; bigger grids are sampled by rejection.
const ENUMERABLE_GRID: usize = 1 << 20;

/// `count` grid indices: a seeded permutation of the grid, cycled when the
/// budget exceeds the grid, so small grids are covered exhaustively.
fn sample_indices(grid: usize, count: usize, rng: &mut SplitMix64) -> Vec<usize> {
    if grid <= ENUMERABLE_GRID {
        let mut all: Vec<usize> = (0..grid).collect();
        rng.shuffle(&mut all);
        return (0..count).map(|i| all[i % grid]).collect();
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = rng.below(grid);
        if seen.insert(i) {
            out.push(i);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    /// Training diverged; the trial is skipped.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub status: TrialStatus,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub val_mcc: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best_trial: usize,
    pub best_model: ModelConfig,
    pub best_train: TrainConfig,
    pub trials: Vec<TrialRecord>,
}

impl SearchOutcome {
    /// One JSON object per trial.
    pub fn trial_log(&self) -> String {
        self.trials
            .iter()
            .map(|t| serde_json::to_string(t).expect("trial serializes") + "\n")
            .collect()
    }
}

/// Seeded random search maximizing validation MCC; ties go to the earliest
/// trial. Diverging trials are logged as aborted and skipped.
pub fn search(task: &Task, space: &SearchSpace, seed: u64) -> Result<SearchOutcome, TrainError> {
    space.validate()?;
    let mut rng = SplitMix64::keyed(seed, b"search");
    let indices = sample_indices(space.grid_size(), space.budget, &mut rng);
    let mut trials = Vec::with_capacity(indices.len());
    let mut best: Option<(f64, usize)> = None;
    for (trial, index) in indices.into_iter().enumerate() {
        let (architecture, mut cfg, dropout) = space.decode(index);
        // 63 bits so the seed survives a TOML round trip (signed 64-bit integers).
        cfg.seed = rng.next_u64() >> 1;
        let model = task.model_config(architecture, dropout)?;
        let record = match train(task, &model, &cfg) {
            Ok((_, history)) => {
                let mcc = history.epochs[history.best_epoch].val_mcc;
                if best.is_none_or(|(b, _)| mcc > b) {
                    best = Some((mcc, trial));
                }
                TrialRecord {
                    trial,
                    status: TrialStatus::Ok,
                    model,
                    train: cfg,
                    val_mcc: Some(mcc),
                    best_epoch: Some(history.best_epoch),
                    error: None,
                }
            }
            Err(e @ TrainError::NonFiniteLoss { .. }) => {
                log::warn!("trial {trial} aborted: {e}");
                TrialRecord {
                    trial,
                    status: TrialStatus::Aborted,
                    model,
                    train: cfg,
                    val_mcc: None,
                    best_epoch: None,
                    error: Some(e.to_string()),
                }
            }
            Err(e) => return Err(e),
        };
        log::info!("trial {trial}: {:?} val mcc {:?}", record.status, record.val_mcc);
        trials.push(record);
    }
    let (_, best_trial) = best.ok_or(TrainError::NoSuccessfulTrial)?;
    Ok(SearchOutcome {
        best_trial,
        best_model: trials[best_trial].model.clone(),
        best_train: trials[best_trial].train.clone(),
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub best_epoch: usize,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStudy {
    pub runs: Vec<SeedRun>,
    /// Mean test accuracy, as a fraction.
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator), as a fraction.
    pub std: f64,
}

impl SeedStudy {
    pub fn from_runs(runs: Vec<SeedRun>) -> SeedStudy {
        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.test_accuracy).sum::<f64>() / n;
        let var = runs.iter().map(|r| (r.test_accuracy - mean).powi(2)).sum::<f64>() / (n - 1.0);
        SeedStudy {
            runs,
            mean,
            std: var.sqrt(),
        }
    }

    /// Percentages with two decimals, e.g. `84.12 ± 0.29`.
    pub fn formatted(&self) -> String {
        format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// Repeats the full protocol (validation selection, refit on train ∪ val,
/// one test evaluation) for seeds `base, base + 1, …`.
pub fn seed_study(task: &Task, model: &ModelConfig, cfg: &TrainConfig, n_seeds: usize) -> Result<SeedStudy, TrainError> {
    if n_seeds < 2 {
        return Err(TrainError::InvalidConfig("a seed study needs at least 2 seeds".into()));
    }
    let mut runs = Vec::with_capacity(n_seeds);
    for i in 0..n_seeds {
        let cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        let (_, history) = train(task, model, &cfg)?;
        let fit = final_fit(task, model, &cfg, history.best_epoch + 1)?;
        let report = evaluate(&fit.model, task, Partition::Test, model.architecture.family(), 0.05)?;
        log::info!("seed {}: test accuracy {:.4}", cfg.seed, report.metrics.accuracy);
        runs.push(SeedRun {
            seed: cfg.seed,
            best_epoch: history.best_epoch,
            test_accuracy: report.metrics.accuracy,
        });
    }
    Ok(SeedStudy::from_runs(runs))
}
