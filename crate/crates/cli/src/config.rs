//! TOML experiment configuration. Every field is optional; command-line
//! flags take precedence over the file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use ppr_core::models::Architecture;
use ppr_core::train::{SearchSpace, TrainConfig};
use ppr_core::{PropertyKind, SplitMode, TrackerKind};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub lexicon: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub keypoints: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub split: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    #[serde(default)]
    pub dropout: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub property: Option<PropertyKind>,
    pub tracker: Option<TrackerKind>,
    pub mode: Option<SplitMode>,
    pub ratios: Option<[f64; 3]>,
    pub seed: Option<u64>,
    pub paths: Paths,
    pub model: Option<ModelSection>,
    pub train: Option<TrainConfig>,
    pub search: Option<SearchSpace>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| {
            ConfigError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            }
            .into()
        })
    }

    pub fn load_optional(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
        path.map_or_else(|| Ok(ExperimentConfig::default()), ExperimentConfig::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// `"a,b,c"` → three ratios.
pub fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated ratios, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("invalid ratio {p:?}"))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_parse() {
        assert_eq!(parse_ratios("0.7, 0.15,0.15").unwrap(), [0.7, 0.15, 0.15]);
        assert!(parse_ratios("0.5,0.5").is_err());
        assert!(parse_ratios("a,b,c").is_err());
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
property = "movement"
tracker = "pose2d"
mode = "gloss"
ratios = [0.8, 0.1, 0.1]
seed = 3

[paths]
dataset = "out/dataset.json"

[model]
dropout = 0.2
[model.architecture]
family = "mlp"
layers = 2
hidden_dim = 64

[train]
learning_rate = 0.01
epochs = 5
"#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.property, Some(PropertyKind::Movement));
        assert_eq!(cfg.mode, Some(SplitMode::Gloss));
        let train = cfg.train.clone().unwrap();
        assert_eq!(train.epochs, 5);
        assert_eq!(train.batch_size, TrainConfig::default().batch_size);
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("propertee = \"flexion\"").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[train]\nlearning_rat = 1.0").is_err());
    }
}
