//! Run configuration file. Every field is optional; command-line flags take
//! precedence over file values, which take precedence over built-in defaults.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub mismatch: MismatchSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub samples: Option<usize>,
    pub c_min: Option<f64>,
    pub c_max: Option<f64>,
    pub frequencies_hz: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchSection {
    pub concentrations: Option<Vec<f64>>,
    pub ratio_noise_sigma: Option<f64>,
    pub curvature_bias: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden_layers: Option<usize>,
    pub neurons_per_layer: Option<usize>,
    pub output_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub log_every: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub layer_counts: Option<Vec<usize>>,
    pub neuron_counts: Option<Vec<usize>>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// The file at `path`, or an empty configuration.
    pub fn load_opt(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// First present value: flag, then config, then default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"lr": 0.1}}"#).is_err());
    }

    #[test]
    fn precedence() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 4, "train": {"epochs": 10}}"#).unwrap();
        assert_eq!(pick(None, c.train.epochs, 100), 10);
        assert_eq!(pick(Some(20), c.train.epochs, 100), 20);
        assert_eq!(pick(None, c.train.beta1, 0.9), 0.9);
        assert_eq!(c.seed, Some(4));
    }
}
