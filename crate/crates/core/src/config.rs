//! Run configuration: one TOML file with `[dataset]`, `[model]`,
//! `[training]` and `[metric]` tables, each falling back to the defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::DatasetConfig;
use crate::error::{Error, Result};
use crate::gmvae::{ModelConfig, TrainConfig};
use crate::spectral::MetricConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub metric: MetricConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        self.metric.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        cfg.validate().map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.model.hidden_dims, vec![32, 16, 8]);
        assert_eq!(cfg.training.epochs, 20_000);
        assert_eq!(cfg.dataset.n_samples, 1280);
    }

    #[test]
    fn partial_tables_fill_defaults() {
        let cfg = RunConfig::from_toml("[training]\nepochs = 5\n[metric]\nk = 4\n").unwrap();
        assert_eq!(cfg.training.epochs, 5);
        assert_eq!(cfg.training.batch_size, 64);
        assert_eq!(cfg.metric.k, 4);
        assert_eq!(cfg.metric.r_percent, 20.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[model]\nlatent = 3\n").is_err());
        assert!(RunConfig::from_toml("[extras]\n").is_err());
    }
}
