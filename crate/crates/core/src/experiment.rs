//! One TOML file describing a whole run: dataset, split, training and
//! inference search.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{generate_dataset, select, split_indices, TrajectoryConfig};
use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::mcts::SearchConfig;
use crate::selfplay::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: TrajectoryConfig,
    pub data_seed: u64,
    /// Share of the dataset used for training.
    pub split: f64,
    /// Seeds the split; training uses `train.seed`.
    pub split_seed: u64,
    pub train: TrainConfig,
    pub inference: SearchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: TrajectoryConfig::default(),
            data_seed: 0,
            split: 0.75,
            split_seed: 0,
            train: TrainConfig::default(),
            inference: SearchConfig::inference(),
        }
    }
}

/// Train and test matrices of an experiment.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<SymMatrix<f64>>,
    pub test: Vec<SymMatrix<f64>>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Serialize(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Serialize(msg) => Error::Parse { path: path.to_path_buf(), line: 0, msg },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        self.inference.validate()?;
        if self.data.n != self.train.arch.n {
            return Err(Error::DimensionMismatch { expected: self.train.arch.n, got: self.data.n });
        }
        if !(0.0..=1.0).contains(&self.split) {
            return Err(Error::invalid("split must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn split_matrices(&self, matrices: &[SymMatrix<f64>]) -> Result<Split> {
        let (tr, te) = split_indices(matrices.len(), self.split, self.split_seed)?;
        Ok(Split { train: select(matrices, &tr), test: select(matrices, &te) })
    }

    /// Generates the configured dataset and splits it.
    pub fn materialize(&self) -> Result<Split> {
        self.split_matrices(&generate_dataset(&self.data, self.data_seed)?.matrices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn order_mismatch_is_rejected() {
        let text = "[data]\nn = 4\n";
        assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig { split: 0.8, data_seed: 3, ..Default::default() };
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn split_sizes() {
        let cfg = ExperimentConfig {
            data: TrajectoryConfig { count: 20, ..Default::default() },
            split: 0.75,
            ..Default::default()
        };
        let s = cfg.materialize().unwrap();
        assert_eq!((s.train.len(), s.test.len()), (15, 5));
    }
}
