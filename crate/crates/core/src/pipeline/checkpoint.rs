use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Config;
use crate::datamodel::{read_json, write_json, Dataset, Stream};
use crate::error::{Error, Result};
use crate::model::{ContextLoc, ModelParams};
use crate::numerics::Matrix;

/// Weights and optimizer state of the model trained on one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamState {
    pub stream: Stream,
    pub params: ModelParams,
    /// Momentum buffers, one per tensor in [`ModelParams::tensors`] order.
    pub velocity: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Canonical text of the config that produced this checkpoint.
    pub config: String,
    pub config_hash: String,
    /// Number of completed epochs.
    pub epoch: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub streams: Vec<StreamState>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = read_json(path)?;
        let cfg = ck.config()?;
        if cfg.hash() != ck.config_hash {
            return Err(Error::Validation(format!(
                "{}: stored config hash does not match its config",
                path.display()
            )));
        }
        Ok(ck)
    }

    pub fn config(&self) -> Result<Config> {
        Config::parse_str(&self.config)
    }

    /// Refuses to continue training under a different config.
    pub fn check_resume(&self, cfg: &Config) -> Result<()> {
        if cfg.hash() != self.config_hash {
            return Err(Error::Config(
                "config hash differs from the checkpoint; refusing to resume".into(),
            ));
        }
        if self.epoch > cfg.epochs {
            return Err(Error::Config(format!(
                "checkpoint is at epoch {}, past the configured {} epochs",
                self.epoch, cfg.epochs
            )));
        }
        Ok(())
    }

    /// The dataset must have the feature width and class count the
    /// checkpoint was trained for, and every stream it uses.
    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.feature_dim != self.feature_dim || ds.num_classes != self.num_classes {
            return Err(Error::Config(format!(
                "dataset has D={} C={}, checkpoint expects D={} C={}",
                ds.feature_dim, ds.num_classes, self.feature_dim, self.num_classes
            )));
        }
        for v in &ds.videos {
            for s in &self.streams {
                let f = v.features(s.stream)?;
                if f.dim() != self.feature_dim {
                    return Err(Error::Config(format!(
                        "video {} has D={} in the {} stream, checkpoint expects {}",
                        v.id(),
                        f.dim(),
                        s.stream.name(),
                        self.feature_dim
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn models(&self) -> Result<Vec<(Stream, ContextLoc)>> {
        let cfg = self.config()?;
        let mc = cfg.model(self.feature_dim, self.num_classes);
        self.streams
            .iter()
            .map(|s| Ok((s.stream, ContextLoc::new(mc.clone(), s.params.clone())?)))
            .collect()
    }
}
