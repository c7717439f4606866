//! Versioned JSON checkpoints. Floats are written in shortest round-trip form
//! and parsed back exactly, so save/load is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ImagePipeline;
use crate::error::{Error, Result};
use crate::model::Network;
use crate::optim::OptimizerState;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub network: Network,
    pub optimizer: OptimizerState,
    pub class_ids: Vec<u32>,
    pub pipeline: ImagePipeline,
    pub epochs_completed: usize,
}

impl Checkpoint {
    pub fn new(network: Network, optimizer: OptimizerState, class_ids: Vec<u32>, pipeline: ImagePipeline, epochs_completed: usize) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            network,
            optimizer,
            class_ids,
            pipeline,
            epochs_completed,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text)?;
        let bad = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        if ck.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {}", ck.version)));
        }
        if !ck.network.is_finite() {
            return Err(bad("non-finite parameters".into()));
        }
        if ck.optimizer.len() != ck.network.num_params() {
            return Err(bad("optimizer state does not match the network".into()));
        }
        if ck.class_ids.len() != ck.network.head.num_classes() {
            return Err(bad("class id table does not match the classifier".into()));
        }
        Ok(ck)
    }
}
