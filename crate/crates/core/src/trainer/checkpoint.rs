use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::fold::TrainedState;
use super::VERSION;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "matldc-checkpoint/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: String,
    pub config: TrainConfig,
    pub state: TrainedState<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(config: TrainConfig, state: TrainedState<T>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: VERSION.into(),
            config,
            state,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let c: Self = serde_json::from_reader(r)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format `{}`", c.format)));
        }
        if !c.state.model.is_finite() || !c.state.bank.is_finite() {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
        Ok(c)
    }
}
