use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::Result;
use crate::model::ParamStore;

/// Run metadata stored next to the parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    /// Zero-based epoch at which the parameters were captured.
    pub epoch: usize,
    pub best_val_loss: f64,
}

/// Parameters plus metadata. On disk: `<name>.a2dm` and `<name>.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore<f32>,
    pub meta: CheckpointMeta,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        self.params.save(path)?;
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let params = ParamStore::load(path)?;
        let meta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        Ok(Checkpoint { params, meta })
    }
}
