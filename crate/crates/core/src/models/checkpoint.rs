//! Checkpoint directory: `model.json` (configuration, parameter names and
//! shapes, free-form metadata) and `params.bin` (little-endian `f64`,
//! parameters concatenated in manifest order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_model, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub architecture: String,
    pub config: ModelConfig,
    pub feature_width: usize,
    pub parameters: Vec<ParamEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn save_checkpoint(model: &Model, dir: &Path, metadata: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        architecture: model.architecture().to_string(),
        config: model.config().clone(),
        feature_width: model.feature_width(),
        parameters: model
            .param_names()
            .iter()
            .zip(model.params())
            .map(|(n, t)| ParamEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        metadata,
    };
    let path = dir.join("model.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    let bytes: Vec<u8> = model
        .params()
        .iter()
        .flat_map(|t| t.values().iter().flat_map(|v| v.to_le_bytes()))
        .collect();
    let bin = dir.join("params.bin");
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointManifest)> {
    let path = dir.join("model.json");
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            manifest.format_version
        )));
    }
    let mut model = build_model(&manifest.config, manifest.feature_width)?;
    let expected: Vec<ParamEntry> = model
        .param_names()
        .iter()
        .zip(model.params())
        .map(|(n, t)| ParamEntry {
            name: n.clone(),
            shape: t.shape().to_vec(),
        })
        .collect();
    if expected != manifest.parameters {
        return Err(Error::Checkpoint(
            "parameter list in model.json does not match its configuration".into(),
        ));
    }
    let bin = dir.join("params.bin");
    if !bin.exists() {
        return Err(Error::MissingFile(bin));
    }
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let total: usize = expected.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if bytes.len() != 8 * total {
        return Err(Error::Checkpoint(format!(
            "params.bin holds {} bytes, expected {} ({total} values)",
            bytes.len(),
            8 * total
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let params = expected
        .iter()
        .map(|p| {
            let n = p.shape.iter().product();
            Tensor::new(p.shape.clone(), values.by_ref().take(n).collect())
                .map_err(|e| Error::Checkpoint(format!("parameter {}: {e}", p.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    model.set_params(params)?;
    Ok((model, manifest))
}
