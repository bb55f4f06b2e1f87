use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::net::Model;
use crate::dynamics::Standardizer;
use crate::embedding::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::numcore::{read_checkpoint, write_checkpoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelMeta {
    model: ModelConfig,
    embedding: EmbeddingConfig,
    dim: usize,
    context_patches: usize,
    standardizer: Standardizer,
    config_hash: String,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Writes the JSON manifest to `path` and the tensors beside it with a `.bin` extension.
/// `extra` is stored verbatim.
pub fn save_model(model: &Model, path: &Path, extra: serde_json::Value) -> Result<()> {
    let meta = ModelMeta {
        model: model.config.clone(),
        embedding: model.embedding,
        dim: model.dim,
        context_patches: model.context_patches,
        standardizer: model.standardizer.clone(),
        config_hash: model.config_hash(),
        extra,
    };
    write_checkpoint(path, &model.params, serde_json::to_value(meta).expect("metadata serializes"))
}

/// Rebuilds the architecture from the manifest and installs the stored tensors.
pub fn load_model(path: &Path) -> Result<(Model, serde_json::Value)> {
    let (store, manifest) = read_checkpoint(path)?;
    let meta: ModelMeta = serde_json::from_value(manifest.metadata).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: format!("checkpoint metadata: {e}"),
    })?;
    let mut model = Model::new(
        meta.model,
        meta.embedding,
        meta.dim,
        meta.context_patches,
        meta.standardizer,
        0,
    )?;
    if model.config_hash() != meta.config_hash {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "config hash does not match the stored configuration".into(),
        });
    }
    model.load_params(&store)?;
    Ok((model, meta.extra))
}
