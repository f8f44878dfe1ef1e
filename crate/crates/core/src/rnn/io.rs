//! Versioned JSON model files.
//!
//! Reals are written in scientific notation with 17 significant digits, so a
//! save/load round trip reproduces every parameter bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::{ModelConfig, ModelError, ModelParams};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("unsupported model format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("tensor {name} has {found} values, expected {expected}")]
    Shape {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("model file is missing tensor {0}")]
    MissingTensor(String),
    #[error("model parameters must be finite")]
    NonFinite,
    #[error(transparent)]
    BadConfig(#[from] ModelError),
}

/// Model file contents after a successful load.
#[derive(Debug, Clone)]
pub struct LoadedModel<S> {
    pub params: ModelParams<S>,
    pub rng_seed: u64,
    pub training_meta: serde_json::Value,
}

pub fn save_model<S: Scalar>(
    path: &Path,
    params: &ModelParams<S>,
    rng_seed: u64,
    training_meta: &serde_json::Value,
) -> Result<(), ModelIoError> {
    let cfg = params.config;
    let mut out = String::new();
    let _ = writeln!(out, "{{");
    let _ = writeln!(out, "  \"format_version\": {FORMAT_VERSION},");
    let _ = writeln!(
        out,
        "  \"config\": {{\"input_dim\": {}, \"hidden_dim\": {}, \"mixtures\": {}}},",
        cfg.input_dim, cfg.hidden_dim, cfg.mixtures
    );
    let _ = writeln!(out, "  \"params\": {{");
    let fields = params.fields();
    for (i, (name, data)) in fields.iter().enumerate() {
        let _ = write!(out, "    \"{name}\": [");
        for (j, v) in data.iter().enumerate() {
            let v = v.to_f64().ok_or(ModelIoError::NonFinite)?;
            if !v.is_finite() {
                return Err(ModelIoError::NonFinite);
            }
            if j > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{v:.16e}");
        }
        let comma = if i + 1 < fields.len() { "," } else { "" };
        let _ = writeln!(out, "]{comma}");
    }
    let _ = writeln!(out, "  }},");
    let _ = writeln!(out, "  \"rng_seed\": {rng_seed},");
    let meta =
        serde_json::to_string(training_meta).map_err(|e| ModelIoError::Malformed(e.to_string()))?;
    let _ = writeln!(out, "  \"training_meta\": {meta}");
    let _ = writeln!(out, "}}");
    fs::write(path, out)?;
    Ok(())
}

#[derive(Deserialize)]
struct ModelFile {
    format_version: u32,
    config: ModelConfig,
    params: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    rng_seed: u64,
    #[serde(default)]
    training_meta: serde_json::Value,
}

pub fn load_model<S: Scalar>(path: &Path) -> Result<LoadedModel<S>, ModelIoError> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| ModelIoError::Malformed(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(ModelIoError::Version {
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    file.config.validate()?;
    let mut params = ModelParams::<S>::zeros(file.config);
    for (name, slot) in params.fields_mut() {
        let values = file
            .params
            .get(name)
            .ok_or_else(|| ModelIoError::MissingTensor(name.to_string()))?;
        if values.len() != slot.len() {
            return Err(ModelIoError::Shape {
                name: name.to_string(),
                expected: slot.len(),
                found: values.len(),
            });
        }
        for (dst, v) in slot.iter_mut().zip(values) {
            if !v.is_finite() {
                return Err(ModelIoError::NonFinite);
            }
            *dst = S::cast(*v);
        }
    }
    Ok(LoadedModel {
        params,
        rng_seed: file.rng_seed,
        training_meta: file.training_meta,
    })
}
