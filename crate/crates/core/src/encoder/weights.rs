use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::EncoderConfig;
use super::params::{Layout, ModelParams};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsFile {
    format_version: u32,
    config: EncoderConfig,
    tensors: Vec<TensorRecord>,
}

/// Serialize `params` and `config` to a JSON document.
pub fn weights_to_string(params: &ModelParams, config: &EncoderConfig) -> Result<String> {
    params.check_layout(config)?;
    let file = WeightsFile {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        tensors: params
            .named_tensors()
            .map(|(spec, values)| TensorRecord {
                name: spec.name.clone(),
                shape: spec.shape.clone(),
                values: values.to_vec(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Inverse of [`weights_to_string`]. `origin` labels errors.
pub fn weights_from_str(text: &str, origin: &Path) -> Result<(ModelParams, EncoderConfig)> {
    let corrupt = |message: String| Error::CorruptFile {
        path: origin.to_path_buf(),
        message,
    };
    let file: WeightsFile = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    file.config.validate()?;
    let layout = Layout::for_config(&file.config);
    if file.tensors.len() != layout.specs().len() {
        return Err(Error::Shape(format!(
            "weights file lists {} tensors, configuration needs {}",
            file.tensors.len(),
            layout.specs().len()
        )));
    }
    let mut data = Vec::with_capacity(layout.total());
    for (record, spec) in file.tensors.iter().zip(layout.specs()) {
        if record.name != spec.name || record.shape != spec.shape {
            return Err(Error::Shape(format!(
                "tensor {} {:?} does not match expected {} {:?}",
                record.name, record.shape, spec.name, spec.shape
            )));
        }
        if record.values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "tensor {} declares shape {:?} but holds {} values",
                record.name,
                record.shape,
                record.values.len()
            )));
        }
        data.extend_from_slice(&record.values);
    }
    let params = ModelParams::from_parts(layout, data)?;
    Ok((params, file.config))
}

pub fn save_weights(params: &ModelParams, config: &EncoderConfig, path: &Path) -> Result<()> {
    let text = weights_to_string(params, config)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<(ModelParams, EncoderConfig)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    weights_from_str(&text, path)
}
