//! Model directories: `model.json` describing the model plus `params.bin`,
//! the parameters as little-endian f64 in declared order, each array
//! row-major.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::config::ModelConfig;
use crate::models::data::Normalizer;
use crate::models::networks::{ParamSet, ParamSpec};
use crate::models::train::TrainedModel;
use crate::types::SensorId;

pub const MODEL_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub normalization: Normalizer,
    pub seed: u64,
    pub sensors: Vec<SensorId>,
    pub adjacency: Vec<Vec<f64>>,
    pub params_file: String,
    pub byte_order: String,
    pub parameters: Vec<ParamSpec>,
}

pub fn save_model(dir: impl AsRef<Path>, model: &TrainedModel) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = ModelManifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        normalization: model.normalizer,
        seed: model.seed,
        sensors: model.sensors.clone(),
        adjacency: model.adjacency.rows().into_iter().map(|r| r.to_vec()).collect(),
        params_file: PARAMS_FILE.into(),
        byte_order: "little-endian f64, row-major, declared order".into(),
        parameters: model.params.specs.clone(),
    };
    let mut bytes = Vec::with_capacity(model.params.count() * 8);
    for a in &model.params.values {
        for v in a.as_standard_layout().iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let json_path = dir.join(MODEL_FILE);
    let bin_path = dir.join(PARAMS_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("model manifest", e))?;
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))?;
    Ok(vec![json_path, bin_path])
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<TrainedModel> {
    let dir = dir.as_ref();
    let json_path = dir.join(MODEL_FILE);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: ModelManifest =
        serde_json::from_str(&text).map_err(|e| Error::json(json_path.display().to_string(), e))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::validation(format!(
            "{}: unsupported format version {}",
            json_path.display(),
            manifest.format_version
        )));
    }
    let bin_path = dir.join(&manifest.params_file);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let expected: usize = manifest.parameters.iter().map(|p| p.rows * p.cols).sum();
    if bytes.len() != expected * 8 {
        return Err(Error::validation(format!(
            "{}: {} bytes, layout needs {}",
            bin_path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    let mut floats = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")));
    let values: Vec<Array2<f64>> = manifest
        .parameters
        .iter()
        .map(|p| Array2::from_shape_fn((p.rows, p.cols), |_| floats.next().expect("length checked")))
        .collect();
    let n = manifest.sensors.len();
    if manifest.adjacency.len() != n || manifest.adjacency.iter().any(|r| r.len() != n) {
        return Err(Error::validation(format!("{}: adjacency is not {n}x{n}", json_path.display())));
    }
    let adjacency = Array2::from_shape_fn((n, n), |(i, j)| manifest.adjacency[i][j]);
    let params = ParamSet::from_values(manifest.parameters, values)?;
    TrainedModel::new(manifest.config, params, manifest.normalization, manifest.seed, manifest.sensors, adjacency)
}
