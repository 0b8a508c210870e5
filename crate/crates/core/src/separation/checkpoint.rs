//! Model checkpoints: one tensor file per parameter plus `model.json`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::loss::Objective;
use super::model::SeparationModel;
use crate::error::{Error, Result};
use crate::tensor::{read_tensor, write_tensor, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDescriptor {
    pub n_layers: usize,
    pub layer_dim: usize,
    pub embedding_dim: usize,
    pub dense_dim: usize,
    pub objective: Objective,
    pub temperature: f64,
    pub seed: u64,
    pub leaky_slope: f64,
    pub sentence_ids: Vec<String>,
}

const PARAMS: [&str; 6] = [
    "layer_logits",
    "w_speech",
    "b_speech",
    "w_sentence",
    "b_sentence",
    "dense",
];

pub fn save_checkpoint(
    model: &SeparationModel,
    objective: Objective,
    temperature: f64,
    seed: u64,
    dir: impl AsRef<Path>,
) -> Result<CheckpointDescriptor> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tensors = [
        Tensor::from_vec(model.layer_logits.as_slice().expect("contiguous"))?,
        Tensor::from_matrix(model.w_speech.view())?,
        Tensor::from_vec(model.b_speech.as_slice().expect("contiguous"))?,
        Tensor::from_matrix(model.w_sentence.view())?,
        Tensor::from_vec(model.b_sentence.as_slice().expect("contiguous"))?,
        Tensor::from_matrix(model.dense.view())?,
    ];
    for (name, t) in PARAMS.iter().zip(&tensors) {
        write_tensor(t, dir.join(format!("{name}.ften")))?;
    }
    let desc = CheckpointDescriptor {
        n_layers: model.n_layers(),
        layer_dim: model.layer_dim(),
        embedding_dim: model.embedding_dim(),
        dense_dim: model.dense_dim(),
        objective,
        temperature,
        seed,
        leaky_slope: model.leaky_slope,
        sentence_ids: model.sentence_ids.clone(),
    };
    let path = dir.join("model.json");
    let json = serde_json::to_string_pretty(&desc).expect("descriptor serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(desc)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(SeparationModel, CheckpointDescriptor)> {
    let dir = dir.as_ref();
    let path = dir.join("model.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let desc: CheckpointDescriptor =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let read = |name: &str| read_tensor(dir.join(format!("{name}.ften")));
    let vec = |name: &str| -> Result<Array1<f64>> { read(name)?.to_array1() };
    let mat = |name: &str| -> Result<Array2<f64>> { read(name)?.to_array2() };
    let model = SeparationModel::from_parts(
        vec("layer_logits")?,
        mat("w_speech")?,
        vec("b_speech")?,
        mat("w_sentence")?,
        vec("b_sentence")?,
        mat("dense")?,
        desc.sentence_ids.clone(),
        desc.leaky_slope,
    )?;
    if model.n_layers() != desc.n_layers
        || model.layer_dim() != desc.layer_dim
        || model.embedding_dim() != desc.embedding_dim
        || model.dense_dim() != desc.dense_dim
    {
        return Err(Error::Shape("checkpoint tensors disagree with model.json".into()));
    }
    Ok((model, desc))
}
