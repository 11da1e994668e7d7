//! Model checkpoints: versioned JSON header plus the parameters in layer order.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Layer, MlpModel};
use super::train::TrainedModel;
use crate::container;
use crate::error::{Error, Result};

pub const MAGIC: &str = "QMTOMO-MODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub d: usize,
    pub n: usize,
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub val_infidelity: f64,
    /// Free-form description of the training data (potential, Γ, trajectory length).
    pub scenario: String,
    pub config_fingerprint: String,
    pub payload_sha256: String,
}

pub fn write_checkpoint(
    path: &Path,
    trained: &TrainedModel,
    seed: u64,
    scenario: &str,
    config_fingerprint: &str,
) -> Result<()> {
    let m = &trained.model;
    let params: Vec<f64> = m.params().copied().collect();
    let payload = container::f64s_to_le(&params);
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        d: m.d,
        n: m.n,
        layer_sizes: m.layer_sizes(),
        seed,
        best_epoch: trained.curve.best_epoch,
        epochs_run: trained.curve.epochs_run,
        best_val_loss: trained.curve.best_val_loss,
        val_infidelity: trained.val_infidelity,
        scenario: scenario.to_string(),
        config_fingerprint: config_fingerprint.to_string(),
        payload_sha256: container::sha256_hex(&payload),
    };
    container::write(path, MAGIC, &header, &payload)
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, MlpModel)> {
    let (header, payload): (CheckpointHeader, _) = container::read(path, MAGIC)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", header.format_version)));
    }
    container::verify_checksum(&payload, &header.payload_sha256, "checkpoint")?;
    let values = container::le_to_f64s(&payload)?;
    let sizes = &header.layer_sizes;
    if sizes.len() < 2 || sizes[0] != 2 * header.n || *sizes.last().unwrap() != 2 * header.d * header.d {
        return Err(Error::Format(format!("layer sizes {sizes:?} inconsistent with d = {}, N = {}", header.d, header.n)));
    }
    let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if values.len() != expected {
        return Err(Error::Format(format!("checkpoint holds {} parameters, layers need {expected}", values.len())));
    }
    let mut at = 0;
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for w in sizes.windows(2) {
        let wlen = w[0] * w[1];
        let weights = Array2::from_shape_vec((w[0], w[1]), values[at..at + wlen].to_vec())
            .map_err(|e| Error::Format(e.to_string()))?;
        at += wlen;
        let bias = Array1::from(values[at..at + w[1]].to_vec());
        at += w[1];
        layers.push(Layer { w: weights, b: bias });
    }
    Ok((header.clone(), MlpModel { d: header.d, n: header.n, layers }))
}
