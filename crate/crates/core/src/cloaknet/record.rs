//! Enrollment records and their JSON file format.
//!
//! Network parameters are written as single-precision arrays. Enrollment rounds
//! every parameter to `f32` before computing the stored cloak, so a record read
//! back from disk reproduces the in-memory network exactly.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::{BatchNorm, CloakNetwork};
use super::train::{infer_cloak, TrainConfig};
use crate::disruptor::DisruptorConfig;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::types::BinaryCloak;

pub const RECORD_VERSION: u32 = 1;

/// What is kept after enrollment: the cloak and the network that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct EnrollmentRecord {
    pub subject_id: String,
    pub anchor_sample_id: String,
    pub cloak: BinaryCloak,
    pub network: CloakNetwork,
    pub train_config: TrainConfig,
    pub disruptor_config: Option<DisruptorConfig>,
    pub seed: u64,
    pub stream: String,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    hidden: usize,
    epsilon: f64,
    momentum: f64,
    layer1_weight: Vec<f32>,
    layer1_bias: Vec<f32>,
    bn1_scale: Vec<f32>,
    bn1_shift: Vec<f32>,
    bn1_running_mean: Vec<f32>,
    bn1_running_var: Vec<f32>,
    layer2_weight: Vec<f32>,
    layer2_bias: Vec<f32>,
    bn2_scale: Vec<f32>,
    bn2_shift: Vec<f32>,
    bn2_running_mean: Vec<f32>,
    bn2_running_var: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct RecordFile {
    version: u32,
    subject_id: String,
    anchor_sample_id: String,
    n: usize,
    d: usize,
    cloak: BinaryCloak,
    seed: u64,
    stream: String,
    train_config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    disruptor_config: Option<DisruptorConfig>,
    network: NetworkFile,
}

fn to_f32<'a>(values: impl IntoIterator<Item = &'a f64>) -> Vec<f32> {
    values.into_iter().map(|&v| v as f32).collect()
}

fn vec1(v: Vec<f32>, len: usize, what: &str) -> Result<Array1<f64>> {
    if v.len() != len {
        return Err(Error::Record(format!(
            "{what} has {} entries, expected {len}",
            v.len()
        )));
    }
    Ok(v.into_iter().map(f64::from).collect())
}

fn mat(v: Vec<f32>, rows: usize, cols: usize, what: &str) -> Result<Array2<f64>> {
    let flat = vec1(v, rows * cols, what)?;
    Ok(flat
        .into_shape_with_order((rows, cols))
        .expect("length checked above"))
}

impl NetworkFile {
    fn from_network(net: &CloakNetwork) -> Self {
        Self {
            hidden: net.hidden_dim(),
            epsilon: net.epsilon,
            momentum: net.momentum,
            layer1_weight: to_f32(&net.w1),
            layer1_bias: to_f32(&net.b1),
            bn1_scale: to_f32(&net.bn1.scale),
            bn1_shift: to_f32(&net.bn1.shift),
            bn1_running_mean: to_f32(&net.bn1.running_mean),
            bn1_running_var: to_f32(&net.bn1.running_var),
            layer2_weight: to_f32(&net.w2),
            layer2_bias: to_f32(&net.b2),
            bn2_scale: to_f32(&net.bn2.scale),
            bn2_shift: to_f32(&net.bn2.shift),
            bn2_running_mean: to_f32(&net.bn2.running_mean),
            bn2_running_var: to_f32(&net.bn2.running_var),
        }
    }

    fn into_network(self, n: usize, d: usize) -> Result<CloakNetwork> {
        let h = self.hidden;
        let net = CloakNetwork {
            w1: mat(self.layer1_weight, h, n, "layer1_weight")?,
            b1: vec1(self.layer1_bias, h, "layer1_bias")?,
            bn1: BatchNorm {
                scale: vec1(self.bn1_scale, h, "bn1_scale")?,
                shift: vec1(self.bn1_shift, h, "bn1_shift")?,
                running_mean: vec1(self.bn1_running_mean, h, "bn1_running_mean")?,
                running_var: vec1(self.bn1_running_var, h, "bn1_running_var")?,
            },
            w2: mat(self.layer2_weight, d, h, "layer2_weight")?,
            b2: vec1(self.layer2_bias, d, "layer2_bias")?,
            bn2: BatchNorm {
                scale: vec1(self.bn2_scale, d, "bn2_scale")?,
                shift: vec1(self.bn2_shift, d, "bn2_shift")?,
                running_mean: vec1(self.bn2_running_mean, d, "bn2_running_mean")?,
                running_var: vec1(self.bn2_running_var, d, "bn2_running_var")?,
            },
            epsilon: self.epsilon,
            momentum: self.momentum,
        };
        net.validate()?;
        Ok(net)
    }
}

impl EnrollmentRecord {
    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    pub fn hash_dim(&self) -> usize {
        self.network.hash_dim()
    }

    /// Checks that the network reproduces the stored cloak on `anchor`.
    pub fn verify_anchor(&self, anchor: &[f64]) -> Result<bool> {
        Ok(infer_cloak(&self.network, anchor)? == self.cloak)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = RecordFile {
            version: RECORD_VERSION,
            subject_id: self.subject_id.clone(),
            anchor_sample_id: self.anchor_sample_id.clone(),
            n: self.input_dim(),
            d: self.hash_dim(),
            cloak: self.cloak.clone(),
            seed: self.seed,
            stream: self.stream.clone(),
            train_config: self.train_config.clone(),
            disruptor_config: self.disruptor_config.clone(),
            network: NetworkFile::from_network(&self.network),
        };
        let mut s = serde_json::to_string(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RecordFile = serde_json::from_str(text)?;
        if file.version != RECORD_VERSION {
            return Err(Error::RecordVersion(file.version));
        }
        if file.cloak.len() != file.d {
            return Err(Error::Record(format!(
                "cloak has {} bits but d = {}",
                file.cloak.len(),
                file.d
            )));
        }
        let network = file.network.into_network(file.n, file.d)?;
        Ok(Self {
            subject_id: file.subject_id,
            anchor_sample_id: file.anchor_sample_id,
            cloak: file.cloak,
            network,
            train_config: file.train_config,
            disruptor_config: file.disruptor_config,
            seed: file.seed,
            stream: file.stream,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
