//! Self-describing model checkpoints.
//!
//! File layout:
//!
//! ```text
//! magic   8 bytes   b"TMCKPT\0\x01"
//! hlen    u64 LE    length of the JSON header in bytes
//! header  hlen      UTF-8 JSON (`CheckpointHeader`)
//! payload           header.payload_values × f32, little-endian
//! ```
//!
//! The header carries the format version, network and preprocessing config,
//! a tensor table (name, shape, offset, length in values) and training
//! provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::network::{NetError, Network, NetworkConfig, TensorSpec};
use crate::dataset::preprocess::{preprocess, NetInput, PreprocessConfig};
use crate::image::RgbImage;

pub const MAGIC: &[u8; 8] = b"TMCKPT\0\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("truncated checkpoint: {0}")]
    Truncated(&'static str),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint payload has {got} values, header declares {want}")]
    PayloadLength { got: usize, want: usize },
    #[error("unsupported dtype/endianness {0}/{1}")]
    Encoding(String, String),
    #[error("tensor table does not match the network config")]
    TensorTable,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Network initialization seed.
    pub seed: u64,
    pub shuffle_seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub final_val_loss: f64,
    pub train_examples: usize,
    pub val_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub dtype: String,
    pub endianness: String,
    pub network: NetworkConfig,
    pub preprocess: PreprocessConfig,
    pub tensors: Vec<TensorSpec>,
    pub payload_values: usize,
    pub provenance: Provenance,
}

/// Trained weights (f32) with everything needed to reproduce predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub network: NetworkConfig,
    pub preprocess: PreprocessConfig,
    pub weights: Vec<f32>,
    pub provenance: Provenance,
}

impl ModelCheckpoint {
    /// Rounds the network weights to f32.
    pub fn from_network(net: &Network, preprocess: PreprocessConfig, provenance: Provenance) -> Self {
        Self {
            network: net.config().clone(),
            preprocess,
            weights: net.params().iter().map(|&w| w as f32).collect(),
            provenance,
        }
    }

    pub fn to_network(&self) -> Result<Network, NetError> {
        Network::from_params(
            self.network.clone(),
            self.weights.iter().map(|&w| w as f64).collect(),
        )
    }

    pub fn input_for(&self, img: &RgbImage) -> NetInput {
        preprocess(img, &self.preprocess)
    }

    /// Preprocesses `img` and runs the network.
    pub fn predict(&self, img: &RgbImage) -> Result<Vec<f64>, NetError> {
        self.to_network()?.forward(&self.input_for(img))
    }

    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            format_version: FORMAT_VERSION,
            dtype: "f32".into(),
            endianness: "little".into(),
            network: self.network.clone(),
            preprocess: self.preprocess.clone(),
            tensors: Network::tensor_specs(&self.network),
            payload_values: self.weights.len(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.weights.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 16 {
            return Err(CheckpointError::Truncated("preamble"));
        }
        if &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(CheckpointError::Truncated("header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&body[..hlen])?;
        if header.format_version != FORMAT_VERSION {
            return Err(CheckpointError::Version(header.format_version));
        }
        if header.dtype != "f32" || header.endianness != "little" {
            return Err(CheckpointError::Encoding(header.dtype, header.endianness));
        }
        let payload = &body[hlen..];
        if !payload.len().is_multiple_of(4) {
            return Err(CheckpointError::Truncated("payload"));
        }
        let weights: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if weights.len() != header.payload_values {
            return Err(CheckpointError::PayloadLength { got: weights.len(), want: header.payload_values });
        }
        if header.tensors != Network::tensor_specs(&header.network) {
            return Err(CheckpointError::TensorTable);
        }
        let ckpt = Self {
            network: header.network,
            preprocess: header.preprocess,
            weights,
            provenance: header.provenance,
        };
        // validates the parameter count against the architecture
        ckpt.to_network()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}
