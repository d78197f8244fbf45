//! Binary checkpoint: one line of compact JSON manifest terminated by
//! `\n`, followed by the parameter blobs. Each blob is little-endian
//! IEEE-754 `f64`, row-major; offsets count from the first byte after the
//! newline.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Activation, DenseLayer, Matrix};
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::model::block::BlockWeights;
use crate::model::network::{ModelConfig, NBeatsModel};
use crate::scalar::Scalar;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: u64,
    pub length: u64,
    pub crc32: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    #[serde(rename = "L")]
    pub block_count: usize,
    #[serde(rename = "K")]
    pub layers: usize,
    pub width: usize,
    pub t: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub share_weights: bool,
    pub seed: u64,
    /// Trunk activation per stored block and layer.
    pub activations: Vec<Vec<Activation>>,
    pub blobs: Vec<BlobEntry>,
}

impl CheckpointManifest {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            lookback: self.t,
            horizon: self.horizon,
            block_count: self.block_count,
            layers: self.layers,
            width: self.width,
            share_weights: self.share_weights,
        }
    }
}

pub fn to_bytes<T: Scalar>(model: &NBeatsModel<T>) -> Vec<u8> {
    let cfg = model.config();
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    for (name, m) in model.parameters() {
        let start = blob.len();
        for &v in m.as_slice() {
            blob.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        entries.push(BlobEntry {
            name,
            rows: m.rows(),
            cols: m.cols(),
            offset: start as u64,
            length: (blob.len() - start) as u64,
            crc32: crc32fast::hash(&blob[start..]),
        });
    }
    let manifest = CheckpointManifest {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        block_count: cfg.block_count,
        layers: cfg.layers,
        width: cfg.width,
        t: cfg.lookback,
        horizon: cfg.horizon,
        share_weights: cfg.share_weights,
        seed: model.seed(),
        activations: model
            .stored_blocks()
            .iter()
            .map(|b| b.layers().iter().map(|l| l.activation()).collect())
            .collect(),
        blobs: entries,
    };
    let mut out = serde_json::to_vec(&manifest).expect("manifest serializes");
    out.push(b'\n');
    out.extend_from_slice(&blob);
    out
}

pub fn read_manifest(bytes: &[u8]) -> Result<(CheckpointManifest, &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing manifest terminator".into()))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&bytes[..nl])?;
    if manifest.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported schema version {}",
            manifest.schema_version
        )));
    }
    Ok((manifest, &bytes[nl + 1..]))
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<NBeatsModel<T>> {
    let (manifest, blob) = read_manifest(bytes)?;
    let config = manifest.model_config();
    config.validate()?;
    let per_block = 2 * manifest.layers + 2;
    if manifest.blobs.len() != per_block * config.stored_blocks()
        || manifest.activations.len() != config.stored_blocks()
    {
        return Err(Error::Checkpoint("blob count disagrees with topology".into()));
    }
    let mut mats = Vec::with_capacity(manifest.blobs.len());
    for entry in &manifest.blobs {
        let start = entry.offset as usize;
        let end = start
            .checked_add(entry.length as usize)
            .filter(|&e| e <= blob.len())
            .ok_or_else(|| Error::Checkpoint(format!("blob `{}` out of range", entry.name)))?;
        let bytes = &blob[start..end];
        if crc32fast::hash(bytes) != entry.crc32 {
            return Err(Error::Checkpoint(format!("crc mismatch in `{}`", entry.name)));
        }
        if bytes.len() != entry.rows * entry.cols * 8 {
            return Err(Error::Checkpoint(format!("bad length for `{}`", entry.name)));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        mats.push(Matrix::from_vec(entry.rows, entry.cols, data)?);
    }
    let mut mats = mats.into_iter();
    let mut blocks = Vec::with_capacity(config.stored_blocks());
    for acts in &manifest.activations {
        if acts.len() != manifest.layers {
            return Err(Error::Checkpoint("activation list length".into()));
        }
        let mut layers = Vec::with_capacity(manifest.layers);
        for &act in acts {
            let w = mats.next().unwrap();
            let b = mats.next().unwrap();
            layers.push(DenseLayer::new(w, b.into_vec(), act)?);
        }
        let q = mats.next().unwrap();
        let g = mats.next().unwrap();
        blocks.push(BlockWeights::new(layers, q, g)?);
    }
    NBeatsModel::from_blocks(config, manifest.seed, blocks)
}

pub fn save<T: Scalar>(model: &NBeatsModel<T>, path: &Path) -> Result<()> {
    atomic_write(path, &to_bytes(model))
}

pub fn load<T: Scalar>(path: &Path) -> Result<NBeatsModel<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Hex SHA-256 of the serialized checkpoint.
pub fn digest<T: Scalar>(model: &NBeatsModel<T>) -> String {
    hex_digest(&to_bytes(model))
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::build_model;

    fn cfg(share: bool) -> ModelConfig {
        ModelConfig {
            lookback: 4,
            horizon: 2,
            block_count: 3,
            layers: 2,
            width: 5,
            share_weights: share,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for share in [true, false] {
            let m = build_model::<f64>(cfg(share), 17).unwrap();
            let bytes = to_bytes(&m);
            let back: NBeatsModel<f64> = from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(to_bytes(&back), bytes);
        }
    }

    #[test]
    fn manifest_layout() {
        let m = build_model::<f64>(cfg(false), 3).unwrap();
        let bytes = to_bytes(&m);
        let (man, blob) = read_manifest(&bytes).unwrap();
        assert_eq!((man.block_count, man.layers, man.width, man.t, man.horizon), (3, 2, 5, 4, 2));
        assert_eq!(man.blobs.len(), 3 * 6);
        let first = &man.blobs[0];
        assert_eq!(first.name, "block0.fc0.weight");
        assert_eq!(first.offset, 0);
        let w00 = f64::from_le_bytes(blob[..8].try_into().unwrap());
        assert_eq!(w00, m.block(0).layers()[0].weight().get(0, 0));
        let last = man.blobs.last().unwrap();
        assert_eq!((last.offset + last.length) as usize, blob.len());
    }

    #[test]
    fn corruption_is_detected() {
        let m = build_model::<f64>(cfg(true), 3).unwrap();
        let mut bytes = to_bytes(&m);
        let n = bytes.len();
        bytes[n - 3] ^= 0x40;
        assert!(from_bytes::<f64>(&bytes).is_err());
    }

    #[test]
    fn digest_tracks_weights() {
        let mut m = build_model::<f64>(cfg(true), 3).unwrap();
        let d0 = digest(&m);
        assert_eq!(d0, digest(&m.clone()));
        m.stored_blocks_mut()[0].forecast_head_mut().set(0, 0, 0.125);
        assert_ne!(d0, digest(&m));
    }
}
