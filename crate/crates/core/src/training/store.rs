use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::eval::{SourceEnsemble, TrainedSource};
use crate::data::{DatasetKind, SourceSplit};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::model::checkpoint;
use crate::scalar::Scalar;

pub const CHECKPOINT_SET_SCHEMA_VERSION: u32 = 1;
pub const CHECKPOINT_SET_FILE: &str = "checkpoints.json";

/// Arithmetic the members were trained in. Checkpoints always hold `f64`;
/// `f32` members round-trip exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::Config(format!("unknown precision `{s}` (f32, f64)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    /// Relative to the directory holding the set manifest.
    pub file: String,
    pub seed: u64,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEntry {
    pub split: SourceSplit,
    pub horizon: usize,
    pub members: Vec<MemberEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSet {
    pub schema_version: u32,
    pub source_name: String,
    pub dataset: DatasetKind,
    pub precision: Precision,
    pub config_digest: String,
    pub digest: String,
    pub ensembles: Vec<EnsembleEntry>,
}

impl CheckpointSet {
    pub fn seeds(&self) -> Vec<u64> {
        self.ensembles.iter().flat_map(|e| e.members.iter().map(|m| m.seed)).collect()
    }
}

fn split_dir(split: &SourceSplit, horizon: usize) -> String {
    let base = split.frequency.name().to_ascii_lowercase();
    match split.upsample {
        Some(k) => format!("{base}_x{k}_h{horizon}"),
        None => format!("{base}_h{horizon}"),
    }
}

/// Writes one checkpoint per member plus the set manifest into `dir`.
pub fn save_checkpoint_set<T: Scalar>(source: &TrainedSource<T>, precision: Precision, dir: &Path) -> Result<PathBuf> {
    let mut ensembles = Vec::with_capacity(source.ensembles.len());
    for e in &source.ensembles {
        let sub = split_dir(&e.split(), e.horizon());
        let mut members = Vec::with_capacity(e.members().len());
        for (i, m) in e.members().iter().enumerate() {
            let file = format!("{sub}/member_{i:03}.nbck");
            checkpoint::save(m, &dir.join(&file))?;
            members.push(MemberEntry {
                file,
                seed: m.seed(),
                digest: checkpoint::digest(m),
            });
        }
        ensembles.push(EnsembleEntry {
            split: e.split(),
            horizon: e.horizon(),
            members,
        });
    }
    let set = CheckpointSet {
        schema_version: CHECKPOINT_SET_SCHEMA_VERSION,
        source_name: source.name.clone(),
        dataset: source.dataset.clone(),
        precision,
        config_digest: source.config_digest(),
        digest: source.digest(),
        ensembles,
    };
    let path = dir.join(CHECKPOINT_SET_FILE);
    write_json(&path, &set)?;
    Ok(path)
}

pub fn read_checkpoint_set(path: &Path) -> Result<CheckpointSet> {
    let path = if path.is_dir() { path.join(CHECKPOINT_SET_FILE) } else { path.to_path_buf() };
    let set: CheckpointSet = read_json(&path)?;
    if set.schema_version != CHECKPOINT_SET_SCHEMA_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: checkpoint set schema {} (expected {CHECKPOINT_SET_SCHEMA_VERSION})",
            path.display(),
            set.schema_version
        )));
    }
    Ok(set)
}

/// Loads the set at `path` (manifest file or its directory), verifying every
/// member digest.
pub fn load_checkpoint_set<T: Scalar>(path: &Path) -> Result<(CheckpointSet, TrainedSource<T>)> {
    let set = read_checkpoint_set(path)?;
    let dir = if path.is_dir() { path.to_path_buf() } else { path.parent().unwrap_or(Path::new(".")).to_path_buf() };
    let mut ensembles = Vec::with_capacity(set.ensembles.len());
    for e in &set.ensembles {
        let members = e
            .members
            .iter()
            .map(|m| {
                let model = checkpoint::load::<T>(&dir.join(&m.file))?;
                // The digest covers the stored f64 bytes, so f32 members match too.
                if checkpoint::digest(&model) != m.digest {
                    return Err(Error::Checkpoint(format!("{}: digest mismatch", m.file)));
                }
                Ok(model)
            })
            .collect::<Result<Vec<_>>>()?;
        ensembles.push(SourceEnsemble::new(e.split, members)?);
    }
    let source = TrainedSource {
        name: set.source_name.clone(),
        dataset: set.dataset.clone(),
        ensembles,
    };
    Ok((set, source))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Frequency;
    use crate::model::{build_model, ModelConfig};

    fn source<T: Scalar>() -> TrainedSource<T> {
        let cfg = ModelConfig {
            lookback: 8,
            horizon: 4,
            block_count: 2,
            layers: 2,
            width: 8,
            share_weights: false,
        };
        let members = (0..3).map(|s| build_model::<T>(cfg, s).unwrap()).collect();
        TrainedSource {
            name: "src".into(),
            dataset: DatasetKind::M4,
            ensembles: vec![SourceEnsemble::new(
                SourceSplit {
                    frequency: Frequency::Quarterly,
                    upsample: None,
                },
                members,
            )
            .unwrap()],
        }
    }

    #[test]
    fn round_trip_preserves_members() {
        let dir = tempfile::tempdir().unwrap();
        let src = source::<f32>();
        save_checkpoint_set(&src, Precision::F32, dir.path()).unwrap();
        let (set, back) = load_checkpoint_set::<f32>(dir.path()).unwrap();
        assert_eq!(set.precision, Precision::F32);
        assert_eq!(set.seeds(), vec![0, 1, 2]);
        assert_eq!(back.digest(), src.digest());
        assert_eq!(back.config_digest(), set.config_digest);
    }

    #[test]
    fn tampered_member_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint_set(&source::<f64>(), Precision::F64, dir.path()).unwrap();
        let other = build_model::<f64>(
            ModelConfig {
                lookback: 8,
                horizon: 4,
                block_count: 2,
                layers: 2,
                width: 8,
                share_weights: false,
            },
            99,
        )
        .unwrap();
        checkpoint::save(&other, &dir.path().join("quarterly_h4/member_001.nbck")).unwrap();
        assert!(matches!(load_checkpoint_set::<f64>(dir.path()), Err(Error::Checkpoint(_))));
    }
}
