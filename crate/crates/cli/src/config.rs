use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use nbeats::data::Frequency;
use nbeats::metrics::MetricKind;
use nbeats::training::{EnsembleSpec, Precision, Profile, SweepSpec, TrainConfig};

pub const RUN_CONFIG_SCHEMA_VERSION: u32 = 1;

/// Run description as written on disk. Every field is optional; missing
/// values come from the selected profile, which defaults to `paper`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub schema_version: Option<u32>,
    pub profile: Option<Profile>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub precision: Option<Precision>,
    pub metric: Option<MetricKind>,
    pub workers: Option<usize>,
    /// Sweep split of the target corpus.
    pub frequency: Option<Frequency>,
    pub train: Option<Value>,
    pub ensemble: Option<Value>,
    pub sweep: Option<Value>,
}

/// Fully resolved run, embedded in command outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub profile: Profile,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub precision: Precision,
    pub metric: MetricKind,
    pub frequency: Option<Frequency>,
    pub train: TrainConfig,
    pub ensemble: EnsembleSpec,
    pub sweep: SweepSpec,
}

impl RunConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(v) = file.schema_version {
            if v != RUN_CONFIG_SCHEMA_VERSION {
                bail!("{}: run config schema {v} (expected {RUN_CONFIG_SCHEMA_VERSION})", path.display());
            }
        }
        Ok(file)
    }

    /// Applies the profile defaults under the file values; a `profile`
    /// flag replaces the file's profile before defaults are taken.
    pub fn resolve(self, profile: Option<Profile>) -> Result<RunConfig> {
        let profile = profile.or(self.profile).unwrap_or(Profile::Paper);
        Ok(RunConfig {
            schema_version: RUN_CONFIG_SCHEMA_VERSION,
            profile,
            source: self.source,
            target: self.target,
            out: self.out,
            precision: self.precision.unwrap_or(match profile {
                Profile::Desk => Precision::F32,
                Profile::Paper => Precision::F64,
            }),
            metric: self.metric.unwrap_or(MetricKind::Smape),
            frequency: self.frequency,
            train: overlay(TrainConfig::for_profile(profile), self.train.as_ref()).context("`train` section")?,
            ensemble: overlay(EnsembleSpec::for_profile(profile), self.ensemble.as_ref())
                .context("`ensemble` section")?,
            sweep: overlay(SweepSpec::default(), self.sweep.as_ref()).context("`sweep` section")?,
        })
    }
}

/// Replaces the fields of `base` named in the `patch` object.
fn overlay<T: Serialize + DeserializeOwned>(base: T, patch: Option<&Value>) -> Result<T> {
    let Some(patch) = patch else {
        return Ok(base);
    };
    let Value::Object(fields) = patch else {
        bail!("expected an object");
    };
    let mut merged = serde_json::to_value(base)?;
    let target = merged.as_object_mut().expect("config structs serialize to objects");
    for (k, v) in fields {
        if !target.contains_key(k) {
            bail!("unknown field `{k}`");
        }
        target.insert(k.clone(), v.clone());
    }
    Ok(serde_json::from_value(merged)?)
}
