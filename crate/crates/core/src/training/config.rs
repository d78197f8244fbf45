use serde::{Deserialize, Serialize};

use crate::data::DEFAULT_HISTORY_HORIZONS;
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::model::{ModelConfig, LOOKBACK_MULTIPLES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Small enough for a laptop: width 128, 8 blocks, 2000 iterations.
    Desk,
    /// The full-size setup: width 512, 30 blocks, 15000 iterations.
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile `{s}` (desk, paper)"))),
        }
    }
}

/// One training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: MetricKind,
    pub lookback_multiple: usize,
    pub seed: u64,
    pub block_count: usize,
    pub layers: usize,
    pub width: usize,
    pub share_weights: bool,
    /// Training anchors come from the last `history_horizons * H` points.
    pub history_horizons: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            iterations: 15_000,
            batch_size: 1024,
            learning_rate: 1e-3,
            loss: MetricKind::Smape,
            lookback_multiple: 2,
            seed: 0,
            block_count: 30,
            layers: 4,
            width: 512,
            share_weights: false,
            history_horizons: DEFAULT_HISTORY_HORIZONS,
        }
    }

    pub fn desk() -> Self {
        Self {
            iterations: 2000,
            batch_size: 64,
            width: 128,
            block_count: 8,
            ..Self::paper()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn model_config(&self, horizon: usize) -> ModelConfig {
        ModelConfig {
            lookback: self.lookback_multiple * horizon,
            horizon,
            block_count: self.block_count,
            layers: self.layers,
            width: self.width,
            share_weights: self.share_weights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.history_horizons == 0 {
            return Err(Error::Config("iterations, batch size and history size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        if self.loss.as_loss().is_none() {
            return Err(Error::Config(format!("{} is not a training loss (smape, mape, mase)", self.loss.name())));
        }
        if !LOOKBACK_MULTIPLES.contains(&self.lookback_multiple) {
            return Err(Error::Config(format!("lookback multiple {} outside 2..=7", self.lookback_multiple)));
        }
        Ok(())
    }
}

/// Grid of ensemble members: every lookback times every loss times
/// `repeats` seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub lookback_multiples: Vec<usize>,
    pub losses: Vec<MetricKind>,
    pub repeats: usize,
}

impl EnsembleSpec {
    /// 6 lookbacks x 3 losses x 5 repeats = 90 members.
    pub fn paper() -> Self {
        Self {
            lookback_multiples: LOOKBACK_MULTIPLES.collect(),
            losses: vec![MetricKind::Smape, MetricKind::Mape, MetricKind::Mase],
            repeats: 5,
        }
    }

    /// 3 lookbacks x 2 losses x 3 repeats = 18 members.
    pub fn desk() -> Self {
        Self {
            lookback_multiples: vec![2, 3, 4],
            losses: vec![MetricKind::Smape, MetricKind::Mase],
            repeats: 3,
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn member_count(&self) -> usize {
        self.lookback_multiples.len() * self.losses.len() * self.repeats
    }

    /// Member configurations in (lookback, loss, repeat) order. Member `i`
    /// gets seed `base.seed + i`.
    pub fn members(&self, base: &TrainConfig) -> Result<Vec<TrainConfig>> {
        if self.member_count() == 0 {
            return Err(Error::Config("ensemble has no members".into()));
        }
        let mut out = Vec::with_capacity(self.member_count());
        for &lookback_multiple in &self.lookback_multiples {
            for &loss in &self.losses {
                for _ in 0..self.repeats {
                    let cfg = TrainConfig {
                        lookback_multiple,
                        loss,
                        seed: base.seed.wrapping_add(out.len() as u64),
                        ..base.clone()
                    };
                    cfg.validate()?;
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }
}
