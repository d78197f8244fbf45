use rand::Rng;

use super::series::TimeSeries;
use super::split::{training_region, SplitMode};
use crate::error::{Error, Result};

/// Training windows come from the last `DEFAULT_HISTORY_HORIZONS * H`
/// points of each training region.
pub const DEFAULT_HISTORY_HORIZONS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub series_id: String,
    /// Index of the first target point inside the training region.
    pub anchor: usize,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    /// `true` where `input` is zero padding rather than an observation.
    pub padding_mask: Vec<bool>,
}

/// Copies the window ending just before `anchor` into `input`, left-padding
/// with zeros. Returns the number of padded slots.
pub fn fill_window(values: &[f64], anchor: usize, input: &mut [f64], target: &mut [f64]) -> usize {
    let t = input.len();
    let start = anchor.saturating_sub(t);
    let pad = t - (anchor - start);
    input[..pad].fill(0.0);
    input[pad..].copy_from_slice(&values[start..anchor]);
    target.copy_from_slice(&values[anchor..anchor + target.len()]);
    pad
}

pub fn window_at(id: &str, values: &[f64], anchor: usize, lookback: usize, horizon: usize) -> WindowSample {
    let mut input = vec![0.0; lookback];
    let mut target = vec![0.0; horizon];
    let pad = fill_window(values, anchor, &mut input, &mut target);
    WindowSample {
        series_id: id.to_string(),
        anchor,
        input,
        target,
        padding_mask: (0..lookback).map(|i| i < pad).collect(),
    }
}

/// Stratified sampler: a series uniformly, then an anchor uniformly among
/// the admissible forecast points of that series.
#[derive(Clone, Debug)]
pub struct WindowSampler<'a> {
    regions: Vec<(&'a str, &'a [f64])>,
    lookback: usize,
    horizon: usize,
    history_horizons: usize,
}

impl<'a> WindowSampler<'a> {
    /// Regions shorter than `horizon + 1` cannot hold a target and are
    /// skipped.
    pub fn new(regions: Vec<(&'a str, &'a [f64])>, lookback: usize, horizon: usize, history_horizons: usize) -> Result<Self> {
        if lookback == 0 || horizon == 0 || history_horizons == 0 {
            return Err(Error::Config("lookback, horizon and history size must be positive".into()));
        }
        let regions: Vec<_> = regions.into_iter().filter(|(_, v)| v.len() > horizon).collect();
        if regions.is_empty() {
            return Err(Error::Degenerate(format!(
                "no training region with more than {horizon} points"
            )));
        }
        Ok(Self {
            regions,
            lookback,
            horizon,
            history_horizons,
        })
    }

    /// Samples from the history that remains after holding out `mode`'s
    /// region, so targets never touch held-out points.
    pub fn from_series(series: &'a [TimeSeries], lookback: usize, horizon: usize, mode: SplitMode) -> Result<Self> {
        let regions = series
            .iter()
            .map(|s| Ok((s.id.as_str(), training_region(s, mode)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(regions, lookback, horizon, DEFAULT_HISTORY_HORIZONS)
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    /// Picks (region index, anchor).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let r = rng.random_range(0..self.regions.len());
        let n = self.regions[r].1.len();
        let hi = n - self.horizon;
        let lo = n.saturating_sub(self.history_horizons * self.horizon).clamp(1, hi);
        (r, rng.random_range(lo..=hi))
    }

    /// Fills one window in place; returns (region index, padded slots).
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, input: &mut [f64], target: &mut [f64]) -> (usize, usize) {
        let (r, anchor) = self.draw(rng);
        (r, fill_window(self.regions[r].1, anchor, input, target))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WindowSample {
        let (r, anchor) = self.draw(rng);
        let (id, values) = self.regions[r];
        window_at(id, values, anchor, self.lookback, self.horizon)
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<WindowSample> {
        (0..batch_size).map(|_| self.sample(rng)).collect()
    }
}

/// Draws training windows from `series`, excluding each series' test
/// horizon.
pub fn sample_batch<R: Rng + ?Sized>(
    series: &[TimeSeries],
    lookback: usize,
    horizon: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<WindowSample>> {
    let sampler = WindowSampler::from_series(series, lookback, horizon, SplitMode::Test)?;
    Ok(sampler.sample_batch(batch_size, rng))
}
