use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{EnsembleSpec, TrainConfig};
use super::ensemble::{median_combine, member_forecasts};
use super::eval::{score_cases, EvalCase};
use super::trainer::train_ensemble;
use crate::data::{SplitMode, TimeSeries};
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::scalar::Scalar;

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub block_counts: Vec<usize>,
    pub sharing: Vec<bool>,
    pub resamples: usize,
    pub bootstrap_seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            block_counts: vec![1, 2, 4, 8, 16, 30],
            sharing: vec![true, false],
            resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            bootstrap_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub block_count: usize,
    pub share_weights: bool,
    /// Metric of the full-ensemble median forecast.
    pub value: f64,
    pub bootstrap_mean: f64,
    pub bootstrap_std: f64,
    pub members: usize,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub schema_version: u32,
    pub metric: MetricKind,
    pub resamples: usize,
    pub config_digest: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub const CSV_HEADER: &'static str = "block_count,share_weights,value,bootstrap_mean,bootstrap_std,members";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.block_count, r.share_weights, r.value, r.bootstrap_mean, r.bootstrap_std, r.members
            ));
        }
        out
    }
}

/// Source training split and target evaluation split of one frequency.
#[derive(Clone, Copy, Debug)]
pub struct SweepPair<'a> {
    pub source: &'a [TimeSeries],
    pub target: &'a [TimeSeries],
    pub horizon: usize,
    pub seasonality: usize,
}

/// Mean and sample standard deviation of the metric over ensembles built
/// by resampling members with replacement. `forecasts[member][series]`.
pub fn bootstrap_metric(
    cases: &[EvalCase],
    forecasts: &[Vec<Vec<f64>>],
    metric: MetricKind,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let k = forecasts.len();
    if k == 0 || resamples == 0 {
        return Err(Error::Config("bootstrap needs members and resamples".into()));
    }
    let horizon = cases.first().map_or(0, |c| c.actual.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let pick: Vec<usize> = (0..k).map(|_| rng.random_range(0..k)).collect();
        let combined = (0..cases.len())
            .map(|s| {
                let f: Vec<Vec<f64>> = pick.iter().map(|&m| forecasts[m][s].clone()).collect();
                median_combine(&f)
            })
            .collect::<Result<Vec<_>>>()?;
        values.push(score_cases(cases, &combined, "bootstrap", horizon)?.value(metric)?);
    }
    // Shifted by the first value so identical resamples give exactly zero.
    let v0 = values[0];
    let shift = values.iter().map(|v| v - v0).sum::<f64>() / resamples as f64;
    let std = if resamples > 1 {
        (values.iter().map(|v| (v - v0 - shift).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok((v0 + shift, std))
}

/// Trains one ensemble per (block count, sharing) setting on the source
/// split and scores it zero-shot on the target split.
pub fn block_sweep<T: Scalar>(
    pair: &SweepPair<'_>,
    sweep: &SweepSpec,
    base: &TrainConfig,
    ensemble: &EnsembleSpec,
    metric: MetricKind,
    workers: usize,
) -> Result<SweepTable> {
    if sweep.block_counts.is_empty() || sweep.block_counts.contains(&0) || sweep.sharing.is_empty() {
        return Err(Error::Config("sweep needs block counts >= 1 and a sharing setting".into()));
    }
    let cases = pair
        .target
        .iter()
        .map(|s| EvalCase::from_series(s, SplitMode::Test))
        .collect::<Result<Vec<_>>>()?;
    if cases.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rows = Vec::new();
    let mut configs = Vec::new();
    for &share_weights in &sweep.sharing {
        for &block_count in &sweep.block_counts {
            let cfg = TrainConfig {
                block_count,
                share_weights,
                ..base.clone()
            };
            configs.push(cfg.clone());
            let trained = train_ensemble::<T>(pair.source, pair.horizon, pair.seasonality, &cfg, ensemble, workers)?;
            let models: Vec<_> = trained.iter().map(|t| t.model.clone()).collect();
            // forecasts[member][series]
            let mut forecasts = vec![Vec::with_capacity(cases.len()); models.len()];
            for case in &cases {
                let history: Vec<T> = case.history.iter().map(|v| T::of(*v)).collect();
                for (m, f) in member_forecasts(&models, &history)?.into_iter().enumerate() {
                    forecasts[m].push(f.into_iter().map(Scalar::to_f64_lossy).collect::<Vec<f64>>());
                }
            }
            let full = (0..cases.len())
                .map(|s| median_combine(&forecasts.iter().map(|f| f[s].clone()).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>>>()?;
            let value = score_cases(&cases, &full, "sweep", pair.horizon)?.value(metric)?;
            let (bootstrap_mean, bootstrap_std) =
                bootstrap_metric(&cases, &forecasts, metric, sweep.resamples, sweep.bootstrap_seed)?;
            rows.push(SweepRow {
                block_count,
                share_weights,
                value,
                bootstrap_mean,
                bootstrap_std,
                members: models.len(),
                seeds: models.iter().map(|m| m.seed()).collect(),
            });
        }
    }
    let json = serde_json::to_vec(&(&configs, ensemble, sweep)).expect("plain data serializes");
    Ok(SweepTable {
        schema_version: super::eval::REPORT_SCHEMA_VERSION,
        metric,
        resamples: sweep.resamples,
        config_digest: Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Frequency;

    fn case(k: usize) -> EvalCase {
        let s = TimeSeries::new(
            format!("s{k}"),
            Frequency::Yearly,
            (0..12).map(|i| 5.0 + (i * (k + 1)) as f64).collect(),
            3,
        )
        .unwrap();
        EvalCase::from_series(&s, SplitMode::Test).unwrap()
    }

    #[test]
    fn single_member_bootstrap_has_zero_spread() {
        let cases = vec![case(0), case(1)];
        let forecasts = vec![vec![vec![10.0; 3], vec![12.0; 3]]];
        let (mean, std) = bootstrap_metric(&cases, &forecasts, MetricKind::Smape, 50, 1).unwrap();
        let direct = score_cases(&cases, &forecasts[0], "x", 3).unwrap().smape;
        assert!((mean - direct).abs() < 1e-12);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn spread_members_give_positive_std() {
        let cases = vec![case(0)];
        let forecasts = vec![vec![vec![10.0; 3]], vec![vec![30.0; 3]], vec![vec![20.0; 3]]];
        let (_, std) = bootstrap_metric(&cases, &forecasts, MetricKind::Smape, 200, 2).unwrap();
        assert!(std > 0.0);
    }
}
