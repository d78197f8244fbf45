use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use serde::{Deserialize, Serialize};

use super::config::{EnsembleSpec, TrainConfig};
use super::eval::{SourceEnsemble, TrainedSource};
use crate::autodiff::{adam_step, AdamConfig, AdamState, LossKind, Matrix};
use crate::data::{map_frequency, source_series, Corpus, SourceSplit, SplitMode, TimeSeries, WindowSampler};
use crate::error::{Error, Result};
use crate::metrics::{mase_denominator, MetricKind};
use crate::model::{build_model, window_scale, NBeatsModel};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub config: TrainConfig,
    pub model: NBeatsModel<T>,
    /// Batch loss before each update.
    pub loss_curve: Vec<f64>,
}

/// MASE denominator of one training window; zero (a masked row) when the
/// observed part of the input is too short.
fn row_scale(observed: &[f64], target: &[f64], m: usize) -> f64 {
    if observed.len() <= m {
        0.0
    } else {
        mase_denominator(observed, target, m).unwrap_or(0.0)
    }
}

/// A training batch in scaled space: every window and its target divided
/// by the window maximum.
struct Batch<T> {
    inputs: Matrix<T>,
    targets: Matrix<T>,
    scales: Vec<T>,
}

fn draw_batch<T: Scalar>(
    sampler: &WindowSampler<'_>,
    rng: &mut ChaCha8Rng,
    batch_size: usize,
    seasonality: usize,
    with_scales: bool,
) -> Result<Batch<T>> {
    let (t, h) = (sampler.lookback(), sampler.horizon());
    let mut x = vec![0.0; t];
    let mut y = vec![0.0; h];
    let mut inputs = Vec::with_capacity(batch_size * t);
    let mut targets = Vec::with_capacity(batch_size * h);
    let mut scales = Vec::with_capacity(if with_scales { batch_size } else { 0 });
    for _ in 0..batch_size {
        let (_, pad) = sampler.fill(rng, &mut x, &mut y);
        let s = window_scale(&x);
        inputs.extend(x.iter().map(|v| T::of(v / s)));
        targets.extend(y.iter().map(|v| T::of(v / s)));
        if with_scales {
            scales.push(T::of(row_scale(&x[pad..], &y, seasonality) / s));
        }
    }
    Ok(Batch {
        inputs: Matrix::from_vec(batch_size, t, inputs)?,
        targets: Matrix::from_vec(batch_size, h, targets)?,
        scales,
    })
}

/// Starting point of training: the seeded random model with every forecast
/// head zeroed. A forecast that starts negative sits where sMAPE is flat and
/// never recovers; starting every step at zero avoids that.
pub fn initial_model<T: Scalar>(cfg: &TrainConfig, horizon: usize) -> Result<NBeatsModel<T>> {
    let mut model = build_model::<T>(cfg.model_config(horizon), cfg.seed)?;
    for b in model.stored_blocks_mut() {
        b.forecast_head_mut().as_mut_slice().fill(T::zero());
    }
    Ok(model)
}

/// Trains one model with Adam on windows drawn from the training regions
/// of `series` (each series minus its test horizon).
pub fn train<T: Scalar>(
    series: &[TimeSeries],
    horizon: usize,
    seasonality: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if series.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let kind = cfg.loss.as_loss().expect("validated");
    let model_config = cfg.model_config(horizon);
    let regions = series
        .iter()
        .map(|s| {
            crate::data::training_region(s, SplitMode::Test).map(|r| (s.id.as_str(), r))
        })
        .collect::<Result<Vec<_>>>()?;
    let sampler = WindowSampler::new(regions, model_config.lookback, horizon, cfg.history_horizons)?;
    let mut model = initial_model::<T>(cfg, horizon)?;
    let shapes: Vec<(String, (usize, usize))> = model
        .parameters()
        .into_iter()
        .map(|(n, m)| (n, m.shape()))
        .collect();
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &shapes,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let batch = draw_batch::<T>(&sampler, &mut rng, cfg.batch_size, seasonality, kind == LossKind::Mase)?;
        let (loss, grads) = match model.loss_gradients(kind, &batch.inputs, batch.targets, batch.scales) {
            Err(Error::NonFiniteBlock { .. }) => return Err(Error::NonFiniteLoss { iteration }),
            other => other?,
        };
        let loss = loss.to_f64_lossy();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        loss_curve.push(loss);
        let mut params = model.parameters_mut();
        adam_step(&mut params, &grads, &mut adam)?;
    }
    Ok(TrainOutcome {
        config: cfg.clone(),
        model,
        loss_curve,
    })
}

/// Worker count from `NBEATS_WORKERS`, else the number of CPUs.
pub fn default_workers() -> usize {
    std::env::var("NBEATS_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Trains every member of `spec` in parallel on `workers` threads. Output
/// order follows [`EnsembleSpec::members`], independent of scheduling.
pub fn train_ensemble<T: Scalar>(
    series: &[TimeSeries],
    horizon: usize,
    seasonality: usize,
    base: &TrainConfig,
    spec: &EnsembleSpec,
    workers: usize,
) -> Result<Vec<TrainOutcome<T>>> {
    let members = spec.members(base)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        members
            .par_iter()
            .map(|cfg| train::<T>(series, horizon, seasonality, cfg))
            .collect()
    })
}

/// One ensemble to train: a source split forecasting `horizon` steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedSplit {
    pub split: SourceSplit,
    pub horizon: usize,
}

impl PlannedSplit {
    /// Seasonal period of the (possibly upsampled) source split.
    pub fn seasonality(&self) -> usize {
        self.split.frequency.seasonality() * self.split.upsample.unwrap_or(1)
    }
}

/// Ensembles needed to forecast every split of `target` from `source`.
/// Without a target every source split is trained at its own horizon.
pub fn training_plan(source: &Corpus, target: Option<&Corpus>) -> Result<Vec<PlannedSplit>> {
    let mut plan: Vec<PlannedSplit> = Vec::new();
    let wanted: Vec<(crate::data::Frequency, usize, bool)> = match target {
        Some(t) => t.frequencies().map(|f| (f, t.horizon(f).expect("non-empty group"), true)).collect(),
        None => source.frequencies().map(|f| (f, source.horizon(f).expect("non-empty group"), false)).collect(),
    };
    for (frequency, horizon, mapped) in wanted {
        let split = if mapped {
            map_frequency(source, frequency)?
        } else {
            SourceSplit {
                frequency,
                upsample: None,
            }
        };
        let p = PlannedSplit { split, horizon };
        if !plan.contains(&p) {
            plan.push(p);
        }
    }
    Ok(plan)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub split: SourceSplit,
    pub horizon: usize,
    pub seed: u64,
    pub lookback_multiple: usize,
    pub loss: MetricKind,
    pub first_loss: f64,
    /// Mean batch loss over the last tenth of training.
    pub final_loss: f64,
}

/// Trains one ensemble per planned split.
pub fn train_source<T: Scalar>(
    source: &Corpus,
    plan: &[PlannedSplit],
    base: &TrainConfig,
    spec: &EnsembleSpec,
    workers: usize,
) -> Result<(TrainedSource<T>, Vec<MemberSummary>)> {
    let mut ensembles = Vec::with_capacity(plan.len());
    let mut summaries = Vec::new();
    for p in plan {
        let series = source_series(source, p.split)?;
        let outcomes = train_ensemble::<T>(&series, p.horizon, p.seasonality(), base, spec, workers)?;
        for o in &outcomes {
            let tail = (o.loss_curve.len() / 10).max(1);
            let last = &o.loss_curve[o.loss_curve.len().saturating_sub(tail)..];
            summaries.push(MemberSummary {
                split: p.split,
                horizon: p.horizon,
                seed: o.config.seed,
                lookback_multiple: o.config.lookback_multiple,
                loss: o.config.loss,
                first_loss: o.loss_curve.first().copied().unwrap_or(f64::NAN),
                final_loss: last.iter().sum::<f64>() / last.len().max(1) as f64,
            });
        }
        ensembles.push(SourceEnsemble::new(p.split, outcomes.into_iter().map(|o| o.model).collect())?);
    }
    Ok((
        TrainedSource {
            name: source.name.clone(),
            dataset: source.dataset.clone(),
            ensembles,
        },
        summaries,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_corpus, Frequency, SynthFamily};
    use crate::metrics::MetricKind;
    use crate::model::checkpoint;

    fn tiny(loss: MetricKind) -> TrainConfig {
        TrainConfig {
            iterations: 30,
            batch_size: 16,
            width: 16,
            block_count: 2,
            layers: 2,
            loss,
            seed: 5,
            ..TrainConfig::desk()
        }
    }

    fn corpus() -> Vec<TimeSeries> {
        synth_corpus(&SynthFamily::source(), 10, 1)
            .unwrap()
            .group(Frequency::Monthly)
            .unwrap()
            .to_vec()
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let s = corpus();
        let a = train::<f64>(&s, 18, 12, &tiny(MetricKind::Mase)).unwrap();
        let b = train::<f64>(&s, 18, 12, &tiny(MetricKind::Mase)).unwrap();
        assert_eq!(checkpoint::to_bytes(&a.model), checkpoint::to_bytes(&b.model));
        assert_eq!(a.loss_curve, b.loss_curve);
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let s = corpus();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..tiny(MetricKind::Smape)
        };
        let trained = train::<f64>(&s, 18, 12, &cfg).unwrap();
        let init = initial_model::<f64>(&cfg, 18).unwrap();
        assert_eq!(checkpoint::digest(&trained.model), checkpoint::digest(&init));
        assert!(init.stored_blocks().iter().all(|b| b.forecast_head().max_abs() == 0.0));
    }

    #[test]
    fn empty_series_list_is_an_error() {
        assert!(matches!(
            train::<f64>(&[], 18, 12, &tiny(MetricKind::Smape)),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn parallel_ensemble_matches_sequential_training() {
        let s = corpus();
        let spec = EnsembleSpec {
            lookback_multiples: vec![2, 3],
            losses: vec![MetricKind::Smape],
            repeats: 1,
        };
        let base = tiny(MetricKind::Smape);
        let par = train_ensemble::<f64>(&s, 18, 12, &base, &spec, 2).unwrap();
        for (member, cfg) in par.iter().zip(spec.members(&base).unwrap()) {
            let seq = train::<f64>(&s, 18, 12, &cfg).unwrap();
            assert_eq!(checkpoint::digest(&member.model), checkpoint::digest(&seq.model));
        }
    }
}
