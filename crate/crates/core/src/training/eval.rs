use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ensemble::{ensemble_digest, ensemble_forecast};
use crate::baselines::naive2;
use crate::data::{map_frequency_for, split_series, Corpus, DatasetKind, Frequency, SourceSplit, SplitMode, TimeSeries};
use crate::error::{Error, Result};
use crate::metrics::{mape, mase, owa, smape, smape_m3, MetricKind};
use crate::model::{ModelConfig, NBeatsModel};
use crate::scalar::Scalar;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Frozen members trained on one source split. Evaluation only reads them.
#[derive(Clone, Debug)]
pub struct SourceEnsemble<T> {
    split: SourceSplit,
    members: Vec<NBeatsModel<T>>,
}

impl<T: Scalar> SourceEnsemble<T> {
    pub fn new(split: SourceSplit, members: Vec<NBeatsModel<T>>) -> Result<Self> {
        let h = members
            .first()
            .ok_or_else(|| Error::Config("ensemble has no members".into()))?
            .horizon();
        if let Some(m) = members.iter().find(|m| m.horizon() != h) {
            return Err(Error::Length {
                op: "ensemble horizon",
                left: m.horizon(),
                right: h,
            });
        }
        Ok(Self { split, members })
    }

    pub fn split(&self) -> SourceSplit {
        self.split
    }

    pub fn members(&self) -> &[NBeatsModel<T>] {
        &self.members
    }

    pub fn horizon(&self) -> usize {
        self.members[0].horizon()
    }
}

/// Everything trained on one source dataset.
#[derive(Clone, Debug)]
pub struct TrainedSource<T> {
    pub name: String,
    pub dataset: DatasetKind,
    pub ensembles: Vec<SourceEnsemble<T>>,
}

impl<T: Scalar> TrainedSource<T> {
    pub fn members(&self) -> impl Iterator<Item = &NBeatsModel<T>> {
        self.ensembles.iter().flat_map(|e| e.members.iter())
    }

    pub fn digest(&self) -> String {
        let all: Vec<NBeatsModel<T>> = self.members().cloned().collect();
        ensemble_digest(&all)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.members().map(NBeatsModel::seed).collect()
    }

    /// Digest of the topology and seed of every member.
    pub fn config_digest(&self) -> String {
        #[derive(Serialize)]
        struct Entry<'a> {
            split: SourceSplit,
            config: &'a ModelConfig,
            seed: u64,
        }
        let entries: Vec<Entry> = self
            .ensembles
            .iter()
            .flat_map(|e| {
                e.members.iter().map(move |m| Entry {
                    split: e.split,
                    config: m.config(),
                    seed: m.seed(),
                })
            })
            .collect();
        let json = serde_json::to_vec(&entries).expect("plain data serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Metrics of one group of series. Sums are kept so that aggregates can be
/// recomputed from rows alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub split: String,
    pub series: usize,
    pub horizon: usize,
    pub smape: f64,
    pub smape_m3: f64,
    pub mape: f64,
    /// Mean over series with a usable in-sample seasonal difference.
    pub mase: Option<f64>,
    pub mase_series: usize,
    pub owa: Option<f64>,
    pub nd: Option<f64>,
    pub nd_abs_error: f64,
    pub nd_abs_actual: f64,
    pub naive2_smape: f64,
    pub naive2_mase: Option<f64>,
}

impl MetricRow {
    pub fn value(&self, metric: MetricKind) -> Result<f64> {
        let missing = |what| Error::Degenerate(format!("{what} undefined for split {}", self.split));
        Ok(match metric {
            MetricKind::Smape => self.smape,
            MetricKind::SmapeM3 => self.smape_m3,
            MetricKind::Mape => self.mape,
            MetricKind::Mase => self.mase.ok_or_else(|| missing("MASE"))?,
            MetricKind::Owa => self.owa.ok_or_else(|| missing("OWA"))?,
            MetricKind::Nd => self.nd.ok_or_else(|| missing("ND"))?,
        })
    }
}

/// Ground truth, history and Naive2 reference of one evaluated series.
#[derive(Clone, Debug)]
pub struct EvalCase {
    pub id: String,
    pub history: Vec<f64>,
    pub actual: Vec<f64>,
    pub naive2: Vec<f64>,
    pub seasonality: usize,
}

impl EvalCase {
    pub fn from_series(s: &TimeSeries, mode: SplitMode) -> Result<Self> {
        let part = split_series(s, mode)?;
        let m = s.frequency.seasonality();
        Ok(Self {
            id: s.id.clone(),
            history: part.history.to_vec(),
            actual: part.held_out.to_vec(),
            naive2: naive2(part.history, part.horizon, m)?,
            seasonality: m,
        })
    }
}

#[derive(Default)]
pub(crate) struct Accumulator {
    n: usize,
    smape: f64,
    smape_m3: f64,
    mape: f64,
    mase: f64,
    mase_n: usize,
    abs_error: f64,
    abs_actual: f64,
    n2_smape: f64,
    n2_mase: f64,
}

impl Accumulator {
    pub(crate) fn add(&mut self, case: &EvalCase, forecast: &[f64]) -> Result<()> {
        let y = &case.actual;
        self.n += 1;
        self.smape += smape(y, forecast)?;
        self.smape_m3 += smape_m3(y, forecast)?;
        self.mape += mape(y, forecast)?;
        self.n2_smape += smape(y, &case.naive2)?;
        if case.history.len() > case.seasonality {
            if let (Ok(a), Ok(b)) = (
                mase(y, forecast, &case.history, case.seasonality),
                mase(y, &case.naive2, &case.history, case.seasonality),
            ) {
                self.mase += a;
                self.n2_mase += b;
                self.mase_n += 1;
            }
        }
        self.abs_error += y.iter().zip(forecast).map(|(a, b)| (a - b).abs()).sum::<f64>();
        self.abs_actual += y.iter().map(|a| a.abs()).sum::<f64>();
        Ok(())
    }

    pub(crate) fn row(&self, split: String, horizon: usize) -> MetricRow {
        let n = self.n.max(1) as f64;
        let per_mase = |s: f64| (self.mase_n > 0).then(|| s / self.mase_n as f64);
        finish_row(MetricRow {
            split,
            series: self.n,
            horizon,
            smape: self.smape / n,
            smape_m3: self.smape_m3 / n,
            mape: self.mape / n,
            mase: per_mase(self.mase),
            mase_series: self.mase_n,
            owa: None,
            nd: None,
            nd_abs_error: self.abs_error,
            nd_abs_actual: self.abs_actual,
            naive2_smape: self.n2_smape / n,
            naive2_mase: per_mase(self.n2_mase),
        })
    }
}

fn finish_row(mut row: MetricRow) -> MetricRow {
    row.nd = (row.nd_abs_actual > 0.0).then(|| row.nd_abs_error / row.nd_abs_actual);
    row.owa = match (row.mase, row.naive2_mase) {
        (Some(m), Some(n2m)) => owa(row.smape, m, row.naive2_smape, n2m).ok(),
        _ => None,
    };
    row
}

/// Series-weighted combination of per-split rows; ND pools the sums.
pub fn aggregate_rows(rows: &[MetricRow], label: &str) -> MetricRow {
    let n: usize = rows.iter().map(|r| r.series).sum();
    let mn: usize = rows.iter().map(|r| r.mase_series).sum();
    let w = |f: fn(&MetricRow) -> f64| rows.iter().map(|r| r.series as f64 * f(r)).sum::<f64>() / n.max(1) as f64;
    let wm = |f: fn(&MetricRow) -> Option<f64>| {
        (mn > 0).then(|| {
            rows.iter()
                .map(|r| r.mase_series as f64 * f(r).unwrap_or(0.0))
                .sum::<f64>()
                / mn as f64
        })
    };
    let horizon = if rows.windows(2).all(|p| p[0].horizon == p[1].horizon) {
        rows.first().map_or(0, |r| r.horizon)
    } else {
        0
    };
    finish_row(MetricRow {
        split: label.to_string(),
        series: n,
        horizon,
        smape: w(|r| r.smape),
        smape_m3: w(|r| r.smape_m3),
        mape: w(|r| r.mape),
        mase: wm(|r| r.mase),
        mase_series: mn,
        owa: None,
        nd: None,
        nd_abs_error: rows.iter().map(|r| r.nd_abs_error).sum(),
        nd_abs_actual: rows.iter().map(|r| r.nd_abs_actual).sum(),
        naive2_smape: w(|r| r.naive2_smape),
        naive2_mase: wm(|r| r.naive2_mase),
    })
}

/// Scores `forecasts[i]` against `cases[i]`.
pub fn score_cases(cases: &[EvalCase], forecasts: &[Vec<f64>], label: &str, horizon: usize) -> Result<MetricRow> {
    if cases.len() != forecasts.len() {
        return Err(Error::Length {
            op: "cases vs forecasts",
            left: cases.len(),
            right: forecasts.len(),
        });
    }
    let mut acc = Accumulator::default();
    for (c, f) in cases.iter().zip(forecasts) {
        acc.add(c, f)?;
    }
    Ok(acc.row(label.to_string(), horizon))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub source: String,
    pub target: String,
    pub metric: MetricKind,
    pub headline: Option<f64>,
    pub member_count: usize,
    pub seeds: Vec<u64>,
    pub config_digest: String,
    pub digest_before: String,
    pub digest_after: String,
    pub rows: Vec<MetricRow>,
    pub aggregate: MetricRow,
    /// Kept out of the serialized report so reruns are byte-identical.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "split,series,horizon,smape,smape_m3,mape,mase,mase_series,owa,nd,naive2_smape,naive2_mase";

    pub fn weights_unchanged(&self) -> bool {
        self.digest_before == self.digest_after
    }

    /// One line per split plus the aggregate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in self.rows.iter().chain(std::iter::once(&self.aggregate)) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.split,
                r.series,
                r.horizon,
                r.smape,
                r.smape_m3,
                r.mape,
                opt(r.mase),
                r.mase_series,
                opt(r.owa),
                opt(r.nd),
                r.naive2_smape,
                opt(r.naive2_mase)
            ));
        }
        out
    }
}

fn eval_split<T: Scalar>(ensemble: &SourceEnsemble<T>, series: &[TimeSeries]) -> Result<Vec<(EvalCase, Vec<f64>)>> {
    series
        .par_iter()
        .map(|s| {
            let case = EvalCase::from_series(s, SplitMode::Test)?;
            let history: Vec<T> = case.history.iter().map(|v| T::of(*v)).collect();
            let f = ensemble_forecast(ensemble.members(), &history)?;
            let f = f.into_iter().map(Scalar::to_f64_lossy).collect();
            Ok((case, f))
        })
        .collect()
}

/// Forecasts every target series one at a time from its own history with
/// the frozen source ensembles and scores the last horizon.
pub fn zero_shot_eval<T: Scalar>(
    source: &TrainedSource<T>,
    target: &Corpus,
    metric: MetricKind,
    workers: usize,
) -> Result<EvalReport> {
    let started = std::time::Instant::now();
    let digest_before = source.digest();
    let available: Vec<Frequency> = source.ensembles.iter().map(|e| e.split.frequency).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows = Vec::new();
    for frequency in target.frequencies() {
        let series = target.group(frequency).expect("listed frequency");
        let horizon = target.horizon(frequency).expect("non-empty group");
        let split = map_frequency_for(&source.dataset, &source.name, &available, frequency)?;
        let candidates: Vec<&SourceEnsemble<T>> = source.ensembles.iter().filter(|e| e.split == split).collect();
        if candidates.is_empty() {
            return Err(Error::Config(format!("no ensemble trained on source split {split:?}")));
        }
        let ensemble = candidates.iter().find(|e| e.horizon() == horizon).ok_or_else(|| {
            let have: Vec<String> = candidates.iter().map(|e| e.horizon().to_string()).collect();
            Error::Config(format!(
                "{frequency}: target horizon {horizon} but the source ensembles forecast {}",
                have.join(", ")
            ))
        })?;
        let scored = pool.install(|| eval_split(ensemble, series))?;
        let mut acc = Accumulator::default();
        for (case, f) in &scored {
            acc.add(case, f)?;
        }
        rows.push(acc.row(frequency.to_string(), horizon));
    }
    if rows.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let aggregate = aggregate_rows(&rows, "All");
    let digest_after = source.digest();
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        source: source.name.clone(),
        target: target.name.clone(),
        metric,
        headline: aggregate.value(metric).ok(),
        member_count: source.members().count(),
        seeds: source.seeds(),
        config_digest: source.config_digest(),
        digest_before,
        digest_after,
        rows,
        aggregate,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(split: &str, series: usize, smape: f64, err: f64, act: f64) -> MetricRow {
        finish_row(MetricRow {
            split: split.into(),
            series,
            horizon: 6,
            smape,
            smape_m3: smape,
            mape: smape,
            mase: Some(smape / 10.0),
            mase_series: series,
            owa: None,
            nd: None,
            nd_abs_error: err,
            nd_abs_actual: act,
            naive2_smape: 2.0 * smape,
            naive2_mase: Some(smape / 5.0),
        })
    }

    #[test]
    fn aggregate_is_series_weighted_and_nd_pooled() {
        let rows = vec![row("Yearly", 1, 10.0, 1.0, 10.0), row("Monthly", 3, 20.0, 9.0, 10.0)];
        let agg = aggregate_rows(&rows, "All");
        assert_eq!(agg.series, 4);
        assert!((agg.smape - 17.5).abs() < 1e-12);
        assert!((agg.nd.unwrap() - 0.5).abs() < 1e-12);
        assert!((agg.owa.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn naive2_scores_owa_one() {
        let s = TimeSeries::new(
            "a",
            Frequency::Quarterly,
            (0..40).map(|k| 10.0 + (k % 4) as f64 + 0.1 * k as f64).collect(),
            8,
        )
        .unwrap();
        let case = EvalCase::from_series(&s, SplitMode::Test).unwrap();
        let row = score_cases(&[case.clone()], &[case.naive2.clone()], "q", 8).unwrap();
        assert_eq!(row.owa, Some(1.0));
    }
}
