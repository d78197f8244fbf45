//! Point-forecast accuracy metrics and their differentiable loss nodes.
//!
//! Terms whose denominator falls below [`DENOMINATOR_GUARD`] contribute
//! zero while the divisor stays the full horizon length.

use serde::{Deserialize, Serialize};

use crate::autodiff::{LossKind, Matrix, Tape, Var, DENOMINATOR_GUARD};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "smape")]
    Smape,
    #[serde(rename = "smape_m3")]
    SmapeM3,
    #[serde(rename = "mape")]
    Mape,
    #[serde(rename = "mase")]
    Mase,
    #[serde(rename = "owa")]
    Owa,
    #[serde(rename = "nd")]
    Nd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Smape,
        MetricKind::SmapeM3,
        MetricKind::Mape,
        MetricKind::Mase,
        MetricKind::Owa,
        MetricKind::Nd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Smape => "smape",
            MetricKind::SmapeM3 => "smape_m3",
            MetricKind::Mape => "mape",
            MetricKind::Mase => "mase",
            MetricKind::Owa => "owa",
            MetricKind::Nd => "nd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    /// The training loss backing this metric, if it is one.
    pub fn as_loss(self) -> Option<LossKind> {
        match self {
            MetricKind::Smape => Some(LossKind::Smape),
            MetricKind::Mape => Some(LossKind::Mape),
            MetricKind::Mase => Some(LossKind::Mase),
            _ => None,
        }
    }
}

/// Configuration shared by the metric functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub metric: MetricKind,
    /// Seasonal period `m` used by MASE.
    pub seasonality: usize,
    pub denominator_guard: f64,
}

impl MetricConfig {
    pub fn new(metric: MetricKind, seasonality: usize) -> Result<Self> {
        if seasonality == 0 {
            return Err(Error::Config("seasonality must be at least 1".into()));
        }
        Ok(Self {
            metric,
            seasonality,
            denominator_guard: DENOMINATOR_GUARD,
        })
    }
}

/// Per-series values and their aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: MetricKind,
    pub per_series: Vec<f64>,
    pub aggregate: f64,
}

impl MetricResult {
    /// Mean aggregation, used for every metric but ND.
    pub fn from_mean(metric: MetricKind, per_series: Vec<f64>) -> Self {
        let aggregate = if per_series.is_empty() {
            0.0
        } else {
            per_series.iter().sum::<f64>() / per_series.len() as f64
        };
        Self {
            metric,
            per_series,
            aggregate,
        }
    }
}

fn guard<T: Scalar>() -> T {
    T::of(DENOMINATOR_GUARD)
}

fn check_lengths<T>(op: &'static str, y: &[T], yhat: &[T]) -> Result<()> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::Length {
            op,
            left: y.len(),
            right: yhat.len(),
        });
    }
    Ok(())
}

fn ratio_mean<T: Scalar>(
    op: &'static str,
    y: &[T],
    yhat: &[T],
    scale: f64,
    term: impl Fn(T, T) -> (T, T),
) -> Result<T> {
    check_lengths(op, y, yhat)?;
    let g = guard::<T>();
    let total = y
        .iter()
        .zip(yhat)
        .map(|(&a, &b)| {
            let (num, den) = term(a, b);
            if den < g {
                T::zero()
            } else {
                num / den
            }
        })
        .fold(T::zero(), |acc, v| acc + v);
    Ok(T::of(scale) * total / T::from_usize(y.len()).unwrap())
}

/// Symmetric MAPE, `200/H * sum |y - yhat| / (|y| + |yhat|)`.
pub fn smape<T: Scalar>(y: &[T], yhat: &[T]) -> Result<T> {
    ratio_mean("smape", y, yhat, 200.0, |a, b| ((a - b).abs(), a.abs() + b.abs()))
}

/// sMAPE with the signed denominator `y + yhat` used for M3 reporting.
pub fn smape_m3<T: Scalar>(y: &[T], yhat: &[T]) -> Result<T> {
    ratio_mean("smape_m3", y, yhat, 200.0, |a, b| ((a - b).abs(), a + b))
}

pub fn mape<T: Scalar>(y: &[T], yhat: &[T]) -> Result<T> {
    ratio_mean("mape", y, yhat, 100.0, |a, b| ((a - b).abs(), a.abs()))
}

/// Mean absolute seasonal difference over the in-sample history
/// concatenated with the ground truth.
pub fn mase_denominator<T: Scalar>(insample: &[T], y: &[T], m: usize) -> Result<T> {
    if m == 0 {
        return Err(Error::Config("seasonality must be at least 1".into()));
    }
    if insample.len() <= m {
        return Err(Error::Length {
            op: "mase insample (must exceed m)",
            left: insample.len(),
            right: m,
        });
    }
    let full: Vec<T> = insample.iter().chain(y).copied().collect();
    let n = full.len() - m;
    let total = (m..full.len())
        .map(|j| (full[j] - full[j - m]).abs())
        .fold(T::zero(), |a, b| a + b);
    Ok(total / T::from_usize(n).unwrap())
}

pub fn mase<T: Scalar>(y: &[T], yhat: &[T], insample: &[T], m: usize) -> Result<T> {
    check_lengths("mase", y, yhat)?;
    let denom = mase_denominator(insample, y, m)?;
    if denom < guard() {
        return Err(Error::FlatSeasonalHistory);
    }
    let mae = y
        .iter()
        .zip(yhat)
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), |a, b| a + b)
        / T::from_usize(y.len()).unwrap();
    Ok(mae / denom)
}

/// Overall weighted average relative to the Naive2 reference.
pub fn owa<T: Scalar>(smape_model: T, mase_model: T, smape_naive2: T, mase_naive2: T) -> Result<T> {
    if !(smape_naive2 > T::zero()) {
        return Err(Error::ZeroReference("owa sMAPE reference"));
    }
    if !(mase_naive2 > T::zero()) {
        return Err(Error::ZeroReference("owa MASE reference"));
    }
    Ok(T::of(0.5) * (smape_model / smape_naive2 + mase_model / mase_naive2))
}

/// Normalized deviation: a ratio of sums over every series and step.
pub fn nd<T: Scalar, S: AsRef<[T]>>(y_all: &[S], yhat_all: &[S]) -> Result<T> {
    if y_all.len() != yhat_all.len() {
        return Err(Error::Length {
            op: "nd series count",
            left: y_all.len(),
            right: yhat_all.len(),
        });
    }
    let (mut num, mut den) = (T::zero(), T::zero());
    for (y, yhat) in y_all.iter().zip(yhat_all) {
        let (y, yhat) = (y.as_ref(), yhat.as_ref());
        check_lengths("nd", y, yhat)?;
        for (&a, &b) in y.iter().zip(yhat) {
            num = num + (a - b).abs();
            den = den + a.abs();
        }
    }
    if den < guard() {
        return Err(Error::ZeroReference("nd ground-truth sum"));
    }
    Ok(num / den)
}

/// Records a differentiable training loss over the `1 x H` prediction
/// node `pred`.
pub fn loss_grad<'a, T: Scalar>(
    metric: MetricKind,
    y: &[T],
    pred: Var,
    insample: &[T],
    seasonality: usize,
    tape: &mut Tape<'a, T>,
) -> Result<Var> {
    let kind = metric
        .as_loss()
        .ok_or_else(|| Error::Config(format!("{} is not a training loss", metric.name())))?;
    let row_scale = if kind == LossKind::Mase {
        let d = mase_denominator(insample, y, seasonality)?;
        if d < guard() {
            return Err(Error::FlatSeasonalHistory);
        }
        vec![d]
    } else {
        Vec::new()
    };
    tape.loss(kind, pred, Matrix::row_vector(y), row_scale)
}
