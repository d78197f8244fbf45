//! Classical statistical forecasters: Naive, Seasonal Naive, Naive2, SES
//! and Theta. All operate on `f64` observations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-sided 90% critical value of the seasonality test.
pub const SEASONALITY_Z: f64 = 1.645;

fn non_empty(insample: &[f64]) -> Result<f64> {
    insample
        .last()
        .copied()
        .ok_or_else(|| Error::Degenerate("empty series".into()))
}

pub fn naive(insample: &[f64], horizon: usize) -> Result<Vec<f64>> {
    Ok(vec![non_empty(insample)?; horizon])
}

/// Repeats the last observed season.
pub fn seasonal_naive(insample: &[f64], horizon: usize, m: usize) -> Result<Vec<f64>> {
    if m == 0 || insample.len() < m {
        return Err(Error::Degenerate(format!(
            "seasonal naive needs at least m = {m} points, got {}",
            insample.len()
        )));
    }
    let n = insample.len();
    Ok((1..=horizon)
        .map(|i| insample[n + i - 1 - m * i.div_ceil(m)])
        .collect())
}

/// Sample autocorrelation at `lag` around the full-sample mean.
pub fn acf(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = (lag..n).map(|i| (x[i] - mean) * (x[i - lag] - mean)).sum();
    num / denom
}

/// Lag-`m` autocorrelation test: seasonal when `|r_m|` exceeds
/// `1.645 * sqrt((1 + 2 * sum_{k<m} r_k^2) / n)`. Series shorter than `2m`
/// are never declared seasonal.
pub fn seasonality_test(x: &[f64], m: usize) -> bool {
    if m <= 1 || x.len() < 2 * m {
        return false;
    }
    let s: f64 = (1..m).map(|k| acf(x, k).powi(2)).sum();
    let limit = SEASONALITY_Z * ((1.0 + 2.0 * s) / x.len() as f64).sqrt();
    acf(x, m).abs() > limit
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    /// Multiplicative index per season, aligned so that observation `i`
    /// uses `indices[i % m]`.
    pub indices: Vec<f64>,
    pub deseasonalized: Vec<f64>,
    pub seasonality_detected: bool,
    /// Set when non-positive observations ruled out the multiplicative
    /// model and no adjustment was applied.
    pub nonpositive_fallback: bool,
}

impl DecompositionResult {
    pub fn period(&self) -> usize {
        self.indices.len()
    }

    pub fn index_at(&self, position: usize) -> f64 {
        self.indices[position % self.indices.len()]
    }

    /// Multiplies a forecast starting at position `start` by its indices.
    pub fn reseasonalize(&self, start: usize, forecast: &[f64]) -> Vec<f64> {
        forecast
            .iter()
            .enumerate()
            .map(|(h, v)| v * self.index_at(start + h))
            .collect()
    }
}

/// Centered moving average of order `m` (a 2 x m average for even `m`).
/// Entry `i` is `None` where the window does not fit.
pub fn centered_moving_average(x: &[f64], m: usize) -> Vec<Option<f64>> {
    let n = x.len();
    let mut out = vec![None; n];
    if m == 0 || n < m + (1 - m % 2) {
        return out;
    }
    let half = m / 2;
    for (i, slot) in out.iter_mut().enumerate() {
        if m % 2 == 1 {
            if i >= half && i + half < n {
                *slot = Some(x[i - half..=i + half].iter().sum::<f64>() / m as f64);
            }
        } else if i >= half && i + half < n {
            let inner: f64 = x[i + 1 - half..i + half].iter().sum();
            *slot = Some((0.5 * x[i - half] + inner + 0.5 * x[i + half]) / m as f64);
        }
    }
    out
}

/// Classical multiplicative decomposition, applied only when the
/// seasonality test passes.
pub fn decompose(insample: &[f64], m: usize) -> Result<DecompositionResult> {
    non_empty(insample)?;
    let m = m.max(1);
    let flat = |fallback| DecompositionResult {
        indices: vec![1.0; m],
        deseasonalized: insample.to_vec(),
        seasonality_detected: false,
        nonpositive_fallback: fallback,
    };
    if !seasonality_test(insample, m) {
        return Ok(flat(false));
    }
    if insample.iter().any(|v| *v <= 0.0) {
        return Ok(flat(true));
    }
    let ma = centered_moving_average(insample, m);
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (i, (y, t)) in insample.iter().zip(&ma).enumerate() {
        if let Some(t) = t {
            sums[i % m] += y / t;
            counts[i % m] += 1;
        }
    }
    if counts.contains(&0) {
        return Ok(flat(false));
    }
    let mut indices: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
    let mean = indices.iter().sum::<f64>() / m as f64;
    for v in &mut indices {
        *v /= mean;
    }
    let deseasonalized = insample
        .iter()
        .enumerate()
        .map(|(i, y)| y / indices[i % m])
        .collect();
    Ok(DecompositionResult {
        indices,
        deseasonalized,
        seasonality_detected: true,
        nonpositive_fallback: false,
    })
}

/// Naive on the seasonally adjusted series, re-seasonalized.
pub fn naive2_detailed(insample: &[f64], horizon: usize, m: usize) -> Result<(Vec<f64>, DecompositionResult)> {
    let d = decompose(insample, m)?;
    let flat = naive(&d.deseasonalized, horizon)?;
    Ok((d.reseasonalize(insample.len(), &flat), d))
}

pub fn naive2(insample: &[f64], horizon: usize, m: usize) -> Result<Vec<f64>> {
    naive2_detailed(insample, horizon, m).map(|(f, _)| f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SesAlpha {
    Fixed(f64),
    /// Grid search over 0.01, 0.02, ..., 0.99 minimizing the in-sample
    /// one-step squared error.
    Fit,
}

/// Final level and in-sample one-step SSE, starting from `l_0 = y_0`.
fn ses_run(x: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = x[0];
    let mut sse = 0.0;
    for y in &x[1..] {
        sse += (y - level).powi(2);
        level += alpha * (y - level);
    }
    (level, sse)
}

pub fn fit_ses_alpha(insample: &[f64]) -> Result<f64> {
    if insample.len() < 3 {
        return Err(Error::Degenerate(format!(
            "fitting SES needs at least 3 points, got {}",
            insample.len()
        )));
    }
    let mut best = (f64::INFINITY, 0.01);
    for k in 1..=99 {
        let alpha = k as f64 / 100.0;
        let (_, sse) = ses_run(insample, alpha);
        if sse < best.0 {
            best = (sse, alpha);
        }
    }
    Ok(best.1)
}

/// Simple exponential smoothing; flat forecast at the final level.
pub fn ses(insample: &[f64], horizon: usize, alpha: SesAlpha) -> Result<Vec<f64>> {
    non_empty(insample)?;
    let alpha = match alpha {
        SesAlpha::Fixed(a) if (0.0..=1.0).contains(&a) => a,
        SesAlpha::Fixed(a) => return Err(Error::Config(format!("SES alpha {a} outside [0, 1]"))),
        SesAlpha::Fit => fit_ses_alpha(insample)?,
    };
    Ok(vec![ses_run(insample, alpha).0; horizon])
}

/// Ordinary least squares fit of `x` on `0..n`: (intercept, slope).
pub fn linear_trend(x: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("regression needs 2 points, got {n}")));
    }
    let nf = n as f64;
    let tbar = (nf - 1.0) / 2.0;
    let ybar = x.iter().sum::<f64>() / nf;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (t, y) in x.iter().enumerate() {
        let dt = t as f64 - tbar;
        sty += dt * (y - ybar);
        stt += dt * dt;
    }
    let slope = sty / stt;
    Ok((ybar - slope * tbar, slope))
}

/// The pieces of a Theta(0,2) forecast on the seasonally adjusted scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaComponents {
    pub decomposition: DecompositionResult,
    /// In-sample theta = 2 line, `2 y - trend`.
    pub theta2_line: Vec<f64>,
    /// Extrapolated theta = 0 line (the linear trend).
    pub trend_forecast: Vec<f64>,
    /// SES forecast of the theta = 2 line.
    pub ses_forecast: Vec<f64>,
}

pub fn theta_components(insample: &[f64], horizon: usize, m: usize) -> Result<ThetaComponents> {
    if insample.len() < 4 {
        return Err(Error::Degenerate(format!(
            "theta needs at least 4 points, got {}",
            insample.len()
        )));
    }
    let decomposition = decompose(insample, m)?;
    let y = &decomposition.deseasonalized;
    let (a, b) = linear_trend(y)?;
    let n = y.len();
    let theta2_line: Vec<f64> = y
        .iter()
        .enumerate()
        .map(|(t, v)| 2.0 * v - (a + b * t as f64))
        .collect();
    let trend_forecast = (n..n + horizon).map(|t| a + b * t as f64).collect();
    let ses_forecast = ses(&theta2_line, horizon, SesAlpha::Fit)?;
    Ok(ThetaComponents {
        decomposition,
        theta2_line,
        trend_forecast,
        ses_forecast,
    })
}

/// Classical Theta(0,2): equal-weight combination of the extrapolated
/// linear trend and SES on the theta = 2 line, re-seasonalized.
pub fn theta(insample: &[f64], horizon: usize, m: usize) -> Result<Vec<f64>> {
    let c = theta_components(insample, horizon, m)?;
    let combined: Vec<f64> = c
        .trend_forecast
        .iter()
        .zip(&c.ses_forecast)
        .map(|(l, s)| 0.5 * (l + s))
        .collect();
    Ok(c.decomposition.reseasonalize(insample.len(), &combined))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_examples() {
        assert_eq!(naive(&[1.0, 2.0, 3.0], 2).unwrap(), vec![3.0, 3.0]);
        assert_eq!(naive(&[4.0; 5], 3).unwrap(), vec![4.0; 3]);
        assert_eq!(naive(&[1.0, 9.0], 1).unwrap(), vec![9.0]);
        assert!(naive(&[], 2).is_err());
    }

    #[test]
    fn seasonal_naive_examples() {
        assert_eq!(seasonal_naive(&[1.0, 2.0, 3.0, 4.0], 3, 2).unwrap(), vec![3.0, 4.0, 3.0]);
        let x = [1.0, 5.0, 2.0, 7.0];
        assert_eq!(seasonal_naive(&x, 4, 1).unwrap(), naive(&x, 4).unwrap());
        assert!(seasonal_naive(&[1.0], 2, 2).is_err());
        let periodic: Vec<f64> = (0..24).map(|k| [3.0, 1.0, 4.0, 1.5][k % 4]).collect();
        assert_eq!(seasonal_naive(&periodic, 8, 4).unwrap(), periodic[..8].to_vec());
    }

    #[test]
    fn moving_average_even_order_is_two_by_m() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let ma = centered_moving_average(&x, 4);
        assert_eq!(ma[1], None);
        assert_eq!(ma[2], Some(2.0));
        assert_eq!(ma[7], Some(7.0));
        assert_eq!(ma[8], None);
        let ma3 = centered_moving_average(&x, 3);
        assert_eq!(ma3[1], Some(1.0));
    }

    #[test]
    fn naive2_reduces_to_naive_without_seasonality() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        assert_eq!(naive2(&x, 4, 1).unwrap(), naive(&x, 4).unwrap());
    }

    #[test]
    fn naive2_continues_periodic_series() {
        let pattern = [10.0, 14.0, 9.0, 6.0];
        let x: Vec<f64> = (0..40).map(|k| pattern[k % 4]).collect();
        let (f, d) = naive2_detailed(&x, 8, 4).unwrap();
        assert!(d.seasonality_detected);
        let mean = d.indices.iter().sum::<f64>() / 4.0;
        assert!((mean - 1.0).abs() < 1e-12);
        for (k, v) in f.iter().enumerate() {
            assert!((v - pattern[k % 4]).abs() < 1e-9);
        }
    }

    #[test]
    fn nonpositive_seasonal_series_falls_back() {
        let x: Vec<f64> = (0..40).map(|k| [1.0, -1.0, 2.0, 0.0][k % 4]).collect();
        let (f, d) = naive2_detailed(&x, 3, 4).unwrap();
        assert!(d.nonpositive_fallback);
        assert_eq!(f, vec![0.0; 3]);
    }

    #[test]
    fn ses_reductions() {
        let x = [2.0, 4.0, 3.0, 8.0];
        assert_eq!(ses(&x, 3, SesAlpha::Fixed(1.0)).unwrap(), naive(&x, 3).unwrap());
        assert_eq!(ses(&x, 2, SesAlpha::Fixed(0.0)).unwrap(), vec![2.0; 2]);
        assert_eq!(ses(&[5.0; 10], 2, SesAlpha::Fit).unwrap(), vec![5.0; 2]);
        assert!(ses(&[1.0, 2.0], 2, SesAlpha::Fit).is_err());
    }

    #[test]
    fn theta_constant_series() {
        let f = theta(&[7.0; 12], 5, 1).unwrap();
        for v in f {
            assert!((v - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_on_a_line() {
        let x: Vec<f64> = (0..20).map(|k| 3.0 + 0.5 * k as f64).collect();
        let c = theta_components(&x, 4, 1).unwrap();
        for (h, v) in c.trend_forecast.iter().enumerate() {
            assert!((v - (3.0 + 0.5 * (20 + h) as f64)).abs() < 1e-9);
        }
        for (a, b) in c.theta2_line.iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
