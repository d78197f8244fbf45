use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::series::{Frequency, TimeSeries};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Hold out the last horizon.
    Test,
    /// Hold out the penultimate horizon; the test horizon is dropped.
    Validation,
}

/// History and held-out parts of one series.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPart<'a> {
    pub id: &'a str,
    pub frequency: Frequency,
    pub horizon: usize,
    pub history: &'a [f64],
    pub held_out: &'a [f64],
}

pub fn split_values(values: &[f64], horizon: usize, mode: SplitMode) -> Option<(&[f64], &[f64])> {
    let drop = match mode {
        SplitMode::Test => 0,
        SplitMode::Validation => horizon,
    };
    let end = values.len().checked_sub(drop)?;
    let start = end.checked_sub(horizon)?;
    if start == 0 {
        return None;
    }
    Some((&values[..start], &values[start..end]))
}

pub fn split_series(series: &TimeSeries, mode: SplitMode) -> Result<SplitPart<'_>> {
    let (history, held_out) = split_values(&series.values, series.horizon, mode).ok_or_else(|| Error::Series {
        id: series.id.clone(),
        reason: format!("length {} too short for a {mode:?} split with horizon {}", series.len(), series.horizon),
    })?;
    Ok(SplitPart {
        id: &series.id,
        frequency: series.frequency,
        horizon: series.horizon,
        history,
        held_out,
    })
}

pub fn split(corpus: &Corpus, mode: SplitMode) -> Result<Vec<SplitPart<'_>>> {
    corpus.series().map(|s| split_series(s, mode)).collect()
}

/// The part of a series that training may read under `mode`.
pub fn training_region(series: &TimeSeries, mode: SplitMode) -> Result<&[f64]> {
    split_series(series, mode).map(|p| p.history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: usize, h: usize) -> TimeSeries {
        TimeSeries::new("s", Frequency::Yearly, (1..=n).map(|k| k as f64).collect(), h).unwrap()
    }

    #[test]
    fn test_split_arithmetic() {
        let s = series(30, 6);
        let p = split_series(&s, SplitMode::Test).unwrap();
        assert_eq!((p.history.len(), p.held_out.len()), (24, 6));
        let whole: Vec<f64> = p.history.iter().chain(p.held_out).copied().collect();
        assert_eq!(whole, s.values);
    }

    #[test]
    fn validation_split_is_penultimate_horizon() {
        let s = series(30, 6);
        let p = split_series(&s, SplitMode::Validation).unwrap();
        assert_eq!(p.history.len(), 18);
        assert_eq!(p.held_out, &[19.0, 20.0, 21.0, 22.0, 23.0, 24.0]);
    }

    #[test]
    fn test_then_test_equals_validation() {
        let s = series(30, 6);
        let (hist, _) = split_values(&s.values, 6, SplitMode::Test).unwrap();
        let twice = split_values(hist, 6, SplitMode::Test).unwrap();
        let direct = split_values(&s.values, 6, SplitMode::Validation).unwrap();
        assert_eq!(twice, direct);
    }

    #[test]
    fn too_short_is_an_error() {
        let s = series(10, 6);
        assert!(split_series(&s, SplitMode::Test).is_ok());
        assert!(split_series(&s, SplitMode::Validation).is_err());
    }
}
