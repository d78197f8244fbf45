use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::series::{DatasetKind, Frequency, TimeSeries};
use super::upsample::upsample_bilinear;
use crate::error::{Error, Result};

/// Which source split a target frequency is forecast with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSplit {
    pub frequency: Frequency,
    /// Bi-linear upsampling factor applied to the source split, if any.
    pub upsample: Option<usize>,
}

impl SourceSplit {
    pub fn same(frequency: Frequency) -> Self {
        Self {
            frequency,
            upsample: None,
        }
    }
}

fn rule(source: &DatasetKind, target: Frequency) -> Option<SourceSplit> {
    use Frequency::*;
    match (source, target) {
        // M3 Others shares the horizon of M4 Quarterly; M4 Others is a mix.
        (_, Other) => Some(SourceSplit::same(Quarterly)),
        (DatasetKind::Fred, Weekly | Daily) => Some(SourceSplit::same(Monthly)),
        // Monthly upsampled by two gives a period of 24.
        (DatasetKind::Fred, Hourly) => Some(SourceSplit {
            frequency: Monthly,
            upsample: Some(2),
        }),
        (_, f) => Some(SourceSplit::same(f)),
    }
}

/// Source split used to forecast the `target` frequency. Fails when the
/// mapped split is absent from `source`, listing the targets that work.
pub fn map_frequency(source: &Corpus, target: Frequency) -> Result<SourceSplit> {
    let available: Vec<Frequency> = source.frequencies().collect();
    map_frequency_for(&source.dataset, &source.name, &available, target)
}

/// [`map_frequency`] for a source known only by its dataset kind and the
/// splits it provides (for example a set of trained checkpoints).
pub fn map_frequency_for(
    dataset: &DatasetKind,
    source_name: &str,
    available: &[Frequency],
    target: Frequency,
) -> Result<SourceSplit> {
    let present = |s: &SourceSplit| available.contains(&s.frequency);
    match rule(dataset, target) {
        Some(s) if present(&s) => Ok(s),
        _ => {
            let valid: Vec<String> = Frequency::ALL
                .into_iter()
                .filter_map(|f| rule(dataset, f).filter(present).map(|s| (f, s)))
                .map(|(f, s)| match s.upsample {
                    Some(k) => format!("{f} <- {} x{k}", s.frequency),
                    None => format!("{f} <- {}", s.frequency),
                })
                .collect();
            Err(Error::UnmappedFrequency {
                source_name: format!("{source_name} ({dataset})"),
                target: target.to_string(),
                valid: valid.join(", "),
            })
        }
    }
}

/// Materializes the series of a mapped source split.
pub fn source_series(source: &Corpus, split: SourceSplit) -> Result<Vec<TimeSeries>> {
    let group = source.group(split.frequency).ok_or_else(|| {
        Error::Config(format!("source corpus `{}` has no {} split", source.name, split.frequency))
    })?;
    match split.upsample {
        None => Ok(group.to_vec()),
        Some(k) => group
            .iter()
            .map(|s| {
                Ok(TimeSeries {
                    id: s.id.clone(),
                    frequency: s.frequency,
                    values: upsample_bilinear(&s.values, k)?,
                    horizon: s.horizon * k,
                })
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(dataset: DatasetKind, freqs: &[Frequency]) -> Corpus {
        let series = freqs
            .iter()
            .enumerate()
            .map(|(i, f)| TimeSeries::new(format!("s{i}"), *f, vec![1.0; 60], f.default_horizon()).unwrap())
            .collect();
        Corpus::new("src", dataset, series).unwrap()
    }

    #[test]
    fn m4_to_m3_others_uses_quarterly() {
        let c = corpus(DatasetKind::M4, &[Frequency::Quarterly, Frequency::Hourly]);
        assert_eq!(map_frequency(&c, Frequency::Other).unwrap(), SourceSplit::same(Frequency::Quarterly));
        assert_eq!(map_frequency(&c, Frequency::Hourly).unwrap(), SourceSplit::same(Frequency::Hourly));
    }

    #[test]
    fn fred_hourly_is_upsampled_monthly() {
        let c = corpus(DatasetKind::Fred, &[Frequency::Monthly]);
        let s = map_frequency(&c, Frequency::Hourly).unwrap();
        assert_eq!(s.frequency, Frequency::Monthly);
        assert_eq!(s.upsample, Some(2));
        let up = source_series(&c, s).unwrap();
        assert_eq!(up[0].len(), 119);
    }

    #[test]
    fn missing_split_lists_valid_targets() {
        let c = corpus(DatasetKind::M4, &[Frequency::Quarterly]);
        let err = map_frequency(&c, Frequency::Yearly).unwrap_err().to_string();
        assert!(err.contains("Quarterly <- Quarterly"), "{err}");
        assert!(err.contains("Other <- Quarterly"), "{err}");
    }
}
