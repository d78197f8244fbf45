use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling frequency of a split. `Other` is the M3 "Others" group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Frequency {
    Yearly,
    Quarterly,
    Monthly,
    Weekly,
    Daily,
    Hourly,
    Other,
}

impl Frequency {
    pub const ALL: [Frequency; 7] = [
        Frequency::Yearly,
        Frequency::Quarterly,
        Frequency::Monthly,
        Frequency::Weekly,
        Frequency::Daily,
        Frequency::Hourly,
        Frequency::Other,
    ];

    /// M4-convention forecast horizon.
    pub fn default_horizon(self) -> usize {
        match self {
            Frequency::Yearly => 6,
            Frequency::Quarterly => 8,
            Frequency::Monthly => 18,
            Frequency::Weekly => 13,
            Frequency::Daily => 14,
            Frequency::Hourly => 48,
            Frequency::Other => 8,
        }
    }

    /// Seasonal period `m` used by MASE and the seasonal baselines.
    pub fn seasonality(self) -> usize {
        match self {
            Frequency::Quarterly => 4,
            Frequency::Monthly => 12,
            Frequency::Hourly => 24,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Frequency::Yearly => "Yearly",
            Frequency::Quarterly => "Quarterly",
            Frequency::Monthly => "Monthly",
            Frequency::Weekly => "Weekly",
            Frequency::Daily => "Daily",
            Frequency::Hourly => "Hourly",
            Frequency::Other => "Other",
        }
    }

    /// Guesses the frequency from a file name such as `Monthly-train.csv`.
    pub fn from_file_name(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        let keys = [
            ("year", Frequency::Yearly),
            ("quart", Frequency::Quarterly),
            ("month", Frequency::Monthly),
            ("week", Frequency::Weekly),
            ("dail", Frequency::Daily),
            ("hour", Frequency::Hourly),
            ("other", Frequency::Other),
        ];
        keys.into_iter()
            .find(|(k, _)| lower.contains(k))
            .map(|(_, f)| f)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Frequency::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(&lower) || (lower == "others" && *f == Frequency::Other))
            .ok_or_else(|| Error::Config(format!("unknown frequency `{s}`")))
    }
}

/// Which benchmark a corpus stands for; drives the frequency mapping.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum DatasetKind {
    M4,
    M3,
    Tourism,
    Fred,
    Electricity,
    Traffic,
    Custom(String),
}

impl DatasetKind {
    pub fn name(&self) -> &str {
        match self {
            DatasetKind::M4 => "m4",
            DatasetKind::M3 => "m3",
            DatasetKind::Tourism => "tourism",
            DatasetKind::Fred => "fred",
            DatasetKind::Electricity => "electricity",
            DatasetKind::Traffic => "traffic",
            DatasetKind::Custom(s) => s,
        }
    }
}

impl From<String> for DatasetKind {
    fn from(s: String) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "m4" => DatasetKind::M4,
            "m3" => DatasetKind::M3,
            "tourism" => DatasetKind::Tourism,
            "fred" => DatasetKind::Fred,
            "electricity" => DatasetKind::Electricity,
            "traffic" => DatasetKind::Traffic,
            _ => DatasetKind::Custom(s),
        }
    }
}

impl From<DatasetKind> for String {
    fn from(d: DatasetKind) -> Self {
        d.name().to_string()
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One observed univariate series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    pub frequency: Frequency,
    pub values: Vec<f64>,
    pub horizon: usize,
}

impl TimeSeries {
    /// Validated constructor: finite values and at least `horizon + 1`
    /// observations.
    pub fn new(id: impl Into<String>, frequency: Frequency, values: Vec<f64>, horizon: usize) -> Result<Self> {
        let id = id.into();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Series {
                id,
                reason: format!("non-finite value at position {pos}"),
            });
        }
        if values.len() < horizon + 1 {
            return Err(Error::Series {
                id,
                reason: format!("length {} shorter than horizon + 1 = {}", values.len(), horizon + 1),
            });
        }
        Ok(Self {
            id,
            frequency,
            values,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
