use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::series::{DatasetKind, Frequency, TimeSeries};
use crate::error::{Error, Result};
use crate::io::{atomic_write, read_json, write_json};

pub const CORPUS_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Series grouped by frequency. Each group shares one horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub dataset: DatasetKind,
    groups: BTreeMap<Frequency, Vec<TimeSeries>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSplit {
    pub frequency: Frequency,
    pub horizon: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub name: String,
    pub dataset: DatasetKind,
    pub splits: Vec<ManifestSplit>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, dataset: DatasetKind, series: Vec<TimeSeries>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        let mut groups: BTreeMap<Frequency, Vec<TimeSeries>> = BTreeMap::new();
        for s in series {
            if !seen.insert(s.id.clone()) {
                return Err(Error::Series {
                    id: s.id,
                    reason: "duplicate series id".into(),
                });
            }
            if let Some(first) = groups.get(&s.frequency).and_then(|g| g.first()) {
                if first.horizon != s.horizon {
                    return Err(Error::Series {
                        id: s.id,
                        reason: format!(
                            "horizon {} differs from the {} group horizon {}",
                            s.horizon, s.frequency, first.horizon
                        ),
                    });
                }
            }
            groups.entry(s.frequency).or_default().push(s);
        }
        Ok(Self {
            name: name.into(),
            dataset,
            groups,
        })
    }

    pub fn frequencies(&self) -> impl Iterator<Item = Frequency> + '_ {
        self.groups.keys().copied()
    }

    pub fn group(&self, frequency: Frequency) -> Option<&[TimeSeries]> {
        self.groups.get(&frequency).map(Vec::as_slice)
    }

    pub fn horizon(&self, frequency: Frequency) -> Option<usize> {
        self.group(frequency).and_then(|g| g.first()).map(|s| s.horizon)
    }

    pub fn series(&self) -> impl Iterator<Item = &TimeSeries> {
        self.groups.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Replaces (or adds) one frequency group, keeping the others.
    pub fn merge(mut self, other: Corpus) -> Result<Corpus> {
        for (f, g) in other.groups {
            self.groups.insert(f, g);
        }
        let series: Vec<TimeSeries> = self.groups.into_values().flatten().collect();
        Corpus::new(self.name, self.dataset, series)
    }
}

fn split_file_name(frequency: Frequency) -> String {
    format!("{}.csv", frequency.name().to_ascii_lowercase())
}

/// Writes one CSV per frequency plus `manifest.json` into `dir`. Values are
/// printed with the shortest representation that parses back to the same
/// bits.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<PathBuf> {
    let mut splits = Vec::new();
    for (frequency, group) in &corpus.groups {
        let file = split_file_name(*frequency);
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        for s in group {
            let mut record = Vec::with_capacity(s.values.len() + 1);
            record.push(s.id.clone());
            record.extend(s.values.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(dir, e.into_error()))?;
        atomic_write(&dir.join(&file), &bytes)?;
        splits.push(ManifestSplit {
            frequency: *frequency,
            horizon: group[0].horizon,
            file,
        });
    }
    let manifest = CorpusManifest {
        schema_version: CORPUS_SCHEMA_VERSION,
        name: corpus.name.clone(),
        dataset: corpus.dataset.clone(),
        splits,
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Parses a rows-of-series CSV file (`id,v1,v2,...`, no header).
pub(crate) fn read_series_rows(path: &Path, frequency: Frequency, horizon: usize) -> Result<Vec<TimeSeries>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut fields = record.iter();
        let id = match fields.next() {
            Some(id) if !id.trim().is_empty() => id.trim().to_string(),
            _ if record.iter().all(|f| f.trim().is_empty()) => continue,
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    reason: "missing series id".into(),
                })
            }
        };
        let cells: Vec<&str> = fields.map(str::trim).collect();
        let used = cells.iter().rposition(|c| !c.is_empty()).map_or(0, |p| p + 1);
        let mut values = Vec::with_capacity(used);
        for (k, cell) in cells[..used].iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("series `{id}` value {}: cannot parse `{cell}`", k + 1),
            })?;
            values.push(v);
        }
        out.push(TimeSeries::new(id, frequency, values, horizon)?);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let manifest: CorpusManifest = read_json(path)?;
    if manifest.schema_version != CORPUS_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{}: corpus schema version {} (expected {CORPUS_SCHEMA_VERSION})",
            path.display(),
            manifest.schema_version
        )));
    }
    Ok(manifest)
}

/// Loads and validates a corpus from its manifest. CSV paths are relative
/// to the manifest's directory.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut series = Vec::new();
    let mut frequencies = HashSet::new();
    for split in &manifest.splits {
        if !frequencies.insert(split.frequency) {
            return Err(Error::Config(format!(
                "{}: frequency {} listed twice",
                manifest_path.display(),
                split.frequency
            )));
        }
        series.extend(read_series_rows(&base.join(&split.file), split.frequency, split.horizon)?);
    }
    Corpus::new(manifest.name, manifest.dataset, series)
}
