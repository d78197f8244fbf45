//! Readers for the public benchmark CSV layouts.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::{read_series_rows, Corpus};
use super::series::{DatasetKind, Frequency, TimeSeries};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceLayout {
    /// `Monthly-train.csv` / `Monthly-test.csv`: header `V1,V2,...`, one
    /// row per series, ragged right edge.
    M4,
    /// Spreadsheet export with `Series, N, NF, ...` metadata columns
    /// followed by value columns.
    M3,
    /// `monthly_in.csv` / `monthly_oos.csv`: one column per series, the
    /// first data row holding the series length.
    Tourism,
    /// The corpus row format `id,v1,v2,...` without header.
    Generic,
}

impl std::str::FromStr for SourceLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m4" => Ok(SourceLayout::M4),
            "m3" => Ok(SourceLayout::M3),
            "tourism" => Ok(SourceLayout::Tourism),
            "generic" => Ok(SourceLayout::Generic),
            _ => Err(Error::Config(format!("unknown layout `{s}` (m4, m3, tourism, generic)"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConvertOptions {
    pub frequency: Option<Frequency>,
    pub horizon: Option<usize>,
    pub dataset: Option<DatasetKind>,
    pub name: Option<String>,
}

/// Horizon convention of each benchmark.
pub fn default_horizon(dataset: &DatasetKind, frequency: Frequency) -> usize {
    match (dataset, frequency) {
        (DatasetKind::Tourism, Frequency::Yearly) => 4,
        (DatasetKind::Tourism, Frequency::Quarterly) => 8,
        (DatasetKind::Tourism, Frequency::Monthly) => 24,
        (DatasetKind::Electricity | DatasetKind::Traffic, _) => 24,
        _ => frequency.default_horizon(),
    }
}

fn parse_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_cell(path: &Path, line: usize, id: &str, cell: &str) -> Result<f64> {
    cell.parse()
        .map_err(|_| parse_error(path, line, format!("series `{id}`: cannot parse `{cell}`")))
}

fn record_line(r: &csv::StringRecord) -> usize {
    r.position().map_or(0, |p| p.line() as usize)
}

fn read_records(path: &Path, headers: bool) -> Result<(Option<csv::StringRecord>, Vec<csv::StringRecord>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(headers)
        .flexible(true)
        .from_reader(file);
    let header = if headers {
        match reader.headers() {
            Ok(h) => Some(h.clone()),
            Err(_) => None,
        }
    } else {
        None
    };
    let records = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, records))
}

fn resolve_frequency(opts: &ConvertOptions, path: &Path) -> Result<Frequency> {
    opts.frequency
        .or_else(|| path.file_name().and_then(|n| n.to_str()).and_then(Frequency::from_file_name))
        .ok_or_else(|| {
            Error::Config(format!(
                "{}: cannot infer the frequency from the file name; pass it explicitly",
                path.display()
            ))
        })
}

/// Partitions `inputs` into (train, Some(test)) by the `test`/`oos` marker.
fn train_test(inputs: &[PathBuf], test_marks: &[&str]) -> Result<(PathBuf, Option<PathBuf>)> {
    let is_test = |p: &PathBuf| {
        let n = p.file_name().and_then(|n| n.to_str()).unwrap_or("").to_ascii_lowercase();
        test_marks.iter().any(|m| n.contains(m))
    };
    match inputs {
        [one] => Ok((one.clone(), None)),
        [a, b] if is_test(a) && !is_test(b) => Ok((b.clone(), Some(a.clone()))),
        [a, b] => Ok((a.clone(), Some(b.clone()))),
        _ => Err(Error::Config(format!(
            "expected a train file and an optional test file, got {} paths",
            inputs.len()
        ))),
    }
}

fn id_values_rows(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let (_, records) = read_records(path, true)?;
    let mut out = Vec::with_capacity(records.len());
    for r in &records {
        let line = record_line(r);
        let id = r.get(0).unwrap_or("").trim().to_string();
        if id.is_empty() {
            if r.iter().all(|c| c.trim().is_empty()) {
                continue;
            }
            return Err(parse_error(path, line, "missing series id"));
        }
        let cells: Vec<&str> = r.iter().skip(1).map(str::trim).collect();
        let used = cells.iter().rposition(|c| !c.is_empty()).map_or(0, |p| p + 1);
        let values = cells[..used]
            .iter()
            .map(|c| parse_cell(path, line, &id, c))
            .collect::<Result<Vec<_>>>()?;
        out.push((id, values));
    }
    Ok(out)
}

/// Appends test continuations to train rows, matching by id.
fn join_by_id(
    train: Vec<(String, Vec<f64>)>,
    test: Option<Vec<(String, Vec<f64>)>>,
    path: &Path,
) -> Result<Vec<(String, Vec<f64>)>> {
    let Some(test) = test else { return Ok(train) };
    let mut tail: HashMap<String, Vec<f64>> = test.into_iter().collect();
    let joined = train
        .into_iter()
        .map(|(id, mut v)| {
            let t = tail
                .remove(&id)
                .ok_or_else(|| Error::Series {
                    id: id.clone(),
                    reason: format!("absent from {}", path.display()),
                })?;
            v.extend(t);
            Ok((id, v))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(id) = tail.keys().min() {
        return Err(Error::Series {
            id: id.clone(),
            reason: "present in the test file only".into(),
        });
    }
    Ok(joined)
}

fn m4(inputs: &[PathBuf]) -> Result<Vec<(String, Vec<f64>)>> {
    let (train, test) = train_test(inputs, &["test"])?;
    let rows = id_values_rows(&train)?;
    let test_rows = test.as_deref().map(id_values_rows).transpose()?;
    join_by_id(rows, test_rows, test.as_deref().unwrap_or(&train))
}

fn m3(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let (header, records) = read_records(path, true)?;
    let header = header.ok_or_else(|| parse_error(path, 1, "missing header row"))?;
    let col = |name: &str| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let id_col = col("Series").unwrap_or(0);
    let n_col = col("N");
    let value_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.trim().parse::<u32>().is_ok())
        .map(|(i, _)| i)
        .collect();
    let mut out = Vec::with_capacity(records.len());
    for r in &records {
        let line = record_line(r);
        if r.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let id = r.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(parse_error(path, line, "missing series id"));
        }
        let cells: Vec<&str> = if value_cols.is_empty() {
            let skip = n_col.map_or(1, |c| c + 1).max(id_col + 1);
            r.iter().skip(skip).map(str::trim).collect()
        } else {
            value_cols.iter().filter_map(|&c| r.get(c)).map(str::trim).collect()
        };
        let mut values: Vec<f64> = cells
            .iter()
            .filter(|c| !c.is_empty())
            .map(|c| parse_cell(path, line, &id, c))
            .collect::<Result<_>>()?;
        if let Some(c) = n_col {
            let n: usize = r
                .get(c)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| parse_error(path, line, format!("series `{id}`: bad N column")))?;
            if values.len() < n {
                return Err(parse_error(path, line, format!("series `{id}`: N={n} but {} values", values.len())));
            }
            values.truncate(n);
        }
        out.push((id, values));
    }
    Ok(out)
}

fn tourism_columns(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let (header, records) = read_records(path, true)?;
    let header = header.ok_or_else(|| parse_error(path, 1, "missing header row"))?;
    let mut out = Vec::with_capacity(header.len());
    for (c, id) in header.iter().enumerate() {
        let id = id.trim().to_string();
        if id.is_empty() {
            continue;
        }
        let mut cells = Vec::new();
        for r in &records {
            let cell = r.get(c).unwrap_or("").trim();
            if !cell.is_empty() {
                cells.push((record_line(r), cell));
            }
        }
        let Some(&(line, first)) = cells.first() else {
            return Err(parse_error(path, 2, format!("series `{id}`: empty column")));
        };
        let n = parse_cell(path, line, &id, first)? as usize;
        if cells.len() < n + 1 {
            return Err(parse_error(path, line, format!("series `{id}`: length {n} but {} cells", cells.len() - 1)));
        }
        let values = cells[cells.len() - n..]
            .iter()
            .map(|(l, v)| parse_cell(path, *l, &id, v))
            .collect::<Result<Vec<_>>>()?;
        out.push((id, values));
    }
    Ok(out)
}

fn tourism(inputs: &[PathBuf]) -> Result<Vec<(String, Vec<f64>)>> {
    let (train, test) = train_test(inputs, &["oos", "test"])?;
    let rows = tourism_columns(&train)?;
    let test_rows = test.as_deref().map(tourism_columns).transpose()?;
    join_by_id(rows, test_rows, test.as_deref().unwrap_or(&train))
}

/// Reads one frequency split from benchmark files. The corpus contains the
/// full series (history followed by the test horizon when a test file is
/// given).
pub fn convert(layout: SourceLayout, inputs: &[PathBuf], opts: &ConvertOptions) -> Result<Corpus> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Config("no input files".into()))?;
    let frequency = resolve_frequency(opts, first)?;
    let dataset = opts.dataset.clone().unwrap_or(match layout {
        SourceLayout::M4 => DatasetKind::M4,
        SourceLayout::M3 => DatasetKind::M3,
        SourceLayout::Tourism => DatasetKind::Tourism,
        SourceLayout::Generic => DatasetKind::Custom("generic".into()),
    });
    let horizon = opts.horizon.unwrap_or_else(|| default_horizon(&dataset, frequency));
    let name = opts.name.clone().unwrap_or_else(|| dataset.name().to_string());
    let series = match layout {
        SourceLayout::Generic => {
            let mut all = Vec::new();
            for p in inputs {
                all.extend(read_series_rows(p, frequency, horizon)?);
            }
            all
        }
        _ => {
            let rows = match layout {
                SourceLayout::M4 => m4(inputs)?,
                SourceLayout::M3 => {
                    let mut all = Vec::new();
                    for p in inputs {
                        all.extend(m3(p)?);
                    }
                    all
                }
                SourceLayout::Tourism => tourism(inputs)?,
                SourceLayout::Generic => unreachable!(),
            };
            rows.into_iter()
                .map(|(id, v)| TimeSeries::new(id, frequency, v, horizon))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Corpus::new(name, dataset, series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn ramp(n: usize) -> String {
        (1..=n).map(|k| format!("\"{k}.5\"")).collect::<Vec<_>>().join(",")
    }

    #[test]
    fn m4_monthly_gets_horizon_18_and_joins_test() {
        let dir = tempfile::tempdir().unwrap();
        let train = write(
            dir.path(),
            "Monthly-train.csv",
            &format!("\"V1\",\"V2\",\"V3\"\n\"M1\",{},\"\",\"\"\n\"M2\",{}\n", ramp(20), ramp(22)),
        );
        let test = write(
            dir.path(),
            "Monthly-test.csv",
            &format!("\"V1\",\"V2\"\n\"M1\",{}\n\"M2\",{}\n", ramp(18), ramp(18)),
        );
        let c = convert(SourceLayout::M4, &[train, test], &ConvertOptions::default()).unwrap();
        assert_eq!(c.horizon(Frequency::Monthly), Some(18));
        let lens: Vec<usize> = c.series().map(TimeSeries::len).collect();
        assert_eq!(lens, vec![38, 40]);
    }

    #[test]
    fn m3_uses_value_columns_and_n() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<String> = (1..=10).map(|k| k.to_string()).collect();
        let body = format!(
            "Series,N,NF,Category,Starting Year,{}\nN1,8,6,MICRO,1990,{}\n",
            rows.join(","),
            rows.join(",")
        );
        let p = write(dir.path(), "M3_yearly.csv", &body);
        let c = convert(SourceLayout::M3, &[p], &ConvertOptions::default()).unwrap();
        let s = c.series().next().unwrap();
        assert_eq!(s.values, (1..=8).map(f64::from).collect::<Vec<_>>());
        assert_eq!(s.horizon, 6);
    }

    #[test]
    fn tourism_reads_columns() {
        let dir = tempfile::tempdir().unwrap();
        let inp = write(dir.path(), "yearly_in.csv", "Y1,Y2\n5,3\n1990,1991\n1,7\n2,8\n3,9\n4,\n5,\n");
        let oos = write(dir.path(), "yearly_oos.csv", "Y1,Y2\n4,4\n1995,1994\n10,20\n11,21\n12,22\n13,23\n");
        let c = convert(SourceLayout::Tourism, &[inp, oos], &ConvertOptions::default()).unwrap();
        let got: Vec<Vec<f64>> = c.series().map(|s| s.values.clone()).collect();
        assert_eq!(got[0], vec![1.0, 2.0, 3.0, 4.0, 5.0, 10.0, 11.0, 12.0, 13.0]);
        assert_eq!(got[1], vec![7.0, 8.0, 9.0, 20.0, 21.0, 22.0, 23.0]);
        assert_eq!(c.horizon(Frequency::Yearly), Some(4));
    }

    #[test]
    fn bad_cell_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "Yearly-train.csv", "\"V1\",\"V2\"\n\"Y1\",1,2,3,4,5,6,7\n\"Y2\",1,oops\n");
        match convert(SourceLayout::M4, &[p], &ConvertOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "Yearly-train.csv", "\"V1\",\"V2\"\n");
        assert!(matches!(
            convert(SourceLayout::M4, &[p], &ConvertOptions::default()),
            Err(Error::EmptyCorpus)
        ));
    }
}
