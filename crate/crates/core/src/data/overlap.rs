use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::corpus::Corpus;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatch {
    pub target_id: String,
    pub source_id: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub screened: usize,
    pub matches: Vec<OverlapMatch>,
}

/// Flags target series whose last `2H` values occur verbatim as a
/// contiguous run inside some source series. Report only; nothing is
/// dropped.
pub fn screen_overlaps(source: &Corpus, target: &Corpus) -> OverlapReport {
    let mut report = OverlapReport::default();
    let mut index: HashMap<usize, HashMap<Vec<u64>, &str>> = HashMap::new();
    for t in target.series() {
        let w = 2 * t.horizon;
        if t.len() < w {
            continue;
        }
        report.screened += 1;
        let runs = index.entry(w).or_insert_with(|| {
            let mut m = HashMap::new();
            for s in source.series() {
                for run in s.values.windows(w) {
                    m.entry(run.iter().map(|v| v.to_bits()).collect()).or_insert(s.id.as_str());
                }
            }
            m
        });
        let key: Vec<u64> = t.values[t.len() - w..].iter().map(|v| v.to_bits()).collect();
        if let Some(src) = runs.get(&key) {
            report.matches.push(OverlapMatch {
                target_id: t.id.clone(),
                source_id: src.to_string(),
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::series::{DatasetKind, Frequency, TimeSeries};

    #[test]
    fn finds_embedded_tail() {
        let src_values: Vec<f64> = (0..50).map(|k| (k as f64).sin() + 2.0).collect();
        let src = Corpus::new(
            "s",
            DatasetKind::M4,
            vec![TimeSeries::new("src", Frequency::Yearly, src_values.clone(), 6).unwrap()],
        )
        .unwrap();
        let copied = src_values[10..30].to_vec();
        let fresh: Vec<f64> = (0..20).map(|k| k as f64 + 0.5).collect();
        let tgt = Corpus::new(
            "t",
            DatasetKind::M3,
            vec![
                TimeSeries::new("copy", Frequency::Yearly, copied, 6).unwrap(),
                TimeSeries::new("fresh", Frequency::Yearly, fresh, 6).unwrap(),
            ],
        )
        .unwrap();
        let r = screen_overlaps(&src, &tgt);
        assert_eq!(r.screened, 2);
        assert_eq!(
            r.matches,
            vec![OverlapMatch {
                target_id: "copy".into(),
                source_id: "src".into()
            }]
        );
    }
}
