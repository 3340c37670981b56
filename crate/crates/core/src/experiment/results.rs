use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::metrics::Scores;

/// Header of the results CSV.
pub const RESULTS_HEADER: &str = "heuristic,k,fold,run,precision,recall,f1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub heuristic: String,
    pub k: usize,
    pub fold: usize,
    pub run: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ResultRow {
    pub fn new(heuristic: impl Into<String>, k: usize, fold: usize, run: usize, scores: Scores) -> Self {
        ResultRow {
            heuristic: heuristic.into(),
            k,
            fold,
            run,
            precision: scores.precision,
            recall: scores.recall,
            f1: scores.f1,
        }
    }

    fn key(&self) -> (String, usize, usize, usize) {
        (self.heuristic.clone(), self.k, self.fold, self.run)
    }
}

/// Rows keyed by (heuristic, k, fold, run); a key appears at most once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    rows: Vec<ResultRow>,
    keys: BTreeSet<(String, usize, usize, usize)>,
}

impl ResultsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: ResultRow) -> Result<(), ExperimentError> {
        if !self.keys.insert(row.key()) {
            return Err(ExperimentError::DuplicateRow {
                heuristic: row.heuristic,
                k: row.k,
                fold: row.fold,
                run: row.run,
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, heuristic: &str, k: usize, fold: usize, run: usize) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.heuristic == heuristic && r.k == k && r.fold == fold && r.run == run)
    }

    /// Heuristic names in first-appearance order.
    pub fn heuristics(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.heuristic) {
                seen.push(r.heuristic.clone());
            }
        }
        seen
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(writer);
        if self.rows.is_empty() {
            w.write_record(RESULTS_HEADER.split(','))?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ExperimentError> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != RESULTS_HEADER {
            return Err(ExperimentError::Csv(format!("unexpected header `{}`", header.join(","))));
        }
        let mut table = ResultsTable::new();
        for row in r.deserialize() {
            table.push(row?)?;
        }
        Ok(table)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample (n - 1) standard deviation; 0 for a single value.
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(MeanStd { mean, std })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Precision, Metric::Recall, Metric::F1];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
        }
    }

    fn of(self, row: &ResultRow) -> f64 {
        match self {
            Metric::Precision => row.precision,
            Metric::Recall => row.recall,
            Metric::F1 => row.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub heuristic: String,
    pub k: usize,
    pub n: usize,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl AggregateRow {
    pub fn get(&self, metric: Metric) -> MeanStd {
        let (mean, std) = match metric {
            Metric::Precision => (self.precision_mean, self.precision_std),
            Metric::Recall => (self.recall_mean, self.recall_std),
            Metric::F1 => (self.f1_mean, self.f1_std),
        };
        MeanStd { mean, std }
    }
}

/// Per (heuristic, k) statistics over all (fold, run) cells, heuristics in
/// first-appearance order and k ascending.
pub fn aggregate(table: &ResultsTable) -> Result<Vec<AggregateRow>, ExperimentError> {
    if table.is_empty() {
        return Err(ExperimentError::EmptyTable);
    }
    let mut out = Vec::new();
    for heuristic in table.heuristics() {
        let ks: BTreeSet<usize> = table.rows.iter().filter(|r| r.heuristic == heuristic).map(|r| r.k).collect();
        for k in ks {
            let cells: Vec<&ResultRow> = table.rows.iter().filter(|r| r.heuristic == heuristic && r.k == k).collect();
            let stat = |m: Metric| MeanStd::of(&cells.iter().map(|r| m.of(r)).collect::<Vec<_>>()).expect("non-empty");
            let (p, r, f) = (stat(Metric::Precision), stat(Metric::Recall), stat(Metric::F1));
            out.push(AggregateRow {
                heuristic: heuristic.clone(),
                k,
                n: cells.len(),
                precision_mean: p.mean,
                precision_std: p.std,
                recall_mean: r.mean,
                recall_std: r.std,
                f1_mean: f.mean,
                f1_std: f.std,
            });
        }
    }
    Ok(out)
}

/// Header of the aggregates CSV.
pub const AGGREGATES_HEADER: &str =
    "heuristic,k,n,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std";

pub fn write_aggregates_csv<W: Write>(rows: &[AggregateRow], writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(AGGREGATES_HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_aggregates_csv<R: Read>(reader: R) -> Result<Vec<AggregateRow>, ExperimentError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(ExperimentError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(h: &str, k: usize, fold: usize, f1: f64) -> ResultRow {
        ResultRow {
            heuristic: h.into(),
            k,
            fold,
            run: 0,
            precision: f1,
            recall: f1,
            f1,
        }
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let mut t = ResultsTable::new();
        t.push(row("bm25", 1, 0, 0.5)).unwrap();
        assert!(matches!(t.push(row("bm25", 1, 0, 0.7)), Err(ExperimentError::DuplicateRow { .. })));
        t.push(row("bm25", 2, 0, 0.7)).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let mut t = ResultsTable::new();
        t.push(row("bm25", 1, 0, 0.1 + 0.2)).unwrap();
        t.push(row("oracle-bm25", 4, 3, 1.0 / 3.0)).unwrap();
        let text = t.to_csv_string();
        assert!(text.starts_with(RESULTS_HEADER));
        assert_eq!(ResultsTable::read_csv(text.as_bytes()).unwrap(), t);
    }

    #[test]
    fn empty_table_writes_header_only() {
        assert_eq!(ResultsTable::new().to_csv_string(), format!("{RESULTS_HEADER}\n"));
        let mut buf = Vec::new();
        write_aggregates_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{AGGREGATES_HEADER}\n"));
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(ResultsTable::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert!(matches!(aggregate(&ResultsTable::new()), Err(ExperimentError::EmptyTable)));

        let mut t = ResultsTable::new();
        t.push(row("none", 1, 0, 0.4)).unwrap();
        let a = aggregate(&t).unwrap();
        assert_eq!(a[0].f1_mean, 0.4);
        assert_eq!(a[0].f1_std, 0.0);

        t.push(row("none", 1, 1, 0.6)).unwrap();
        t.push(row("bm25", 2, 0, 0.9)).unwrap();
        let a = aggregate(&t).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!((a[0].heuristic.as_str(), a[0].n), ("none", 2));
        assert_abs_diff_eq!(a[0].f1_mean, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a[0].f1_std, 0.02f64.sqrt(), epsilon = 1e-12);
        assert_eq!(a[1].get(Metric::F1).mean, 0.9);

        let mut buf = Vec::new();
        write_aggregates_csv(&a, &mut buf).unwrap();
        assert_eq!(read_aggregates_csv(buf.as_slice()).unwrap(), a);
    }
}
