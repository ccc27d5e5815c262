use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::pointing_accuracy;

pub const TSV_HEADER: &str = "method\tarch\tmetric\thits\tpossible\taccuracy";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub arch: String,
    pub metric: String,
    pub hits: usize,
    pub possible: usize,
}

impl ReportRow {
    /// `None` when there was nothing to score.
    pub fn accuracy(&self) -> Option<f64> {
        pointing_accuracy(self.hits, self.possible).ok()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    /// Number of evaluation units (documents or prefixes) considered.
    pub samples: usize,
}

impl EvalReport {
    pub fn push(&mut self, method: &str, arch: &str, metric: &str, hits: usize, possible: usize) {
        self.rows.push(ReportRow {
            method: method.to_string(),
            arch: arch.to_string(),
            metric: metric.to_string(),
            hits,
            possible,
        });
    }

    pub fn find(&self, method: &str, metric: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.metric == metric)
    }

    /// Header plus one line per row; accuracy with four decimals, `NA`
    /// when nothing was possible.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let acc = r
                .accuracy()
                .map_or_else(|| "NA".to_string(), |a| format!("{a:.4}"));
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.method, r.arch, r.metric, r.hits, r.possible, acc
            );
        }
        out
    }
}
