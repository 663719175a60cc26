use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::layers::fmt_real;

pub const METRICS_HEADER: &str = "epoch,step,split,loss,ppl,lr,seconds";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub split: Split,
    pub loss: f64,
    /// `exp(loss)` for cross-entropy objectives, absent otherwise.
    pub ppl: Option<f64>,
    pub lr: f64,
    pub seconds: f64,
}

/// Append-only log of per-epoch metrics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsHistory {
    rows: Vec<MetricsRow>,
}

impl MetricsHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn last(&self, split: Split) -> Option<&MetricsRow> {
        self.rows.iter().rev().find(|r| r.split == split)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let ppl = r.ppl.map(fmt_real).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch,
                r.step,
                r.split,
                fmt_real(r.loss),
                ppl,
                fmt_real(r.lr),
                fmt_real(r.seconds)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut h = MetricsHistory::new();
        h.push(MetricsRow {
            epoch: 1,
            step: 10,
            split: Split::Valid,
            loss: 2.0,
            ppl: Some(2f64.exp()),
            lr: 0.003,
            seconds: 0.0,
        });
        h.push(MetricsRow {
            epoch: 1,
            step: 10,
            split: Split::Train,
            loss: 0.5,
            ppl: None,
            lr: 0.003,
            seconds: 0.0,
        });
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,step,split,loss,ppl,lr,seconds");
        assert!(lines[1].starts_with("1,10,valid,2.0000000000000000e0,7.389"));
        assert_eq!(lines[2].split(',').nth(4), Some(""));
        assert_eq!(h.last(Split::Valid).unwrap().loss, 2.0);
    }
}
