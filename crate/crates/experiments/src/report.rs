//! Run records and the files written for them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use adapt::layers::fmt_real;
use adapt::optim::{MetricsHistory, Split};

use crate::config::ExperimentConfig;
use crate::error::{ExperimentError, Result};

/// Environment variable naming the directory runs are written under.
pub const OUTPUT_ENV: &str = "ADAPT_OUTPUT_DIR";

/// `$ADAPT_OUTPUT_DIR`, or `runs` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// Everything one trained model leaves behind.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    /// The configuration the model was trained with; `model` is the trained
    /// spec and `baseline` is cleared.
    pub config: ExperimentConfig,
    pub params: usize,
    pub history: MetricsHistory,
    pub steps: usize,
    /// Final scores by name, e.g. `test_mse` or `valid_ppl`.
    pub scores: Vec<(String, f64)>,
    /// False iff training stopped on the divergence criterion.
    pub converged: bool,
    pub divergence: Option<String>,
    /// CSV with one row per inspected input.
    pub heatmap: String,
}

impl RunRecord {
    pub fn score(&self, name: &str) -> Option<f64> {
        self.scores.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    /// Last validation loss in the history.
    pub fn final_valid_loss(&self) -> Option<f64> {
        self.history.last(Split::Valid).map(|r| r.loss)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        writeln!(w, "run_id = {}", self.run_id).unwrap();
        writeln!(w, "model = {}", self.config.model.label()).unwrap();
        writeln!(w, "params = {}", self.params).unwrap();
        writeln!(w, "steps = {}", self.steps).unwrap();
        writeln!(w, "converged = {}", self.converged).unwrap();
        writeln!(w, "divergence = {}", self.divergence.as_deref().unwrap_or("none")).unwrap();
        for (name, v) in &self.scores {
            writeln!(w, "{name} = {}", fmt_real(*v)).unwrap();
        }
        writeln!(w, "\n# configuration").unwrap();
        for line in self.config.to_string().lines() {
            if line.is_empty() {
                writeln!(w).unwrap();
            } else {
                writeln!(w, "# {line}").unwrap();
            }
        }
        s
    }
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))?;
    Ok(path)
}

/// Writes `<run-id>.metrics.csv`, `<run-id>.heatmap.csv` and
/// `<run-id>.summary.txt` for every record into `dir`, creating it if
/// needed. Returns the paths written.
pub fn emit_report(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(ExperimentError::Invalid("no run records to report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let mut paths = Vec::with_capacity(3 * records.len());
    for r in records {
        paths.push(write(dir.join(format!("{}.metrics.csv", r.run_id)), &r.history.to_csv())?);
        paths.push(write(dir.join(format!("{}.heatmap.csv", r.run_id)), &r.heatmap)?);
        paths.push(write(dir.join(format!("{}.summary.txt", r.run_id)), &r.summary())?);
    }
    Ok(paths)
}

/// Writes an extra named table, such as a grid or sweep comparison.
pub fn emit_table(dir: &Path, file: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    write(dir.join(file), text)
}

/// One row of a run directory overview, read back from a summary file.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub run_id: String,
    pub fields: Vec<(String, String)>,
}

/// Reads the header block of every `*.summary.txt` in `dir`, sorted by run
/// id.
pub fn read_summaries(dir: &Path) -> Result<Vec<SummaryRow>> {
    let entries = fs::read_dir(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let mut rows = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| ExperimentError::io(dir, e))?.path();
        let Some(run_id) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".summary.txt"))
        else {
            continue;
        };
        let text = fs::read_to_string(&path).map_err(|e| ExperimentError::io(&path, e))?;
        let fields = text
            .lines()
            .take_while(|l| !l.is_empty())
            .filter_map(|l| l.split_once(" = "))
            .filter(|(k, _)| *k != "run_id")
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        rows.push(SummaryRow {
            run_id: run_id.to_string(),
            fields,
        });
    }
    rows.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(rows)
}

/// Plain-text overview of a run directory: one line per run.
pub fn overview(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let fields: Vec<String> = r.fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(out, "{} {}", r.run_id, fields.join(" ")).unwrap();
    }
    out
}
