//! Ablation grid over adaptation policy and adaptation model.

use std::fmt::Write as _;

use adapt::layers::fmt_real;
use rayon::prelude::*;

use crate::config::{Adaptation, AdaptationModel, Architecture, ExperimentConfig, ModelSpec};
use crate::error::Result;
use crate::lm::{run_lm, Corpus};
use crate::models::{lm_param_count, match_hidden};
use crate::report::RunRecord;

/// Largest relative parameter-count gap accepted as matched.
pub const MATCH_TOLERANCE: f64 = 0.02;

/// One row of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub spec: ModelSpec,
    pub params: usize,
    pub target: usize,
}

impl GridCell {
    pub fn gap(&self) -> f64 {
        (self.params as f64 - self.target as f64).abs() / self.target as f64
    }

    pub fn matched(&self) -> bool {
        self.gap() <= MATCH_TOLERANCE
    }

    /// `lstm`, or `<adaptation model>/<policy>` for adaptive cells.
    pub fn name(&self) -> String {
        match self.spec.architecture {
            Architecture::Alstm => format!("{}-{}", self.spec.adaptation_model, self.spec.adaptation),
            a => a.keyword().to_string(),
        }
    }
}

/// The LSTM baseline followed by every (adaptation model, policy) pair with
/// output or IO adaptation, each resized to the parameter count of
/// `cfg.model`. The LSTM cell takes its hidden sizes from `cfg.baseline`
/// when given.
pub fn grid_cells(cfg: &ExperimentConfig, vocab: usize) -> Result<Vec<GridCell>> {
    let target = lm_param_count(&cfg.model, vocab)?;
    let mut specs = Vec::with_capacity(7);
    let lstm = cfg.baseline.clone().filter(|b| b.architecture == Architecture::Lstm).unwrap_or_else(|| ModelSpec {
        architecture: Architecture::Lstm,
        ..cfg.model.clone()
    });
    specs.push(lstm);
    for model in AdaptationModel::ALL {
        for policy in [Adaptation::Output, Adaptation::Io] {
            specs.push(ModelSpec {
                architecture: Architecture::Alstm,
                adaptation: policy,
                adaptation_model: *model,
                ..cfg.model.clone()
            });
        }
    }
    specs
        .into_iter()
        .map(|mut spec| {
            let (hidden, params) = match_hidden(&spec, vocab, target)?;
            spec.hidden = hidden;
            Ok(GridCell { spec, params, target })
        })
        .collect()
}

pub struct GridResult {
    pub cells: Vec<GridCell>,
    pub records: Vec<RunRecord>,
    /// CSV comparing the cells.
    pub table: String,
}

pub const GRID_HEADER: &str =
    "cell,adaptation_model,policy,hidden,params,target_params,gap,matched,valid_ppl,test_ppl,converged";

/// Trains every grid cell on `corpus` with the settings of `cfg`.
pub fn ablation_grid(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<GridResult> {
    let cells = grid_cells(cfg, corpus.vocab.len())?;
    let records = cells
        .par_iter()
        .map(|cell| {
            let mut c = cfg.clone();
            c.model = cell.spec.clone();
            run_lm(&c, corpus, format!("{}-{}-s{}", cfg.name, cell.name(), cfg.seed))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = format!("{GRID_HEADER}\n");
    for (cell, r) in cells.iter().zip(&records) {
        let (model, policy) = match cell.spec.architecture {
            Architecture::Alstm => (cell.spec.adaptation_model.keyword(), cell.spec.adaptation.keyword()),
            _ => ("-", "none"),
        };
        let hidden: Vec<String> = cell.spec.hidden.iter().map(usize::to_string).collect();
        writeln!(
            table,
            "{},{model},{policy},{},{},{},{},{},{},{},{}",
            cell.name(),
            hidden.join(" "),
            cell.params,
            cell.target,
            fmt_real(cell.gap()),
            cell.matched(),
            fmt_real(r.score("valid_ppl").unwrap_or(f64::NAN)),
            fmt_real(r.score("test_ppl").unwrap_or(f64::NAN)),
            r.converged
        )
        .unwrap();
    }
    Ok(GridResult { cells, records, table })
}
