//! Experiment orchestration for adaptive parameterization: plain-text
//! configs, the regression, MNIST and language-model runs, the ablation
//! grid, the dropout robustness sweep and their report files.

pub mod config;
mod error;
pub mod ff;
pub mod grid;
pub mod lm;
pub mod models;
pub mod report;
pub mod sweep;

use std::path::{Path, PathBuf};

pub use config::{parse_config, ExperimentConfig, ExperimentKind, ModelSpec};
pub use error::{ExperimentError, Result};
pub use report::{emit_report, output_root, RunRecord};

/// Run id of a model trained by [`run`].
fn run_id(cfg: &ExperimentConfig, spec: &ModelSpec, role: &str) -> String {
    let label = spec.label();
    let clash = cfg.baseline.as_ref().is_some_and(|b| b.label() == cfg.model.label());
    if clash && role == "baseline" {
        format!("{}-{label}-baseline-s{}", cfg.name, cfg.seed)
    } else {
        format!("{}-{label}-s{}", cfg.name, cfg.seed)
    }
}

/// Trains `[model]` and then `[baseline]`, if present, on the same data.
/// Grid and sweep configs run their full study.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    Ok(match cfg.experiment {
        ExperimentKind::AblationGrid => grid::ablation_grid(cfg, &lm::Corpus::load(&cfg.data)?)?.records,
        ExperimentKind::RobustnessSweep => {
            let corpus = lm::Corpus::load(&cfg.data)?;
            sweep::robustness_sweep(cfg, &corpus, cfg.train.samples, cfg.train.radius)?.records
        }
        kind => {
            let roles = std::iter::once((&cfg.model, "model")).chain(cfg.baseline.iter().map(|b| (b, "baseline")));
            let mnist = match kind {
                ExperimentKind::Mnist => Some(ff::load_mnist(data_path(cfg)?, cfg.data.valid_size)?),
                _ => None,
            };
            let corpus = match kind {
                ExperimentKind::TinyLm => Some(lm::Corpus::load(&cfg.data)?),
                _ => None,
            };
            let mut records = Vec::new();
            for (spec, role) in roles {
                let mut c = cfg.clone();
                c.model = spec.clone();
                let id = run_id(cfg, spec, role);
                records.push(match kind {
                    ExperimentKind::TailRegression => ff::run_tail(&c, id)?,
                    ExperimentKind::Mnist => ff::run_mnist(&c, mnist.as_ref().expect("loaded above"), id)?,
                    _ => lm::run_lm(&c, corpus.as_ref().expect("loaded above"), id)?,
                });
            }
            records
        }
    })
}

/// File name of the grid comparison table.
pub const GRID_TABLE: &str = "grid.csv";
/// File names of the per-run sweep table and the population summary.
pub const SWEEP_TABLE: &str = "sweep.csv";
pub const SWEEP_SUMMARY: &str = "sweep_summary.csv";

/// Runs `cfg` and writes the report files into `dir`. Grid and sweep
/// configs also write their comparison tables; a sweep takes its sample
/// count and radius from `[train]`.
pub fn run_to(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<RunRecord>> {
    match cfg.experiment {
        ExperimentKind::AblationGrid => grid_to(cfg, dir),
        ExperimentKind::RobustnessSweep => sweep_to(cfg, cfg.train.samples, cfg.train.radius, dir),
        _ => {
            let records = run(cfg)?;
            emit_report(&records, dir)?;
            Ok(records)
        }
    }
}

/// Trains the ablation grid built around the `[model]` of a language-model
/// config and writes the run reports and [`GRID_TABLE`] into `dir`.
pub fn grid_to(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let result = grid::ablation_grid(cfg, &lm::Corpus::load(&cfg.data)?)?;
    emit_report(&result.records, dir)?;
    report::emit_table(dir, GRID_TABLE, &result.table)?;
    Ok(result.records)
}

/// Runs the robustness sweep of a language-model config with `n` samples
/// per model and writes the run reports, [`SWEEP_TABLE`] and
/// [`SWEEP_SUMMARY`] into `dir`.
pub fn sweep_to(cfg: &ExperimentConfig, n: usize, radius: f64, dir: &Path) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let result = sweep::robustness_sweep(cfg, &lm::Corpus::load(&cfg.data)?, n, radius)?;
    emit_report(&result.records, dir)?;
    report::emit_table(dir, SWEEP_TABLE, &result.table)?;
    report::emit_table(dir, SWEEP_SUMMARY, &result.summary)?;
    Ok(result.records)
}

fn data_path(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.data.path.as_deref().ok_or_else(|| ExperimentError::MissingKeys {
        section: "data",
        keys: "path".into(),
    })
}

/// Directory a config's outputs go to: `<root>/<name>`.
pub fn run_dir(root: &Path, cfg: &ExperimentConfig) -> PathBuf {
    root.join(&cfg.name)
}
