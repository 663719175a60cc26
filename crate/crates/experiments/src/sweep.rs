//! Robustness of LSTM and aLSTM to perturbed dropout rates.

use std::fmt::Write as _;

use adapt::layers::fmt_real;
use adapt::optim::DropoutRates;
use adapt::rng;
use rand::Rng as _;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{ExperimentError, Result};
use crate::lm::{run_lm, Corpus};
use crate::report::RunRecord;

/// Rates are kept strictly below one.
const MAX_RATE: f64 = 0.99;

/// Rate vector `i` of a sweep: each rate drawn uniformly from
/// `[r - radius, r + radius]` around `base` and clipped to `[0, 0.99]`.
/// The stream is derived from `seed + i`.
pub fn sample_rates(base: &DropoutRates, radius: f64, seed: u64, i: usize) -> DropoutRates {
    let mut r = rng::derived(seed.wrapping_add(i as u64), 0x5EED);
    let rates = base.as_array().map(|p| {
        let v = if radius > 0.0 {
            p + r.random_range(-radius..=radius)
        } else {
            p
        };
        v.clamp(0.0, MAX_RATE)
    });
    DropoutRates::from_array(rates)
}

/// Order statistics of one population's converged scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub label: String,
    pub samples: usize,
    pub failures: usize,
    /// Validation perplexities of converged runs, ascending.
    pub scores: Vec<f64>,
}

impl Population {
    pub fn failure_fraction(&self) -> f64 {
        self.failures as f64 / self.samples as f64
    }

    /// Linear-interpolation quantile of the converged scores.
    pub fn quantile(&self, q: f64) -> f64 {
        quantile(&self.scores, q)
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }
}

/// Quantile of ascending `sorted` with linear interpolation between order
/// statistics; NaN when empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub struct SweepResult {
    /// Baseline runs first, then model runs, each in sample order.
    pub records: Vec<RunRecord>,
    pub baseline: Population,
    pub model: Population,
    /// One row per run.
    pub table: String,
    pub summary: String,
}

pub const SWEEP_HEADER: &str = "model,sample,word,embedding,latent,hidden,output,valid_ppl,converged";

fn population(label: String, records: &[RunRecord]) -> Population {
    let mut scores: Vec<f64> = records.iter().filter(|r| r.converged).filter_map(|r| r.score("valid_ppl")).collect();
    scores.sort_by(f64::total_cmp);
    Population {
        label,
        samples: records.len(),
        failures: records.iter().filter(|r| !r.converged).count(),
        scores,
    }
}

/// Trains `[baseline]` and `[model]` of `cfg` at `n` perturbed dropout
/// settings each. Sample `i` uses the same rates for both models; training
/// itself always uses `cfg.seed`, so a zero radius repeats one run.
pub fn robustness_sweep(cfg: &ExperimentConfig, corpus: &Corpus, n: usize, radius: f64) -> Result<SweepResult> {
    if n == 0 {
        return Err(ExperimentError::Invalid("a sweep needs at least one sample".into()));
    }
    if radius.is_nan() || radius < 0.0 {
        return Err(ExperimentError::Invalid(format!("radius must be non-negative, got {radius}")));
    }
    let baseline = cfg
        .baseline
        .clone()
        .ok_or_else(|| ExperimentError::Invalid("a sweep compares [model] against [baseline]; add one".into()))?;
    let rates: Vec<DropoutRates> = (0..n).map(|i| sample_rates(&cfg.dropout, radius, cfg.seed, i)).collect();
    let jobs: Vec<(usize, usize)> = (0..2).flat_map(|m| (0..n).map(move |i| (m, i))).collect();
    let records = jobs
        .par_iter()
        .map(|&(m, i)| {
            let mut c = cfg.clone();
            c.model = if m == 0 { baseline.clone() } else { cfg.model.clone() };
            c.dropout = rates[i];
            let id = format!("{}-{}-{i:03}", cfg.name, c.model.label());
            run_lm(&c, corpus, id)
        })
        .collect::<Result<Vec<_>>>()?;

    let (base_runs, model_runs) = records.split_at(n);
    let pops = [
        population(baseline.label(), base_runs),
        population(cfg.model.label(), model_runs),
    ];
    let mut table = format!("{SWEEP_HEADER}\n");
    for (k, r) in records.iter().enumerate() {
        let rs: Vec<String> = rates[k % n].as_array().iter().map(|&v| fmt_real(v)).collect();
        writeln!(
            table,
            "{},{},{},{},{}",
            r.config.model.label(),
            k % n,
            rs.join(","),
            fmt_real(r.score("valid_ppl").unwrap_or(f64::NAN)),
            r.converged
        )
        .unwrap();
    }
    let mut summary = String::from("model,samples,failures,failure_fraction,p10,p25,p50,p75,p90,iqr\n");
    for p in &pops {
        let qs: Vec<String> = [0.1, 0.25, 0.5, 0.75, 0.9].iter().map(|&q| fmt_real(p.quantile(q))).collect();
        writeln!(
            summary,
            "{},{},{},{},{},{}",
            p.label,
            p.samples,
            p.failures,
            fmt_real(p.failure_fraction()),
            qs.join(","),
            fmt_real(p.iqr())
        )
        .unwrap();
    }
    let [baseline, model] = pops;
    Ok(SweepResult {
        records,
        baseline,
        model,
        table,
        summary,
    })
}
