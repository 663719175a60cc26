//! Generic epoch loop: forward, backward, clip, step, validate.

use std::time::Instant;

use crate::autodiff::{Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::optim::{clip_global_norm, sgd_step, Adam, AdamConfig, MetricsHistory, MetricsRow, Schedule, Split};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adam(AdamConfig),
    Sgd,
}

/// Stop criterion for runs that blow up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceRule {
    /// Epoch from which the validation check is active.
    pub after_epochs: usize,
    /// Allowed ratio of the validation score to its value before training.
    pub factor: f64,
}

impl Default for DivergenceRule {
    fn default() -> Self {
        DivergenceRule {
            after_epochs: 10,
            factor: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub schedule: Schedule,
    pub clip: Option<f64>,
    pub seed: u64,
    pub divergence: DivergenceRule,
    /// Fill the `seconds` column with wall-clock time. Off by default so
    /// reruns produce identical metrics.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            optimizer: OptimizerKind::Adam(AdamConfig::default()),
            schedule: Schedule {
                base: 0.003,
                cuts: vec![100, 160],
                factor: 10.0,
            },
            clip: None,
            seed: 0,
            divergence: DivergenceRule::default(),
            record_time: false,
        }
    }
}

/// One optimizer step's loss and how much data it covered.
pub struct StepLoss {
    pub loss: Var,
    /// Weight of this step in the epoch mean (e.g. tokens or samples).
    pub weight: f64,
}

/// A model plus data, seen by the loop as a sequence of losses.
pub trait Objective {
    /// Whether the loss is a per-token cross-entropy, so perplexity applies.
    fn reports_perplexity(&self) -> bool {
        false
    }

    /// Prepares epoch `epoch` (zero-based) and returns its number of steps.
    fn begin_epoch(&mut self, epoch: usize, rng: &mut Rng) -> Result<usize>;

    /// Builds the loss of step `step` of the current epoch on `g`.
    fn train_step(&mut self, g: &mut Graph<'_>, step: usize, rng: &mut Rng) -> Result<StepLoss>;

    /// Mean validation loss under the current parameters.
    fn validate(&mut self, store: &ParamStore) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub epoch: usize,
    pub step: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: MetricsHistory,
    pub steps: usize,
    pub divergence: Option<Divergence>,
}

impl TrainOutcome {
    pub fn converged(&self) -> bool {
        self.divergence.is_none()
    }

    pub fn into_result(self) -> Result<MetricsHistory> {
        match self.divergence {
            None => Ok(self.history),
            Some(d) => Err(Error::Diverged {
                epoch: d.epoch,
                step: d.step,
                reason: d.reason,
            }),
        }
    }
}

enum Stepper {
    Adam(Adam),
    Sgd,
}

/// Trains `objective` in place. A validation row is recorded before the
/// first epoch (epoch 0) and after every epoch; training stops early, with
/// `divergence` set, on a non-finite loss or gradient, or when the
/// validation score exceeds `factor ×` its initial value after
/// `after_epochs` epochs.
pub fn train(store: &mut ParamStore, objective: &mut dyn Objective, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let start = Instant::now();
    let elapsed = |record: bool| if record { start.elapsed().as_secs_f64() } else { 0.0 };
    let mut rng = rng::seeded(cfg.seed);
    let mut stepper = match cfg.optimizer {
        OptimizerKind::Adam(a) => Stepper::Adam(Adam::new(a, store)),
        OptimizerKind::Sgd => Stepper::Sgd,
    };
    let ppl = objective.reports_perplexity();
    let score = |loss: f64| if ppl { loss.exp() } else { loss };
    let row = |epoch, step, split, loss: f64, lr, seconds| MetricsRow {
        epoch,
        step,
        split,
        loss,
        ppl: ppl.then(|| loss.exp()),
        lr,
        seconds,
    };

    let mut history = MetricsHistory::new();
    let initial = objective.validate(store)?;
    history.push(row(0, 0, Split::Valid, initial, cfg.schedule.rate(0), elapsed(cfg.record_time)));
    let mut steps = 0;
    let diverged = |epoch, step, reason: String| Divergence { epoch, step, reason };
    if !initial.is_finite() {
        return Ok(TrainOutcome {
            history,
            steps,
            divergence: Some(diverged(0, 0, "non-finite initial validation loss".into())),
        });
    }

    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.rate(epoch);
        let n = objective.begin_epoch(epoch, &mut rng)?;
        let (mut sum, mut weight) = (0.0, 0.0);
        for s in 0..n {
            let (loss, w, mut grads) = {
                let mut g = Graph::new(store);
                let step = objective.train_step(&mut g, s, &mut rng)?;
                let loss = g.value(step.loss).item();
                if !loss.is_finite() {
                    return Ok(TrainOutcome {
                        history,
                        steps,
                        divergence: Some(diverged(epoch + 1, steps, format!("non-finite training loss {loss}"))),
                    });
                }
                (loss, step.weight, g.backward(step.loss)?.into_params())
            };
            if grads.iter().any(|t| !t.all_finite()) {
                return Ok(TrainOutcome {
                    history,
                    steps,
                    divergence: Some(diverged(epoch + 1, steps, "non-finite gradient".into())),
                });
            }
            if let Some(max) = cfg.clip {
                clip_global_norm(&mut grads, max);
            }
            match &mut stepper {
                Stepper::Adam(a) => a.step(store, &grads, lr)?,
                Stepper::Sgd => sgd_step(store, &grads, lr)?,
            }
            steps += 1;
            sum += loss * w;
            weight += w;
        }
        let train_loss = if weight > 0.0 { sum / weight } else { f64::NAN };
        history.push(row(epoch + 1, steps, Split::Train, train_loss, lr, elapsed(cfg.record_time)));
        let val = objective.validate(store)?;
        history.push(row(epoch + 1, steps, Split::Valid, val, lr, elapsed(cfg.record_time)));
        let reason = if !val.is_finite() {
            Some("non-finite validation loss".to_string())
        } else if epoch + 1 >= cfg.divergence.after_epochs && score(val) > cfg.divergence.factor * score(initial) {
            Some(format!(
                "validation score {} exceeds {} x initial {}",
                score(val),
                cfg.divergence.factor,
                score(initial)
            ))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Ok(TrainOutcome {
                history,
                steps,
                divergence: Some(diverged(epoch + 1, steps, reason)),
            });
        }
    }
    Ok(TrainOutcome {
        history,
        steps,
        divergence: None,
    })
}
