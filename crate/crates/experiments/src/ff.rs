//! Feed-forward experiments: extreme-tail regression and MNIST.

use std::path::Path;

use adapt::data::{load_mnist_idx, sample_tail, to_tensors, Mnist};
use adapt::optim::{train, DivergenceRule, Objective, StepLoss, TrainConfig, TrainOutcome};
use adapt::rng::{self, Rng};
use adapt::{Graph, ParamStore, Tensor};
use rand::seq::SliceRandom;

use crate::config::ExperimentConfig;
use crate::error::{ExperimentError, Result};
use crate::models::FfNet;
use crate::report::RunRecord;

/// Random streams derived from the config seed.
pub(crate) mod stream {
    pub const INIT: u64 = 1;
    pub const VALID: u64 = 2;
    pub const TEST: u64 = 3;
}

/// Splits `steps` into epochs of `eval_every` steps; the last may be short.
fn epoch_steps(steps: usize, eval_every: usize, epoch: usize) -> usize {
    steps.saturating_sub(epoch * eval_every).min(eval_every)
}

pub(crate) fn train_config(cfg: &ExperimentConfig, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        optimizer: cfg.optimizer.optimizer(),
        schedule: cfg.optimizer.schedule(),
        clip: cfg.optimizer.clip,
        seed: cfg.seed,
        divergence: DivergenceRule {
            after_epochs: cfg.train.divergence_after,
            factor: cfg.train.divergence_factor,
        },
        record_time: cfg.train.record_time,
    }
}

pub(crate) fn record(
    run_id: String,
    cfg: &ExperimentConfig,
    params: usize,
    outcome: TrainOutcome,
    scores: Vec<(String, f64)>,
    heatmap: String,
) -> RunRecord {
    let mut config = cfg.clone();
    config.baseline = None;
    RunRecord {
        run_id,
        config,
        params,
        converged: outcome.converged(),
        divergence: outcome.divergence.map(|d| format!("epoch {}, step {}: {}", d.epoch, d.step, d.reason)),
        history: outcome.history,
        steps: outcome.steps,
        scores,
        heatmap,
    }
}

fn rows(t: &Tensor, n: usize) -> adapt::Result<Tensor> {
    let n = n.min(t.rows());
    Tensor::new(&[n, t.cols()], t.data()[..n * t.cols()].to_vec())
}

fn mse(pred: &Tensor, y: &Tensor) -> f64 {
    pred.data().iter().zip(y.data()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.numel() as f64
}

struct TailObjective<'a> {
    net: &'a FfNet,
    batch: usize,
    steps: usize,
    eval_every: usize,
    valid: (Tensor, Tensor),
}

impl Objective for TailObjective<'_> {
    fn begin_epoch(&mut self, epoch: usize, _rng: &mut Rng) -> adapt::Result<usize> {
        Ok(epoch_steps(self.steps, self.eval_every, epoch))
    }

    fn train_step(&mut self, g: &mut Graph<'_>, _step: usize, rng: &mut Rng) -> adapt::Result<StepLoss> {
        let (x, y) = to_tensors(&sample_tail(self.batch, rng));
        let (x, y) = (g.input(x), g.input(y));
        let pred = self.net.forward(g, x)?;
        Ok(StepLoss {
            loss: g.mse(pred, y)?,
            weight: self.batch as f64,
        })
    }

    fn validate(&mut self, store: &ParamStore) -> adapt::Result<f64> {
        let pred = self.net.predict(store, &self.valid.0)?;
        Ok(mse(&pred, &self.valid.1))
    }
}

/// Fits `y = (2x₁)² − (3x₂)⁴ + ε` from fresh batches and reports test MSE
/// on `test_size` held-out samples.
pub fn run_tail(cfg: &ExperimentConfig, run_id: String) -> Result<RunRecord> {
    let mut store = ParamStore::new();
    let net = FfNet::new(&mut store, &cfg.model, 2, 1, &mut rng::derived(cfg.seed, stream::INIT))?;
    let params = store.count();
    let steps = cfg.train.steps.unwrap_or(10_000);
    let valid = to_tensors(&sample_tail(cfg.data.valid_size, &mut rng::derived(cfg.seed, stream::VALID)));
    let mut objective = TailObjective {
        net: &net,
        batch: cfg.data.batch,
        steps,
        eval_every: cfg.train.eval_every,
        valid,
    };
    let epochs = steps.div_ceil(cfg.train.eval_every);
    let outcome = train(&mut store, &mut objective, &train_config(cfg, epochs))?;

    let test = to_tensors(&sample_tail(cfg.data.test_size, &mut rng::derived(cfg.seed, stream::TEST)));
    let pred = net.predict(&store, &test.0)?;
    let heatmap = net.heatmap(&store, &rows(&test.0, cfg.data.inspect)?)?;
    let scores = vec![("test_mse".to_string(), mse(&pred, &test.1))];
    Ok(record(run_id, cfg, params, outcome, scores, heatmap))
}

/// MNIST training and held-out splits.
pub struct MnistData {
    pub train: Mnist,
    pub valid_idx: Vec<usize>,
    pub train_idx: Vec<usize>,
    pub test: Mnist,
}

pub fn load_mnist(dir: &Path, valid_size: usize) -> Result<MnistData> {
    let train = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let test = load_mnist_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
    if valid_size >= train.len() {
        return Err(ExperimentError::Invalid(format!(
            "valid_size {valid_size} leaves no training images out of {}",
            train.len()
        )));
    }
    let cut = train.len() - valid_size;
    Ok(MnistData {
        train_idx: (0..cut).collect(),
        valid_idx: (cut..train.len()).collect(),
        train,
        test,
    })
}

struct MnistObjective<'a> {
    net: &'a FfNet,
    data: &'a MnistData,
    batch: usize,
    steps: usize,
    eval_every: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl MnistObjective<'_> {
    fn next_batch(&mut self, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

fn xent(net: &FfNet, store: &ParamStore, set: &Mnist, idx: &[usize]) -> adapt::Result<f64> {
    let mut g = Graph::new(store);
    let x = g.input(set.batch(idx));
    let logits = net.forward(&mut g, x)?;
    let loss = g.softmax_xent(logits, &set.batch_labels(idx))?;
    Ok(g.value(loss).item())
}

/// Fraction of `idx` whose arg-max logit is the label, in chunks.
pub fn accuracy(net: &FfNet, store: &ParamStore, set: &Mnist, idx: &[usize]) -> adapt::Result<f64> {
    let mut correct = 0;
    for chunk in idx.chunks(1000) {
        let logits = net.predict(store, &set.batch(chunk))?;
        for (r, label) in set.batch_labels(chunk).into_iter().enumerate() {
            let row = logits.row(r);
            let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).expect("ten classes");
            correct += usize::from(best == label);
        }
    }
    Ok(correct as f64 / idx.len() as f64)
}

impl Objective for MnistObjective<'_> {
    fn begin_epoch(&mut self, epoch: usize, _rng: &mut Rng) -> adapt::Result<usize> {
        Ok(epoch_steps(self.steps, self.eval_every, epoch))
    }

    fn train_step(&mut self, g: &mut Graph<'_>, _step: usize, rng: &mut Rng) -> adapt::Result<StepLoss> {
        let idx = self.next_batch(rng);
        let x = g.input(self.data.train.batch(&idx));
        let logits = self.net.forward(g, x)?;
        Ok(StepLoss {
            loss: g.softmax_xent(logits, &self.data.train.batch_labels(&idx))?,
            weight: idx.len() as f64,
        })
    }

    fn validate(&mut self, store: &ParamStore) -> adapt::Result<f64> {
        xent(self.net, store, &self.data.train, &self.data.valid_idx)
    }
}

/// Trains a classifier on flattened MNIST digits and reports train and test
/// accuracy.
pub fn run_mnist(cfg: &ExperimentConfig, data: &MnistData, run_id: String) -> Result<RunRecord> {
    let mut store = ParamStore::new();
    let features = data.train.features();
    let net = FfNet::new(&mut store, &cfg.model, features, 10, &mut rng::derived(cfg.seed, stream::INIT))?;
    let params = store.count();
    let steps = cfg.train.steps.unwrap_or(50_000);
    let mut objective = MnistObjective {
        net: &net,
        data,
        batch: cfg.data.batch,
        steps,
        eval_every: cfg.train.eval_every,
        order: data.train_idx.clone(),
        cursor: data.train_idx.len(),
    };
    let epochs = steps.div_ceil(cfg.train.eval_every);
    let outcome = train(&mut store, &mut objective, &train_config(cfg, epochs))?;

    let test_idx: Vec<usize> = (0..data.test.len()).collect();
    let scores = vec![
        ("train_accuracy".to_string(), accuracy(&net, &store, &data.train, &data.train_idx)?),
        ("valid_accuracy".to_string(), accuracy(&net, &store, &data.train, &data.valid_idx)?),
        ("test_accuracy".to_string(), accuracy(&net, &store, &data.test, &test_idx)?),
    ];
    let inspect: Vec<usize> = (0..cfg.data.inspect.min(data.test.len())).collect();
    let heatmap = net.heatmap(&store, &data.test.batch(&inspect))?;
    Ok(record(run_id, cfg, params, outcome, scores, heatmap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epochs_cover_all_steps() {
        let total: usize = (0..4).map(|e| epoch_steps(2500, 1000, e)).sum();
        assert_eq!(total, 2500);
        assert_eq!(epoch_steps(2500, 1000, 2), 500);
    }
}
