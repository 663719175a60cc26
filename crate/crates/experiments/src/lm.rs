//! Recurrent language-model experiments.

use adapt::data::{batch_bptt, tokenize_and_index, BpttConfig, BpttWindow, Vocabulary};
use adapt::optim::{sample_masks, train, DropoutRates, Objective, StepLoss};
use adapt::recurrent::{LanguageModel, LayerTensors, RecurrentStack};
use adapt::rng::{self, Rng};
use adapt::{Graph, ParamStore, Tensor};

use crate::config::{DataSpec, ExperimentConfig};
use crate::error::{ExperimentError, Result};
use crate::ff::{record, stream, train_config};
use crate::models::{build_lm, table};
use crate::report::RunRecord;

/// An indexed corpus cut into contiguous train, validation and test parts.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Corpus {
    /// Indexes `text`, keeps the first `max_tokens` tokens and splits them
    /// in order: train, then validation, then test.
    pub fn from_text(text: &str, data: &DataSpec) -> Result<Self> {
        let (vocab, mut ids) = tokenize_and_index(text, data.tokens.to_core());
        if let Some(max) = data.max_tokens {
            ids.truncate(max);
        }
        let n = ids.len();
        let n_valid = (n as f64 * data.valid_fraction).round() as usize;
        let n_test = (n as f64 * data.test_fraction).round() as usize;
        let n_train = n - n_valid - n_test;
        if n_train == 0 || n_valid < 2 || n_test < 2 {
            return Err(ExperimentError::Invalid(format!(
                "corpus of {n} tokens is too small for the requested splits"
            )));
        }
        let test = ids.split_off(n_train + n_valid);
        let valid = ids.split_off(n_train);
        Ok(Corpus {
            vocab,
            train: ids,
            valid,
            test,
        })
    }

    pub fn load(data: &DataSpec) -> Result<Self> {
        let path = data.path.as_ref().ok_or_else(|| ExperimentError::MissingKeys {
            section: "data",
            keys: "path".into(),
        })?;
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_text(&text, data)
    }
}

fn bptt_config(data: &DataSpec) -> BpttConfig {
    if data.bptt_fixed {
        BpttConfig::fixed(data.batch, data.bptt)
    } else {
        BpttConfig::new(data.batch, data.bptt)
    }
}

/// Batch size for evaluation: the training batch, shrunk so that every
/// stream holds at least one full window.
fn eval_batch(tokens: usize, data: &DataSpec) -> usize {
    data.batch.min(tokens / (data.bptt + 1)).max(1)
}

struct LmObjective<'a> {
    model: &'a LanguageModel,
    corpus: &'a Corpus,
    data: &'a DataSpec,
    bptt: BpttConfig,
    rates: DropoutRates,
    windows: Vec<BpttWindow>,
    state: Vec<LayerTensors>,
}

impl Objective for LmObjective<'_> {
    fn reports_perplexity(&self) -> bool {
        true
    }

    fn begin_epoch(&mut self, _epoch: usize, rng: &mut Rng) -> adapt::Result<usize> {
        self.windows = batch_bptt(&self.corpus.train, &self.bptt, rng)?;
        self.state = self.model.zero_state(self.bptt.batch);
        Ok(self.windows.len())
    }

    fn train_step(&mut self, g: &mut Graph<'_>, step: usize, rng: &mut Rng) -> adapt::Result<StepLoss> {
        let w = &self.windows[step];
        if !w.carry {
            self.state = self.model.zero_state(self.bptt.batch);
        }
        let masks = if self.rates == DropoutRates::NONE {
            None
        } else {
            Some(sample_masks(&self.rates, &self.model.mask_shapes(self.bptt.batch), rng)?)
        };
        let (loss, state) = self.model.unroll(g, &w.inputs, &w.targets, &self.state, masks.as_ref())?;
        self.state = RecurrentStack::detach_state(g, &state);
        let len = w.len();
        Ok(StepLoss {
            loss: g.scale(loss, 1.0 / len as f64),
            weight: (len * self.bptt.batch) as f64,
        })
    }

    fn validate(&mut self, store: &ParamStore) -> adapt::Result<f64> {
        let valid = &self.corpus.valid;
        self.model.evaluate(store, valid, eval_batch(valid.len(), self.data), self.data.bptt)
    }
}

/// Final hidden state (and latent, for adaptive stacks) of the bottom layer
/// after reading the first window of `tokens` split into `rows` streams.
fn lm_heatmap(model: &LanguageModel, store: &ParamStore, tokens: &[usize], rows: usize, bptt: usize) -> Result<String> {
    let rows = rows.min(tokens.len() / 2).max(1);
    let stream = tokens.len() / rows;
    let len = bptt.min(stream - 1).max(1);
    let inputs: Vec<Vec<usize>> = (0..rows).map(|b| tokens[b * stream..b * stream + len].to_vec()).collect();
    let targets: Vec<Vec<usize>> = (0..rows).map(|b| tokens[b * stream + 1..b * stream + len + 1].to_vec()).collect();
    let mut g = Graph::new(store);
    let (_, states) = model.unroll(&mut g, &inputs, &targets, &model.zero_state(rows), None)?;
    let h = g.value(states[0].h).clone();
    let mut header: Vec<String> =
        std::iter::once("sample".to_string()).chain((0..h.cols()).map(|i| format!("h0_{i}"))).collect();
    let values = match states[0].policy {
        Some(p) => {
            let z = g.value(p.z);
            header.extend((0..z.cols()).map(|i| format!("z0_{i}")));
            let mut data = Vec::with_capacity(rows * (h.cols() + z.cols()));
            for r in 0..rows {
                data.extend_from_slice(h.row(r));
                data.extend_from_slice(z.row(r));
            }
            Tensor::new(&[rows, h.cols() + z.cols()], data)?
        }
        None => h,
    };
    Ok(table(&header, &values))
}

/// Trains `cfg.model` for `cfg.train.epochs` epochs and reports validation
/// and test perplexity.
pub fn run_lm(cfg: &ExperimentConfig, corpus: &Corpus, run_id: String) -> Result<RunRecord> {
    let mut store = ParamStore::new();
    let vocab = corpus.vocab.len();
    let model = build_lm(&mut store, &cfg.model, vocab, &mut rng::derived(cfg.seed, stream::INIT))?;
    let params = store.count();
    let mut objective = LmObjective {
        model: &model,
        corpus,
        data: &cfg.data,
        bptt: bptt_config(&cfg.data),
        rates: cfg.dropout,
        windows: Vec::new(),
        state: Vec::new(),
    };
    let outcome = train(&mut store, &mut objective, &train_config(cfg, cfg.train.epochs))?;

    let mut scores = Vec::new();
    if let Some(v) = outcome.history.last(adapt::optim::Split::Valid) {
        scores.push(("valid_ppl".to_string(), v.loss.exp()));
    }
    let test = &corpus.test;
    let test_loss = model.evaluate(&store, test, eval_batch(test.len(), &cfg.data), cfg.data.bptt)?;
    scores.push(("test_ppl".to_string(), test_loss.exp()));
    let heatmap = lm_heatmap(&model, &store, &corpus.valid, cfg.data.inspect, cfg.data.bptt)?;
    Ok(record(run_id, cfg, params, outcome, scores, heatmap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TokenName;

    #[test]
    fn splits_are_contiguous_and_complete() {
        let data = DataSpec {
            tokens: TokenName::Char,
            valid_fraction: 0.1,
            test_fraction: 0.2,
            ..DataSpec::default()
        };
        let text = "abcdefghij".repeat(10);
        let c = Corpus::from_text(&text, &data).unwrap();
        assert_eq!((c.train.len(), c.valid.len(), c.test.len()), (70, 10, 20));
        let all: String = [&c.train, &c.valid, &c.test].iter().flat_map(|p| c.vocab.decode_all(p)).collect();
        assert_eq!(all, text);
        let limited = Corpus::from_text(
            &text,
            &DataSpec {
                max_tokens: Some(50),
                ..data
            },
        )
        .unwrap();
        assert_eq!(limited.train.len() + limited.valid.len() + limited.test.len(), 50);
    }
}
