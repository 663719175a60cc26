//! Recurrent language model and its truncated-BPTT unroll.

use crate::autodiff::{Graph, Init, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::optim::WindowMasks;
use crate::recurrent::stack::{AdaptiveSpec, LayerState, LayerTensors, RecurrentStack, StackSpec, StepMasks};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct LmConfig {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: Vec<usize>,
    pub adaptive: Option<AdaptiveSpec>,
    /// Share the embedding matrix with the decoder; needs the top hidden size
    /// to equal `embed`.
    pub tie_embeddings: bool,
}

#[derive(Clone, Debug)]
pub struct LanguageModel {
    pub cfg: LmConfig,
    pub embedding: ParamId,
    pub stack: RecurrentStack,
    /// `None` when tied to the embedding.
    pub decoder: Option<ParamId>,
    pub decoder_bias: ParamId,
}

/// Shapes a dropout plan needs to sample masks for this model.
#[derive(Clone, Debug)]
pub struct MaskShapes {
    pub batch: usize,
    pub vocab: usize,
    pub embed: usize,
    pub hidden: Vec<usize>,
    pub latent: Option<usize>,
}

impl LanguageModel {
    pub fn new(store: &mut ParamStore, cfg: LmConfig, rng: &mut Rng) -> Result<Self> {
        if cfg.vocab == 0 || cfg.embed == 0 {
            return Err(Error::extent("language_model", "vocabulary and embedding must be nonempty"));
        }
        let embedding = store.add("embedding", &[cfg.vocab, cfg.embed], Init::UniformFanIn, rng);
        let spec = StackSpec {
            input: cfg.embed,
            hidden: cfg.hidden.clone(),
            adaptive: cfg.adaptive.clone(),
        };
        let stack = RecurrentStack::new(store, "rnn", &spec, rng)?;
        let top = stack.output_size();
        let decoder = if cfg.tie_embeddings {
            if top != cfg.embed {
                return Err(Error::extent(
                    "language_model",
                    format!("tied embeddings need top hidden {top} == embed {}", cfg.embed),
                ));
            }
            None
        } else {
            Some(store.add("decoder.W", &[cfg.vocab, top], Init::UniformFanIn, rng))
        };
        let decoder_bias = store.add("decoder.b", &[cfg.vocab], Init::Zeros, rng);
        Ok(LanguageModel {
            cfg,
            embedding,
            stack,
            decoder,
            decoder_bias,
        })
    }

    pub fn mask_shapes(&self, batch: usize) -> MaskShapes {
        MaskShapes {
            batch,
            vocab: self.cfg.vocab,
            embed: self.cfg.embed,
            hidden: self.stack.hidden_sizes(),
            latent: self.stack.latent_size(),
        }
    }

    pub fn zero_state(&self, batch: usize) -> Vec<LayerTensors> {
        self.stack.zero_state(batch)
    }

    /// Runs one window. `inputs[b][t]` and `targets[b][t]` index batch row
    /// `b` at step `t`. Returns the summed per-step mean cross-entropy and the
    /// final states; dropout masks, if given, are reused at every step.
    pub fn unroll(
        &self,
        g: &mut Graph<'_>,
        inputs: &[Vec<usize>],
        targets: &[Vec<usize>],
        states: &[LayerTensors],
        masks: Option<&WindowMasks>,
    ) -> Result<(Var, Vec<LayerState>)> {
        let batch = inputs.len();
        let len = inputs.first().map_or(0, |r| r.len());
        if batch == 0 || len == 0 {
            return Err(Error::EmptySequence);
        }
        if targets.len() != batch || inputs.iter().chain(targets).any(|r| r.len() != len) {
            return Err(Error::extent("unroll", "inputs and targets must be rectangular and aligned"));
        }
        let mut state = RecurrentStack::load_state(g, states);
        if state.iter().any(|s| g.value(s.h).rows() != batch) {
            return Err(Error::extent("unroll", "state batch does not match the window"));
        }

        let emb = g.param(self.embedding);
        let (dec_w, dec_b) = (g.param(self.decoder.unwrap_or(self.embedding)), g.param(self.decoder_bias));
        let step_masks = masks.map(|m| m.to_step_masks(g)).unwrap_or_default();
        let emb_mask = masks.and_then(|m| m.embedding.clone()).map(|t| g.input(t));

        let mut total: Option<Var> = None;
        for t in 0..len {
            let tokens: Vec<usize> = inputs.iter().map(|r| r[t]).collect();
            let mut x = g.gather(emb, &tokens)?;
            if let Some(word) = masks.and_then(|m| m.word.as_ref()) {
                let mut scale = Tensor::zeros(&[batch, self.cfg.embed]);
                for (b, &tok) in tokens.iter().enumerate() {
                    let w = word.data()[tok];
                    scale.data_mut()[b * self.cfg.embed..(b + 1) * self.cfg.embed].fill(w);
                }
                let s = g.input(scale);
                x = g.mul(x, s)?;
            }
            if let Some(m) = emb_mask {
                x = g.mul(x, m)?;
            }
            let (out, next) = self.stack.step(g, x, &state, &step_masks)?;
            state = next;
            let logits = g.matmul_t(out, dec_w)?;
            let logits = g.add_row(logits, dec_b)?;
            let tgt: Vec<usize> = targets.iter().map(|r| r[t]).collect();
            let loss = g.softmax_xent(logits, &tgt)?;
            total = Some(match total {
                Some(acc) => g.add(acc, loss)?,
                None => loss,
            });
        }
        Ok((total.expect("window is nonempty"), state))
    }

    /// Mean per-token cross-entropy over `tokens` laid out as `batch`
    /// contiguous streams, evaluated without dropout in windows of `bptt`.
    pub fn evaluate(&self, store: &ParamStore, tokens: &[usize], batch: usize, bptt: usize) -> Result<f64> {
        let stream_len = tokens.len() / batch;
        if stream_len < 2 {
            return Err(Error::CorpusTooSmall {
                len: tokens.len(),
                needed: 2 * batch,
            });
        }
        let streams: Vec<&[usize]> = (0..batch).map(|b| &tokens[b * stream_len..(b + 1) * stream_len]).collect();
        let mut state = self.zero_state(batch);
        let (mut sum, mut count) = (0.0, 0usize);
        let mut pos = 0;
        while pos + 1 < stream_len {
            let len = bptt.min(stream_len - 1 - pos);
            let inputs: Vec<Vec<usize>> = streams.iter().map(|s| s[pos..pos + len].to_vec()).collect();
            let targets: Vec<Vec<usize>> = streams.iter().map(|s| s[pos + 1..pos + len + 1].to_vec()).collect();
            let mut g = Graph::new(store);
            let (loss, st) = self.unroll(&mut g, &inputs, &targets, &state, None)?;
            sum += g.value(loss).item() * batch as f64;
            count += len * batch;
            state = RecurrentStack::detach_state(&g, &st);
            pos += len;
        }
        Ok(sum / count as f64)
    }
}

impl WindowMasks {
    fn to_step_masks(&self, g: &mut Graph<'_>) -> StepMasks {
        let mut hidden: Vec<Option<Var>> = self.hidden.iter().map(|m| m.clone().map(|t| g.input(t))).collect();
        if let Some(last) = hidden.last_mut() {
            *last = self.output.clone().map(|t| g.input(t));
        }
        StepMasks {
            latent: self.latent.iter().map(|m| m.clone().map(|t| g.input(t))).collect(),
            hidden,
        }
    }
}
