//! Batching a token stream into truncated-BPTT windows of variable length.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct BpttConfig {
    pub batch: usize,
    pub mean_len: usize,
    /// Standard deviation of the window length.
    pub sigma: f64,
    /// Probability of centring on `mean_len` rather than `mean_len / 2`.
    pub p_full: f64,
    pub min_len: usize,
    /// Windows are capped at `mean_len + max_extra`.
    pub max_extra: usize,
}

impl BpttConfig {
    pub fn new(batch: usize, mean_len: usize) -> Self {
        BpttConfig {
            batch,
            mean_len,
            sigma: 5.0,
            p_full: 0.95,
            min_len: 5,
            max_extra: 20,
        }
    }

    /// Every window has exactly `mean_len` steps.
    pub fn fixed(batch: usize, mean_len: usize) -> Self {
        BpttConfig {
            sigma: 0.0,
            p_full: 1.0,
            ..Self::new(batch, mean_len)
        }
    }

    pub fn sample_len(&self, r: &mut Rng) -> usize {
        let base = if self.p_full >= 1.0 || r.random::<f64>() < self.p_full {
            self.mean_len as f64
        } else {
            self.mean_len as f64 / 2.0
        };
        let drawn = if self.sigma > 0.0 {
            (base + self.sigma * rng::normal(r)).round()
        } else {
            base.round()
        };
        let cap = self.mean_len + self.max_extra;
        (drawn.max(self.min_len as f64) as usize).clamp(self.min_len, cap.max(self.min_len))
    }
}

/// One window: `inputs[b][t]`, `targets[b][t] = inputs[b][t + 1]` in stream terms.
#[derive(Clone, Debug, PartialEq)]
pub struct BpttWindow {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
    /// Whether the state from the previous window should be carried in.
    pub carry: bool,
}

impl BpttWindow {
    pub fn len(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits `corpus` into `cfg.batch` contiguous streams and tiles them with
/// windows. A window whose drawn length would run past a stream end is
/// dropped along with the remaining tokens.
pub fn batch_bptt(corpus: &[usize], cfg: &BpttConfig, r: &mut Rng) -> Result<Vec<BpttWindow>> {
    let needed = cfg.batch * (cfg.mean_len + 1);
    if cfg.batch == 0 || cfg.mean_len == 0 || corpus.len() < needed {
        return Err(Error::CorpusTooSmall {
            len: corpus.len(),
            needed: needed.max(1),
        });
    }
    let stream_len = corpus.len() / cfg.batch;
    let streams: Vec<&[usize]> = corpus.chunks_exact(stream_len).take(cfg.batch).collect();
    let mut windows = Vec::new();
    let mut pos = 0;
    loop {
        let len = cfg.sample_len(r);
        if pos + len + 1 > stream_len {
            break;
        }
        windows.push(BpttWindow {
            inputs: streams.iter().map(|s| s[pos..pos + len].to_vec()).collect(),
            targets: streams.iter().map(|s| s[pos + 1..pos + len + 1].to_vec()).collect(),
            carry: pos > 0,
        });
        pos += len;
    }
    Ok(windows)
}
