//! Variational (locked) dropout: one mask per site per truncation window.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::recurrent::MaskShapes;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Drop probabilities for the five sites of a recurrent language model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutRates {
    /// Whole word vectors (rows of the embedding table).
    pub word: f64,
    pub embedding: f64,
    pub latent: f64,
    /// Outputs of all but the last recurrent layer.
    pub hidden: f64,
    /// Output of the last recurrent layer.
    pub output: f64,
}

impl Default for DropoutRates {
    fn default() -> Self {
        DropoutRates {
            word: 0.16,
            embedding: 0.6,
            latent: 0.1,
            hidden: 0.25,
            output: 0.6,
        }
    }
}

impl DropoutRates {
    pub const NONE: DropoutRates = DropoutRates {
        word: 0.0,
        embedding: 0.0,
        latent: 0.0,
        hidden: 0.0,
        output: 0.0,
    };

    pub fn as_array(&self) -> [f64; 5] {
        [self.word, self.embedding, self.latent, self.hidden, self.output]
    }

    pub fn from_array(r: [f64; 5]) -> Self {
        DropoutRates {
            word: r[0],
            embedding: r[1],
            latent: r[2],
            hidden: r[3],
            output: r[4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.as_array() {
            check_rate(p)?;
        }
        Ok(())
    }
}

/// Masks for one window; `None` means the site is not dropped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WindowMasks {
    /// `[vocab]`, scales every occurrence of a token.
    pub word: Option<Tensor>,
    /// `[batch × embed]`
    pub embedding: Option<Tensor>,
    /// Per layer, `[batch × latent]`.
    pub latent: Vec<Option<Tensor>>,
    /// Per layer, `[batch × hidden_l]`. The last entry is unused; see `output`.
    pub hidden: Vec<Option<Tensor>>,
    /// `[batch × hidden_top]`
    pub output: Option<Tensor>,
}

fn check_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidRate(p));
    }
    Ok(())
}

/// Inverted-dropout mask with entries in `{0, 1/(1-p)}`.
pub fn bernoulli_mask(shape: &[usize], p: f64, rng: &mut Rng) -> Result<Tensor> {
    check_rate(p)?;
    let mut t = Tensor::ones(shape);
    if p == 0.0 {
        return Ok(t);
    }
    let keep = 1.0 / (1.0 - p);
    for v in t.data_mut() {
        *v = if rng.random::<f64>() < p { 0.0 } else { keep };
    }
    Ok(t)
}

/// Samples fresh masks for one truncation window.
pub fn sample_masks(rates: &DropoutRates, shapes: &MaskShapes, rng: &mut Rng) -> Result<WindowMasks> {
    rates.validate()?;
    let mut site = |shape: &[usize], p: f64| -> Result<Option<Tensor>> {
        if p == 0.0 {
            Ok(None)
        } else {
            bernoulli_mask(shape, p, rng).map(Some)
        }
    };
    let b = shapes.batch;
    let word = site(&[shapes.vocab], rates.word)?;
    let embedding = site(&[b, shapes.embed], rates.embedding)?;
    let mut latent = Vec::with_capacity(shapes.hidden.len());
    let mut hidden = Vec::with_capacity(shapes.hidden.len());
    let top = shapes.hidden.len() - 1;
    for (l, &h) in shapes.hidden.iter().enumerate() {
        latent.push(match shapes.latent {
            Some(k) => site(&[b, k], rates.latent)?,
            None => None,
        });
        hidden.push(if l < top { site(&[b, h], rates.hidden)? } else { None });
    }
    let output = site(&[b, shapes.hidden[top]], rates.output)?;
    Ok(WindowMasks {
        word,
        embedding,
        latent,
        hidden,
        output,
    })
}
