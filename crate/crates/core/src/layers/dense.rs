use crate::autodiff::{Activation, Graph, Init, ParamId, ParamStore, Var};
use crate::error::Result;
use crate::rng::Rng;

/// Static affine layer `φ(x Wᵀ + b)`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub activation: Activation,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let weight = store.add(format!("{name}.W"), &[output, input], Init::SemiOrthogonal, rng);
        let bias = Some(store.add(format!("{name}.b"), &[output], Init::Zeros, rng));
        Dense {
            weight,
            bias,
            activation,
            input,
            output,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = None;
        self
    }

    pub fn pre_activation(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let mut a = g.matmul_t(x, w)?;
        if let Some(b) = self.bias {
            let b = g.param(b);
            a = g.add_row(a, b)?;
        }
        Ok(a)
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let a = self.pre_activation(g, x)?;
        Ok(g.activation(self.activation, a))
    }

    pub fn param_count(&self) -> usize {
        self.input * self.output + if self.bias.is_some() { self.output } else { 0 }
    }
}

/// A stack of [`Dense`] layers; the last one uses `output_activation`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n {
                    output_activation
                } else {
                    hidden_activation
                };
                Dense::new(store, &format!("{name}.{i}"), sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        self.layers.iter().try_fold(x, |h, l| l.forward(g, h))
    }
}
