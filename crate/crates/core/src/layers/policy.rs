//! Policy networks: the small models that map an input to the latent from
//! which adaptation diagonals are projected.

use crate::autodiff::{Activation, Graph, Init, ParamId, ParamStore, Var};
use crate::error::Result;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    /// `z = A x + a`
    Linear,
    /// `z = (A x + a) ⊙ σ(B x + b)`
    Glu,
    /// `z = relu(A x + a)`
    ReluMlp,
}

#[derive(Clone, Copy, Debug)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub latent: usize,
    pub bias: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kind: PolicyKind::Glu,
            latent: 4,
            bias: true,
        }
    }
}

#[derive(Clone, Debug)]
struct Affine {
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Affine {
    fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, bias: bool, rng: &mut Rng) -> Self {
        Affine {
            weight: store.add(format!("{name}.W"), &[output, input], Init::UniformFanIn, rng),
            bias: bias.then(|| store.add(format!("{name}.b"), &[output], Init::Zeros, rng)),
        }
    }

    fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let y = g.matmul_t(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PolicyNet {
    pub kind: PolicyKind,
    pub input: usize,
    pub latent: usize,
    main: Affine,
    gate: Option<Affine>,
}

impl PolicyNet {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, cfg: PolicyConfig, rng: &mut Rng) -> Self {
        let main = Affine::new(store, &format!("{name}.main"), input, cfg.latent, cfg.bias, rng);
        let gate = (cfg.kind == PolicyKind::Glu)
            .then(|| Affine::new(store, &format!("{name}.gate"), input, cfg.latent, cfg.bias, rng));
        PolicyNet {
            kind: cfg.kind,
            input,
            latent: cfg.latent,
            main,
            gate,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let a = self.main.forward(g, x)?;
        match self.kind {
            PolicyKind::Linear => Ok(a),
            PolicyKind::ReluMlp => Ok(g.relu(a)),
            PolicyKind::Glu => {
                let gate = self.gate.as_ref().expect("glu policy has a gate branch");
                let b = gate.forward(g, x)?;
                let s = g.activation(Activation::Sigmoid, b);
                g.mul(a, s)
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let branch = self.input * self.latent + if self.main.bias.is_some() { self.latent } else { 0 };
        if self.gate.is_some() {
            2 * branch
        } else {
            branch
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{autodiff::sigmoid, rng, Tensor};

    #[test]
    fn glu_wiring() {
        let mut rng = rng::seeded(2);
        let mut store = ParamStore::new();
        let cfg = PolicyConfig {
            kind: PolicyKind::Glu,
            latent: 3,
            bias: true,
        };
        let net = PolicyNet::new(&mut store, "p", 2, cfg, &mut rng);
        for id in store.ids().collect::<Vec<_>>() {
            let shape = store.value(id).shape().to_vec();
            store.set(id, Tensor::randn(&shape, &mut rng)).unwrap();
        }
        let x = Tensor::matrix(&[[0.3, -1.2]]);
        let mut g = Graph::new(&store);
        let xv = g.input(x.clone());
        let z = net.forward(&mut g, xv).unwrap();

        let get = |n: &str| store.value(store.find(n).unwrap()).clone();
        let (a, a_b, b, b_b) = (get("p.main.W"), get("p.main.b"), get("p.gate.W"), get("p.gate.b"));
        for j in 0..3 {
            let lin: f64 = (0..2).map(|i| a.get(j, i) * x.get(0, i)).sum::<f64>() + a_b.data()[j];
            let gate: f64 = (0..2).map(|i| b.get(j, i) * x.get(0, i)).sum::<f64>() + b_b.data()[j];
            assert!((g.value(z).get(0, j) - lin * sigmoid(gate)).abs() < 1e-14);
        }
        assert_eq!(net.param_count(), 2 * (2 * 3 + 3));
    }
}
