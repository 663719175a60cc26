use crate::autodiff::{Graph, Init, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Gate order used for every fused `[4h × ·]` matrix.
pub const GATES: [&str; 4] = ["i", "f", "o", "z"];

/// Standard LSTM cell. The four gate transforms are stored fused:
/// rows `s·h .. (s+1)·h` of `w`, `v` and `b` belong to gate `GATES[s]`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    pub w: ParamId,
    pub v: ParamId,
    pub b: ParamId,
}

/// Pre-activations `u` of shape `[batch × 4h]` for all gates.
pub(crate) struct GateInputs(pub Var);

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        LstmCell {
            input,
            hidden,
            w: store.add(format!("{name}.W"), &[4 * hidden, input], Init::SemiOrthogonal, rng),
            v: store.add(format!("{name}.V"), &[4 * hidden, hidden], Init::SemiOrthogonal, rng),
            b: store.add(format!("{name}.b"), &[4 * hidden], Init::Zeros, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden * (self.input + self.hidden + 1)
    }

    pub(crate) fn check(&self, g: &Graph<'_>, x: Var, h: Var, c: Var) -> Result<()> {
        let (xc, hc, cc) = (g.value(x).cols(), g.value(h).cols(), g.value(c).cols());
        if xc != self.input || hc != self.hidden || cc != self.hidden {
            return Err(Error::extent(
                "lstm_step",
                format!("x/h/c extents {xc}/{hc}/{cc}, cell expects {}/{}/{}", self.input, self.hidden, self.hidden),
            ));
        }
        Ok(())
    }

    /// `c' = σ(u^f) ⊙ c + σ(u^i) ⊙ τ(u^z)`, `h' = σ(u^o) ⊙ τ(c')`.
    pub(crate) fn update(&self, g: &mut Graph<'_>, u: GateInputs, c: Var) -> Result<(Var, Var)> {
        let h = self.hidden;
        let parts = g.split(u.0, 1, &[h, h, h, h])?;
        let (i, f, o, z) = (parts[0], parts[1], parts[2], parts[3]);
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let o = g.sigmoid(o);
        let z = g.tanh(z);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, z)?;
        let c_new = g.add(keep, write)?;
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc)?;
        Ok((h_new, c_new))
    }

    /// One step on batched rows `x: [b × in]`, `h, c: [b × hidden]`.
    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        self.check(g, x, h, c)?;
        let w = g.param(self.w);
        let v = g.param(self.v);
        let b = g.param(self.b);
        let wx = g.matmul_t(x, w)?;
        let vh = g.matmul_t(h, v)?;
        let u = g.add(wx, vh)?;
        let u = g.add_row(u, b)?;
        self.update(g, GateInputs(u), c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{rng, Tensor};

    fn zero_cell(store: &mut ParamStore) -> LstmCell {
        let mut rng = rng::seeded(0);
        let cell = LstmCell::new(store, "lstm", 2, 3, &mut rng);
        for id in [cell.w, cell.v, cell.b] {
            let s = store.value(id).shape().to_vec();
            store.set(id, Tensor::zeros(&s)).unwrap();
        }
        cell
    }

    #[test]
    fn zero_weights_halve_the_cell() {
        let mut store = ParamStore::new();
        let cell = zero_cell(&mut store);
        let c0 = Tensor::matrix(&[[0.4, -2.0, 1.0]]);
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::matrix(&[[1.0, -1.0]]));
        let h = g.input(Tensor::matrix(&[[0.3, 0.3, 0.3]]));
        let c = g.input(c0.clone());
        let (h1, c1) = cell.step(&mut g, x, h, c).unwrap();
        for j in 0..3 {
            let want_c = 0.5 * c0.data()[j];
            assert!((g.value(c1).data()[j] - want_c).abs() < 1e-15);
            assert!((g.value(h1).data()[j] - 0.5 * want_c.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_gates_hold_memory() {
        let mut store = ParamStore::new();
        let cell = zero_cell(&mut store);
        let mut b = vec![0.0; 12];
        for j in 0..3 {
            b[j] = -50.0; // input gate closed
            b[3 + j] = 50.0; // forget gate open
        }
        store.set(cell.b, Tensor::vector(&b)).unwrap();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::matrix(&[[1.0, -1.0]]));
        let h = g.input(Tensor::matrix(&[[0.3, 0.3, 0.3]]));
        let c0 = Tensor::matrix(&[[0.4, -2.0, 1.0]]);
        let c = g.input(c0.clone());
        let (_, c1) = cell.step(&mut g, x, h, c).unwrap();
        assert!(g.value(c1).max_abs_diff(&c0) < 1e-12);
    }

    #[test]
    fn extent_mismatch() {
        let mut store = ParamStore::new();
        let cell = zero_cell(&mut store);
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::zeros(&[1, 3]));
        let h = g.input(Tensor::zeros(&[1, 3]));
        assert!(cell.step(&mut g, x, h, h).is_err());
    }
}
