//! The adaptive LSTM cell.
//!
//! Each gate transform is IO-adapted from a latent `z_t`:
//!
//! ```text
//! u^s = D^(s,4) W^s D^(s,3) x + D^(s,2) V^s D^(s,1) h + D^(s,0) b^s
//! D^(s,j) = diag(τ(U^(s,j) z_t))
//! ```
//!
//! `z_t` comes from a static (`relu(W v + b)`) or recurrent (LSTM with hidden
//! state `z`) policy fed with a summary `v_t`. With tied inputs the scalings
//! `D^(s,3)` and `D^(s,1)` are shared across gates and all four gates run as
//! one fused multiply. Under output adaptation only `D^(s,4)`, `D^(s,2)` and
//! `D^(s,0)` are used.

use crate::autodiff::{Activation, Graph, Init, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::recurrent::lstm::{GateInputs, LstmCell};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdaptationPolicy {
    Output,
    Io,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyModel {
    /// `z_t = relu(W v_t + b)`
    Static,
    /// `z_t = m(v_t, z_{t-1})`, `m` an LSTM whose hidden state is `z`.
    Recurrent,
}

#[derive(Clone, Debug)]
pub struct AlstmConfig {
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
    pub policy: AdaptationPolicy,
    pub model: PolicyModel,
    pub tie_inputs: bool,
    /// Extent of the policy summary `v_t`; `input + hidden` for a lone cell.
    pub summary: usize,
}

impl AlstmConfig {
    pub fn new(input: usize, hidden: usize) -> Self {
        AlstmConfig {
            input,
            hidden,
            latent: 100,
            policy: AdaptationPolicy::Io,
            model: PolicyModel::Recurrent,
            tie_inputs: true,
            summary: input + hidden,
        }
    }
}

#[derive(Clone, Debug)]
pub enum LatentModel {
    Static { w: ParamId, b: ParamId },
    Recurrent(LstmCell),
}

/// Projections `U^(s,j)` from the latent. Output-side projections are fused
/// across gates (`[4h × latent]`); input-side ones hold one entry when tied
/// and four when untied.
#[derive(Clone, Debug)]
pub struct AlstmProjections {
    pub bias: ParamId,
    pub hidden_out: ParamId,
    pub input_out: ParamId,
    pub hidden_in: Vec<ParamId>,
    pub input_in: Vec<ParamId>,
}

#[derive(Clone, Debug)]
pub struct AlstmCell {
    pub cfg: AlstmConfig,
    pub lstm: LstmCell,
    pub latent_model: LatentModel,
    pub proj: AlstmProjections,
    /// Replace every diagonal by ones (reduces the cell to its LSTM).
    pub identity_override: bool,
}

/// Latent state carried between steps. `c` is only used by the recurrent
/// policy.
#[derive(Clone, Copy, Debug)]
pub struct PolicyState {
    pub z: Var,
    pub c: Option<Var>,
}

/// Diagonals produced at one step, kept for inspection.
#[derive(Clone, Debug)]
pub struct StepDiagonals {
    pub bias: Var,
    pub hidden_out: Var,
    pub input_out: Var,
    pub hidden_in: Vec<Var>,
    pub input_in: Vec<Var>,
}

impl StepDiagonals {
    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![self.bias, self.hidden_out, self.input_out];
        v.extend(&self.hidden_in);
        v.extend(&self.input_in);
        v
    }
}

impl AlstmCell {
    pub fn new(store: &mut ParamStore, name: &str, cfg: AlstmConfig, rng: &mut Rng) -> Result<Self> {
        if cfg.latent == 0 || cfg.hidden == 0 || cfg.input == 0 {
            return Err(Error::extent("alstm", "sizes must be positive"));
        }
        let lstm = LstmCell::new(store, name, cfg.input, cfg.hidden, rng);
        let latent_model = match cfg.model {
            PolicyModel::Static => LatentModel::Static {
                w: store.add(format!("{name}.policy.W"), &[cfg.latent, cfg.summary], Init::SemiOrthogonal, rng),
                b: store.add(format!("{name}.policy.b"), &[cfg.latent], Init::Zeros, rng),
            },
            PolicyModel::Recurrent => {
                LatentModel::Recurrent(LstmCell::new(store, &format!("{name}.policy"), cfg.summary, cfg.latent, rng))
            }
        };
        let (h, k) = (cfg.hidden, cfg.latent);
        let mut u =
            |label: &str, rows: usize| store.add(format!("{name}.U.{label}"), &[rows, k], Init::UniformFanIn, rng);
        let bias = u("0", 4 * h);
        let hidden_out = u("2", 4 * h);
        let input_out = u("4", 4 * h);
        let (hidden_in, input_in) = match (cfg.policy, cfg.tie_inputs) {
            (AdaptationPolicy::Output, _) => (vec![], vec![]),
            (AdaptationPolicy::Io, true) => (vec![u("1", h)], vec![u("3", cfg.input)]),
            (AdaptationPolicy::Io, false) => {
                let gates = crate::recurrent::lstm::GATES;
                let hid = gates.iter().map(|s| u(&format!("{s}1"), h)).collect();
                let inp = gates.iter().map(|s| u(&format!("{s}3"), cfg.input)).collect();
                (hid, inp)
            }
        };
        Ok(AlstmCell {
            cfg,
            lstm,
            latent_model,
            proj: AlstmProjections {
                bias,
                hidden_out,
                input_out,
                hidden_in,
                input_in,
            },
            identity_override: false,
        })
    }

    pub fn param_count(&self, store: &ParamStore) -> usize {
        let p = &self.proj;
        let mut n = self.lstm.param_count();
        n += match &self.latent_model {
            LatentModel::Static { w, b } => store.value(*w).numel() + store.value(*b).numel(),
            LatentModel::Recurrent(cell) => cell.param_count(),
        };
        for id in [p.bias, p.hidden_out, p.input_out].iter().chain(&p.hidden_in).chain(&p.input_in) {
            n += store.value(*id).numel();
        }
        n
    }

    /// Zero policy state for a batch.
    pub fn zero_policy_state(&self, g: &mut Graph<'_>, batch: usize) -> PolicyState {
        let z = g.input(Tensor::zeros(&[batch, self.cfg.latent]));
        let c = matches!(self.latent_model, LatentModel::Recurrent(_))
            .then(|| g.input(Tensor::zeros(&[batch, self.cfg.latent])));
        PolicyState { z, c }
    }

    /// Computes `z_t` from the summary `v_t`.
    pub fn policy_latent(&self, g: &mut Graph<'_>, v: Var, prior: PolicyState) -> Result<PolicyState> {
        if g.value(v).cols() != self.cfg.summary {
            return Err(Error::extent(
                "policy_latent",
                format!("summary extent {} but policy expects {}", g.value(v).cols(), self.cfg.summary),
            ));
        }
        match &self.latent_model {
            LatentModel::Static { w, b } => {
                let w = g.param(*w);
                let b = g.param(*b);
                let a = g.matmul_t(v, w)?;
                let a = g.add_row(a, b)?;
                Ok(PolicyState {
                    z: g.relu(a),
                    c: prior.c,
                })
            }
            LatentModel::Recurrent(cell) => {
                let c = prior.c.ok_or_else(|| Error::extent("policy_latent", "recurrent policy needs a cell state"))?;
                let (z, c) = cell.step(g, v, prior.z, c)?;
                Ok(PolicyState { z, c: Some(c) })
            }
        }
    }

    fn diagonal(&self, g: &mut Graph<'_>, z: Var, u: ParamId) -> Result<Var> {
        if self.identity_override {
            let rows = g.value(z).rows();
            let ext = g.store().value(u).rows();
            return Ok(g.input(Tensor::ones(&[rows, ext])));
        }
        let u = g.param(u);
        let a = g.matmul_t(z, u)?;
        Ok(g.activation(Activation::Tanh, a))
    }

    /// One step with summary `v = [x; h]`.
    pub fn step(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        h: Var,
        c: Var,
        policy: PolicyState,
    ) -> Result<(Var, Var, PolicyState)> {
        let v = g.concat(&[x, h], 1)?;
        let (h, c, p, _) = self.step_with_summary(g, x, h, c, policy, v, None)?;
        Ok((h, c, p))
    }

    /// One step with an explicit policy summary `v` and an optional dropout
    /// mask on the latent. Returns the diagonals used.
    #[allow(clippy::too_many_arguments)]
    pub fn step_with_summary(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        h: Var,
        c: Var,
        policy: PolicyState,
        v: Var,
        latent_mask: Option<Var>,
    ) -> Result<(Var, Var, PolicyState, StepDiagonals)> {
        self.lstm.check(g, x, h, c)?;
        let policy = self.policy_latent(g, v, policy)?;
        let z = match latent_mask {
            Some(m) => g.mul(policy.z, m)?,
            None => policy.z,
        };

        let p = &self.proj;
        let d_bias = self.diagonal(g, z, p.bias)?;
        let d_hout = self.diagonal(g, z, p.hidden_out)?;
        let d_xout = self.diagonal(g, z, p.input_out)?;
        let d_hin = p.hidden_in.iter().map(|&u| self.diagonal(g, z, u)).collect::<Result<Vec<_>>>()?;
        let d_xin = p.input_in.iter().map(|&u| self.diagonal(g, z, u)).collect::<Result<Vec<_>>>()?;

        let w = g.param(self.lstm.w);
        let vv = g.param(self.lstm.v);
        let b = g.param(self.lstm.b);

        let (wx, vh) = if d_xin.len() <= 1 {
            // Fused path: at most one input-side scaling shared by all gates.
            let xs = match d_xin.first() {
                Some(&d) => g.mul(x, d)?,
                None => x,
            };
            let hs = match d_hin.first() {
                Some(&d) => g.mul(h, d)?,
                None => h,
            };
            (g.matmul_t(xs, w)?, g.matmul_t(hs, vv)?)
        } else {
            let hid = self.cfg.hidden;
            let mut wx = Vec::with_capacity(4);
            let mut vh = Vec::with_capacity(4);
            for s in 0..4 {
                let ws = g.narrow(w, 0, s * hid, hid)?;
                let vs = g.narrow(vv, 0, s * hid, hid)?;
                let xs = g.mul(x, d_xin[s])?;
                let hs = g.mul(h, d_hin[s])?;
                wx.push(g.matmul_t(xs, ws)?);
                vh.push(g.matmul_t(hs, vs)?);
            }
            (g.concat(&wx, 1)?, g.concat(&vh, 1)?)
        };
        let wx = g.mul(wx, d_xout)?;
        let vh = g.mul(vh, d_hout)?;
        let db = g.mul_row(d_bias, b)?;
        let u = g.add(wx, vh)?;
        let u = g.add(u, db)?;
        let (h_new, c_new) = self.lstm.update(g, GateInputs(u), c)?;
        let diags = StepDiagonals {
            bias: d_bias,
            hidden_out: d_hout,
            input_out: d_xout,
            hidden_in: d_hin,
            input_in: d_xin,
        };
        Ok((h_new, c_new, policy, diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn cell(store: &mut ParamStore, model: PolicyModel, tie: bool) -> AlstmCell {
        let mut rng = rng::seeded(9);
        let mut cfg = AlstmConfig::new(3, 4);
        cfg.latent = 5;
        cfg.model = model;
        cfg.tie_inputs = tie;
        AlstmCell::new(store, "a", cfg, &mut rng).unwrap()
    }

    #[test]
    fn static_policy_with_zero_weights_gives_zero_latent() {
        let mut store = ParamStore::new();
        let c = cell(&mut store, PolicyModel::Static, true);
        if let LatentModel::Static { w, b } = &c.latent_model {
            store.set(*w, Tensor::zeros(&[5, 7])).unwrap();
            store.set(*b, Tensor::zeros(&[5])).unwrap();
        }
        let mut g = Graph::new(&store);
        let v = g.input(Tensor::ones(&[2, 7]));
        let prior = c.zero_policy_state(&mut g, 2);
        let z = c.policy_latent(&mut g, v, prior).unwrap().z;
        assert_eq!(g.value(z).max_abs(), 0.0);
        let bad = g.input(Tensor::ones(&[2, 6]));
        assert!(c.policy_latent(&mut g, bad, prior).is_err());
    }

    #[test]
    fn recurrent_policy_with_zero_weights() {
        let mut store = ParamStore::new();
        let c = cell(&mut store, PolicyModel::Recurrent, true);
        let LatentModel::Recurrent(m) = &c.latent_model else {
            unreachable!()
        };
        for id in [m.w, m.v, m.b] {
            let s = store.value(id).shape().to_vec();
            store.set(id, Tensor::zeros(&s)).unwrap();
        }
        let mut g = Graph::new(&store);
        let v = g.input(Tensor::ones(&[1, 7]));
        let c_prev = Tensor::full(&[1, 5], 0.8);
        let prior = PolicyState {
            z: g.input(Tensor::zeros(&[1, 5])),
            c: Some(g.input(c_prev)),
        };
        let z = c.policy_latent(&mut g, v, prior).unwrap().z;
        let want = 0.5 * (0.5f64 * 0.8).tanh();
        for &zv in g.value(z).data() {
            assert!((zv - want).abs() < 1e-15);
        }
    }

    #[test]
    fn recurrent_policy_remembers_history() {
        let mut store = ParamStore::new();
        let c = cell(&mut store, PolicyModel::Recurrent, true);
        let mut rng = rng::seeded(1);
        let history_a = Tensor::randn(&[1, 7], &mut rng);
        let history_b = Tensor::randn(&[1, 7], &mut rng);
        let now = Tensor::randn(&[1, 7], &mut rng);
        let run = |history: &Tensor| {
            let mut g = Graph::new(&store);
            let p0 = c.zero_policy_state(&mut g, 1);
            let v0 = g.input(history.clone());
            let p1 = c.policy_latent(&mut g, v0, p0).unwrap();
            let v1 = g.input(now.clone());
            let p2 = c.policy_latent(&mut g, v1, p1).unwrap();
            g.value(p2.z).clone()
        };
        assert!(run(&history_a).max_abs_diff(&run(&history_b)) > 1e-6);
    }

    #[test]
    fn output_policy_has_no_input_side_projections() {
        let mut rng = rng::seeded(0);
        let mut store = ParamStore::new();
        let mut cfg = AlstmConfig::new(3, 4);
        cfg.policy = AdaptationPolicy::Output;
        let c = AlstmCell::new(&mut store, "o", cfg, &mut rng).unwrap();
        assert!(c.proj.hidden_in.is_empty() && c.proj.input_in.is_empty());
        assert_eq!(c.param_count(&store), store.count());
    }
}
