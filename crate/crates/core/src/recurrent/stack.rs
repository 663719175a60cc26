//! Multi-layer recurrent stacks.
//!
//! In an adaptive stack with the stacked summary, layer `l` feeds its policy
//!
//! ```text
//! v_t^(l) = [h_t^(l-1); h_{t-1}^(l); z_t^(l-1)],   h_t^(0) = x_t,  z_t^(0) = z_{t-1}^(L)
//! ```
//!
//! so the latent of the top layer at `t-1` conditions the bottom layer at `t`.

use crate::autodiff::{Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::recurrent::alstm::{AlstmCell, AlstmConfig, PolicyState};
use crate::recurrent::lstm::LstmCell;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// What each adaptive layer's policy sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Summary {
    /// `v = [h^(l-1)_t; h^(l)_{t-1}]`
    Local,
    /// `v = [h^(l-1)_t; h^(l)_{t-1}; z^(l-1)_t]`
    Stacked,
}

#[derive(Clone, Debug)]
pub enum RecurrentStack {
    Lstm(Vec<LstmCell>),
    Alstm { layers: Vec<AlstmCell>, summary: Summary },
}

/// Per-layer state on a graph.
#[derive(Clone, Copy, Debug)]
pub struct LayerState {
    pub h: Var,
    pub c: Var,
    pub policy: Option<PolicyState>,
}

/// Per-layer state detached from any graph, carried across truncation
/// windows.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTensors {
    pub h: Tensor,
    pub c: Tensor,
    pub z: Option<Tensor>,
    pub zc: Option<Tensor>,
}

/// Optional variational dropout masks used inside a step.
#[derive(Clone, Debug, Default)]
pub struct StepMasks {
    /// Per layer, applied to the latent before projection.
    pub latent: Vec<Option<Var>>,
    /// Per layer, applied to the layer output on its way to the next layer
    /// (the last layer's mask is the final-output mask).
    pub hidden: Vec<Option<Var>>,
}

/// Layer sizes and policy settings of a stack.
#[derive(Clone, Debug)]
pub struct StackSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    /// `None` builds a plain LSTM stack.
    pub adaptive: Option<AdaptiveSpec>,
}

#[derive(Clone, Debug)]
pub struct AdaptiveSpec {
    pub latent: usize,
    pub policy: crate::recurrent::alstm::AdaptationPolicy,
    pub model: crate::recurrent::alstm::PolicyModel,
    pub tie_inputs: bool,
    pub summary: Summary,
}

impl RecurrentStack {
    pub fn new(store: &mut ParamStore, name: &str, spec: &StackSpec, rng: &mut Rng) -> Result<Self> {
        if spec.hidden.is_empty() {
            return Err(Error::extent("stack", "need at least one layer"));
        }
        let inputs: Vec<usize> = std::iter::once(spec.input).chain(spec.hidden.iter().copied()).collect();
        match &spec.adaptive {
            None => Ok(RecurrentStack::Lstm(
                spec.hidden
                    .iter()
                    .enumerate()
                    .map(|(l, &h)| LstmCell::new(store, &format!("{name}.{l}"), inputs[l], h, rng))
                    .collect(),
            )),
            Some(a) => {
                let mut layers = Vec::with_capacity(spec.hidden.len());
                for (l, &h) in spec.hidden.iter().enumerate() {
                    let extra = if a.summary == Summary::Stacked { a.latent } else { 0 };
                    let cfg = AlstmConfig {
                        input: inputs[l],
                        hidden: h,
                        latent: a.latent,
                        policy: a.policy,
                        model: a.model,
                        tie_inputs: a.tie_inputs,
                        summary: inputs[l] + h + extra,
                    };
                    layers.push(AlstmCell::new(store, &format!("{name}.{l}"), cfg, rng)?);
                }
                Ok(RecurrentStack::Alstm {
                    layers,
                    summary: a.summary,
                })
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RecurrentStack::Lstm(l) => l.len(),
            RecurrentStack::Alstm { layers, .. } => layers.len(),
        }
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        match self {
            RecurrentStack::Lstm(l) => l.iter().map(|c| c.hidden).collect(),
            RecurrentStack::Alstm { layers, .. } => layers.iter().map(|c| c.cfg.hidden).collect(),
        }
    }

    pub fn latent_size(&self) -> Option<usize> {
        match self {
            RecurrentStack::Lstm(_) => None,
            RecurrentStack::Alstm { layers, .. } => Some(layers[0].cfg.latent),
        }
    }

    pub fn output_size(&self) -> usize {
        *self.hidden_sizes().last().unwrap()
    }

    pub fn zero_state(&self, batch: usize) -> Vec<LayerTensors> {
        let latent = self.latent_size();
        let recurrent_policy = |l: usize| match self {
            RecurrentStack::Alstm { layers, .. } => {
                matches!(layers[l].latent_model, crate::recurrent::alstm::LatentModel::Recurrent(_))
            }
            _ => false,
        };
        self.hidden_sizes()
            .iter()
            .enumerate()
            .map(|(l, &h)| LayerTensors {
                h: Tensor::zeros(&[batch, h]),
                c: Tensor::zeros(&[batch, h]),
                z: latent.map(|k| Tensor::zeros(&[batch, k])),
                zc: (recurrent_policy(l)).then(|| Tensor::zeros(&[batch, latent.unwrap()])),
            })
            .collect()
    }

    /// Places detached states on the graph as constants.
    pub fn load_state(g: &mut Graph<'_>, states: &[LayerTensors]) -> Vec<LayerState> {
        states
            .iter()
            .map(|s| LayerState {
                h: g.input(s.h.clone()),
                c: g.input(s.c.clone()),
                policy: s.z.as_ref().map(|z| PolicyState {
                    z: g.input(z.clone()),
                    c: s.zc.as_ref().map(|c| g.input(c.clone())),
                }),
            })
            .collect()
    }

    pub fn detach_state(g: &Graph<'_>, states: &[LayerState]) -> Vec<LayerTensors> {
        states
            .iter()
            .map(|s| LayerTensors {
                h: g.value(s.h).clone(),
                c: g.value(s.c).clone(),
                z: s.policy.map(|p| g.value(p.z).clone()),
                zc: s.policy.and_then(|p| p.c).map(|c| g.value(c).clone()),
            })
            .collect()
    }

    /// One time step through all layers. Returns the top output (after its
    /// hidden mask, if any) and the new states.
    pub fn step(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        prior: &[LayerState],
        masks: &StepMasks,
    ) -> Result<(Var, Vec<LayerState>)> {
        if prior.len() != self.depth() {
            return Err(Error::extent("stack_step", format!("{} states for {} layers", prior.len(), self.depth())));
        }
        let mut input = x;
        let mut next = Vec::with_capacity(prior.len());
        match self {
            RecurrentStack::Lstm(cells) => {
                for (l, cell) in cells.iter().enumerate() {
                    let (h, c) = cell.step(g, input, prior[l].h, prior[l].c)?;
                    next.push(LayerState { h, c, policy: None });
                    input = mask(g, h, masks.hidden.get(l).copied().flatten())?;
                }
            }
            RecurrentStack::Alstm { layers, summary } => {
                let top = prior.last().unwrap().policy.map(|p| p.z);
                let mut z_below = top;
                for (l, cell) in layers.iter().enumerate() {
                    let st = prior[l];
                    let policy =
                        st.policy.ok_or_else(|| Error::extent("stack_step", "adaptive layer without policy state"))?;
                    let v = match summary {
                        Summary::Local => g.concat(&[input, st.h], 1)?,
                        Summary::Stacked => {
                            let zb = z_below.expect("adaptive stack has latents");
                            g.concat(&[input, st.h, zb], 1)?
                        }
                    };
                    let latent_mask = masks.latent.get(l).copied().flatten();
                    let (h, c, p, _) = cell.step_with_summary(g, input, st.h, st.c, policy, v, latent_mask)?;
                    z_below = Some(p.z);
                    next.push(LayerState { h, c, policy: Some(p) });
                    input = mask(g, h, masks.hidden.get(l).copied().flatten())?;
                }
            }
        }
        Ok((input, next))
    }

    pub fn param_count(&self, store: &ParamStore) -> usize {
        match self {
            RecurrentStack::Lstm(cells) => cells.iter().map(|c| c.param_count()).sum(),
            RecurrentStack::Alstm { layers, .. } => layers.iter().map(|c| c.param_count(store)).sum(),
        }
    }

    /// Sets the identity override on every adaptive layer.
    pub fn set_identity_override(&mut self, on: bool) {
        if let RecurrentStack::Alstm { layers, .. } = self {
            for l in layers {
                l.identity_override = on;
            }
        }
    }
}

fn mask(g: &mut Graph<'_>, x: Var, m: Option<Var>) -> Result<Var> {
    match m {
        Some(m) => g.mul(x, m),
        None => Ok(x),
    }
}
