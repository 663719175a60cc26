//! Building models from a [`ModelSpec`].

use adapt::layers::{
    activation_effect, emit_adaptation_heatmap, fmt_real, AdaptiveConfig, AdaptiveKind, AdaptiveLinear, Dense,
    PolicyConfig,
};
use adapt::recurrent::{AdaptationPolicy, AdaptiveSpec, LanguageModel, LmConfig, PolicyModel, Summary};
use adapt::rng::Rng;
use adapt::{Activation, Graph, ParamStore, Tensor, Var};

use crate::config::{Adaptation, AdaptationModel, Architecture, ModelSpec};
use crate::error::{ExperimentError, Result};

#[derive(Clone, Debug)]
pub enum FfLayer {
    Dense(Dense),
    Adaptive(AdaptiveLinear),
}

/// Feed-forward network whose leading layers may be adaptive. The last
/// layer is linear.
#[derive(Clone, Debug)]
pub struct FfNet {
    pub layers: Vec<FfLayer>,
}

fn adaptive_kind(spec: &ModelSpec) -> AdaptiveKind {
    match spec.adaptation {
        Adaptation::Input => AdaptiveKind::Input,
        Adaptation::Output => AdaptiveKind::Output,
        Adaptation::Io => AdaptiveKind::Io,
        Adaptation::Sva => AdaptiveKind::Sva { rank: spec.rank },
        Adaptation::General => AdaptiveKind::General {
            order: spec.order,
            inner: spec.inner,
        },
    }
}

impl FfNet {
    pub fn new(store: &mut ParamStore, spec: &ModelSpec, input: usize, output: usize, rng: &mut Rng) -> Result<Self> {
        if spec.is_recurrent() {
            return Err(ExperimentError::Invalid(format!("{} is not a feed-forward architecture", spec.architecture)));
        }
        let sizes: Vec<usize> =
            std::iter::once(input).chain(spec.hidden.iter().copied()).chain(std::iter::once(output)).collect();
        let n = sizes.len() - 1;
        let adaptive = if spec.architecture == Architecture::AdaptiveFf {
            spec.adaptive_layers
        } else {
            0
        };
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let act = if i + 1 == n {
                Activation::Identity
            } else {
                spec.activation.to_core()
            };
            let name = format!("ff.{i}");
            layers.push(if i < adaptive {
                let cfg = AdaptiveConfig {
                    activation: act,
                    policy: PolicyConfig {
                        kind: spec.policy.to_core(),
                        latent: spec.latent,
                        bias: true,
                    },
                    ..AdaptiveConfig::new(adaptive_kind(spec), sizes[i], sizes[i + 1])
                };
                FfLayer::Adaptive(AdaptiveLinear::new(store, &name, &cfg, rng)?)
            } else {
                FfLayer::Dense(Dense::new(store, &name, sizes[i], sizes[i + 1], act, rng))
            });
        }
        Ok(FfNet { layers })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> adapt::Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                FfLayer::Dense(d) => d.forward(g, h)?,
                FfLayer::Adaptive(a) => a.forward(g, h)?,
            };
        }
        Ok(h)
    }

    /// Network outputs for a batch, off the tape's gradient path.
    pub fn predict(&self, store: &ParamStore, x: &Tensor) -> adapt::Result<Tensor> {
        let mut g = Graph::new(store);
        let x = g.input(x.clone());
        let y = self.forward(&mut g, x)?;
        Ok(g.value(y).clone())
    }

    /// Per-input view of the first layer: the adaptation it applies if it is
    /// adaptive, else the activation effect `g(a)` of its pre-activation.
    pub fn heatmap(&self, store: &ParamStore, inputs: &Tensor) -> adapt::Result<String> {
        match &self.layers[0] {
            FfLayer::Adaptive(a) => emit_adaptation_heatmap(a, store, inputs),
            FfLayer::Dense(d) => {
                let mut g = Graph::new(store);
                let x = g.input(inputs.clone());
                let a = d.pre_activation(&mut g, x)?;
                let effect = activation_effect(d.activation, g.value(a));
                let header: Vec<String> =
                    std::iter::once("sample".to_string()).chain((0..effect.cols()).map(|i| format!("g_{i}"))).collect();
                Ok(table(&header, &effect))
            }
        }
    }
}

/// CSV with a leading `sample` column, one row per row of `values`.
pub(crate) fn table(header: &[String], values: &Tensor) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..values.rows() {
        out.push_str(&r.to_string());
        for v in values.row(r) {
            out.push(',');
            out.push_str(&fmt_real(*v));
        }
        out.push('\n');
    }
    out
}

pub fn lm_config(spec: &ModelSpec, vocab: usize) -> Result<LmConfig> {
    let top = *spec
        .hidden
        .last()
        .ok_or_else(|| ExperimentError::Invalid("recurrent models need at least one hidden layer".into()))?;
    let adaptive = match spec.architecture {
        Architecture::Lstm => None,
        Architecture::Alstm => Some(AdaptiveSpec {
            latent: spec.latent,
            policy: match spec.adaptation {
                Adaptation::Output => AdaptationPolicy::Output,
                Adaptation::Io => AdaptationPolicy::Io,
                other => {
                    return Err(ExperimentError::Invalid(format!("alstm does not support {other} adaptation")));
                }
            },
            model: match spec.adaptation_model {
                AdaptationModel::FeedForward => PolicyModel::Static,
                AdaptationModel::Lstm | AdaptationModel::LstmRhn => PolicyModel::Recurrent,
            },
            tie_inputs: spec.tie_inputs,
            summary: if spec.adaptation_model == AdaptationModel::LstmRhn {
                Summary::Stacked
            } else {
                Summary::Local
            },
        }),
        other => {
            return Err(ExperimentError::Invalid(format!("{other} is not a recurrent architecture")));
        }
    };
    Ok(LmConfig {
        vocab,
        embed: spec.embed.unwrap_or(top),
        hidden: spec.hidden.clone(),
        adaptive,
        tie_embeddings: spec.tie_embeddings,
    })
}

pub fn build_lm(store: &mut ParamStore, spec: &ModelSpec, vocab: usize, rng: &mut Rng) -> Result<LanguageModel> {
    Ok(LanguageModel::new(store, lm_config(spec, vocab)?, rng)?)
}

/// Parameter count of the language model `spec` would build, without
/// allocating it.
pub fn lm_param_count(spec: &ModelSpec, vocab: usize) -> Result<usize> {
    let cfg = lm_config(spec, vocab)?;
    let top = *cfg.hidden.last().expect("checked by lm_config");
    let mut n = vocab * cfg.embed + vocab;
    if !cfg.tie_embeddings {
        n += vocab * top;
    }
    let mut input = cfg.embed;
    for &h in &cfg.hidden {
        n += 4 * h * (input + h + 1);
        if let Some(a) = &cfg.adaptive {
            let k = a.latent;
            let summary = input + h + if a.summary == Summary::Stacked { k } else { 0 };
            n += match a.model {
                PolicyModel::Static => k * summary + k,
                PolicyModel::Recurrent => 4 * k * (summary + k + 1),
            };
            n += 3 * 4 * h * k;
            if a.policy == AdaptationPolicy::Io {
                let tied = (h + input) * k;
                n += if a.tie_inputs { tied } else { 4 * tied };
            }
        }
        input = h;
    }
    Ok(n)
}

/// Hidden sizes for `spec` whose parameter count is closest to `target`.
/// All layers share one size except the top one, which may differ by up to
/// a fifth to refine the match. Returns the sizes and their count.
pub fn match_hidden(spec: &ModelSpec, vocab: usize, target: usize) -> Result<(Vec<usize>, usize)> {
    let depth = spec.hidden.len().max(1);
    let count = |h: usize, top: usize| -> Result<usize> {
        let mut s = spec.clone();
        s.hidden = vec![h; depth];
        s.hidden[depth - 1] = top;
        lm_param_count(&s, vocab)
    };
    // Sizes beyond the point where the uniform stack overshoots twice the
    // target cannot be closest.
    let mut limit = 1;
    while count(limit, limit)? < 2 * target && limit < 1 << 16 {
        limit *= 2;
    }
    let mut best: Option<(f64, usize, usize, usize, usize)> = None;
    for h in 1..=limit {
        let spread = h / 5 + 1;
        for top in h.saturating_sub(spread).max(1)..=h + spread {
            if depth == 1 && top != h {
                continue;
            }
            let n = count(h, top)?;
            let gap = (n as f64 - target as f64).abs() / target as f64;
            let key = (gap, h.abs_diff(top), h, top, n);
            if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                best = Some(key);
            }
        }
    }
    let (_, _, h, top, n) = best.expect("at least one candidate");
    let mut sizes = vec![h; depth];
    sizes[depth - 1] = top;
    Ok((sizes, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use adapt::rng;

    #[test]
    fn analytic_count_matches_built_model() {
        let mut specs = vec![ModelSpec::new(Architecture::Lstm, vec![7, 5])];
        for adaptation in [Adaptation::Output, Adaptation::Io] {
            for model in AdaptationModel::ALL {
                for tie in [true, false] {
                    let mut s = ModelSpec::new(Architecture::Alstm, vec![6, 4]);
                    s.adaptation = adaptation;
                    s.adaptation_model = *model;
                    s.tie_inputs = tie;
                    s.latent = 3;
                    s.tie_embeddings = tie;
                    specs.push(s);
                }
            }
        }
        for s in specs {
            let mut store = ParamStore::new();
            build_lm(&mut store, &s, 11, &mut rng::seeded(0)).unwrap();
            assert_eq!(lm_param_count(&s, 11).unwrap(), store.count(), "{}", s.label());
        }
    }

    #[test]
    fn matching_lands_within_two_percent() {
        let lstm = ModelSpec::new(Architecture::Lstm, vec![40, 40]);
        let target = lm_param_count(&lstm, 60).unwrap();
        let (sizes, n) = match_hidden(&lstm, 60, target).unwrap();
        assert_eq!((sizes, n), (vec![40, 40], target));
        let mut alstm = ModelSpec::new(Architecture::Alstm, vec![40, 40]);
        alstm.latent = 8;
        let (_, n) = match_hidden(&alstm, 60, target).unwrap();
        assert!((n as f64 / target as f64 - 1.0).abs() < 0.02);
    }
}
