//! Adaptive feed-forward layers.
//!
//! A layer of order `q` computes
//!
//! ```text
//! y = φ(D⁽q⁾ W⁽q−1⁾ ⋯ W⁽¹⁾ D⁽¹⁾ x + D⁽⁰⁾ b),   D⁽ʲ⁾ = diag(π⁽ʲ⁾(x))
//! ```
//!
//! where every diagonal is projected from one latent `z = policy(x)`. The
//! named kinds are fixed chains of weights and diagonals:
//!
//! | kind   | chain (input side first) | diagonals      |
//! |--------|--------------------------|----------------|
//! | input  | `D¹ W`                   | `D⁰, D¹`       |
//! | output | `W D¹`                   | `D⁰, D¹`       |
//! | io     | `D¹ W D²`                | `D⁰, D¹, D²`   |
//! | sva    | `W¹ D W²`                | `D⁰, D`        |
//! | order q| `D¹ W¹ D² ⋯ W⁽q−1⁾ D⁽q⁾` | `D⁰ … D⁽q⁾`    |
//!
//! Batched inputs are rows, so `D W x` for one sample is `(x Wᵀ) ⊙ d` here.

use crate::autodiff::{Activation, Graph, Init, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::layers::policy::{PolicyConfig, PolicyNet};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdaptiveKind {
    Input,
    Output,
    Io,
    Sva {
        rank: usize,
    },
    /// Order `q ≥ 1`; inner extents between weights are all `inner`.
    General {
        order: usize,
        inner: usize,
    },
}

impl AdaptiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            AdaptiveKind::Input => "input",
            AdaptiveKind::Output => "output",
            AdaptiveKind::Io => "io",
            AdaptiveKind::Sva { .. } => "sva",
            AdaptiveKind::General { .. } => "general",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Weight(usize),
    Diag(usize),
}

/// How each diagonal is read off the latent: `squash(z Uᵀ + c)`.
#[derive(Clone, Copy, Debug)]
pub struct ProjectionConfig {
    pub bias: bool,
    pub squash: Activation,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            bias: true,
            squash: Activation::Identity,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub squash: Activation,
}

impl Projection {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        latent: usize,
        extent: usize,
        cfg: ProjectionConfig,
        rng: &mut Rng,
    ) -> Self {
        let weight = store.add(format!("{name}.U"), &[extent, latent], Init::UniformFanIn, rng);
        // Unsquashed diagonals start near one so the layer starts near its
        // static counterpart.
        let bias_init = if cfg.squash == Activation::Identity {
            Init::Ones
        } else {
            Init::Zeros
        };
        let bias = cfg.bias.then(|| store.add(format!("{name}.c"), &[extent], bias_init, rng));
        Projection {
            weight,
            bias,
            squash: cfg.squash,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, z: Var) -> Result<Var> {
        let u = g.param(self.weight);
        let mut d = g.matmul_t(z, u)?;
        if let Some(c) = self.bias {
            let c = g.param(c);
            d = g.add_row(d, c)?;
        }
        Ok(g.activation(self.squash, d))
    }
}

/// Source of the adaptation diagonals.
#[derive(Clone, Debug)]
pub enum Diagonals {
    Learned {
        policy: PolicyNet,
        projections: Vec<Projection>,
    },
    /// The same diagonal for every input; `Fixed` of ones is the identity
    /// policy.
    Fixed(Vec<Tensor>),
}

#[derive(Clone, Debug)]
pub struct AdaptiveConfig {
    pub kind: AdaptiveKind,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    pub bias: bool,
    pub policy: PolicyConfig,
    pub projection: ProjectionConfig,
}

impl AdaptiveConfig {
    pub fn new(kind: AdaptiveKind, input: usize, output: usize) -> Self {
        AdaptiveConfig {
            kind,
            input,
            output,
            activation: Activation::Identity,
            bias: true,
            policy: PolicyConfig::default(),
            projection: ProjectionConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdaptiveLinear {
    pub kind: AdaptiveKind,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    pub weights: Vec<ParamId>,
    pub bias: Option<ParamId>,
    pub diagonals: Diagonals,
    chain: Vec<Stage>,
    /// Extent of each diagonal block; block 0 scales the bias.
    blocks: Vec<usize>,
}

/// Chain, diagonal block extents and weight shapes (`[out, in]`).
type Layout = (Vec<Stage>, Vec<usize>, Vec<[usize; 2]>);

/// Chain layout and weight shapes for a kind.
fn layout(kind: &AdaptiveKind, n: usize, m: usize) -> Result<Layout> {
    use Stage::*;
    Ok(match kind {
        AdaptiveKind::Input => (vec![Diag(1), Weight(0)], vec![m, n], vec![[m, n]]),
        AdaptiveKind::Output => (vec![Weight(0), Diag(1)], vec![m, m], vec![[m, n]]),
        AdaptiveKind::Io => (vec![Diag(1), Weight(0), Diag(2)], vec![m, n, m], vec![[m, n]]),
        AdaptiveKind::Sva { rank } => {
            if *rank == 0 {
                return Err(Error::extent("sva", "rank must be positive"));
            }
            (vec![Weight(0), Diag(1), Weight(1)], vec![m, *rank], vec![[*rank, n], [m, *rank]])
        }
        AdaptiveKind::General { order, inner } => {
            let q = *order;
            if q == 0 {
                return Err(Error::extent("adaptive", "order must be positive"));
            }
            if q == 1 && n != m {
                return Err(Error::extent(
                    "adaptive",
                    format!("order 1 has no weight, so input {n} must equal output {m}"),
                ));
            }
            let mut chain = vec![Diag(1)];
            let mut blocks = vec![m, n];
            let mut shapes = Vec::new();
            let mut prev = n;
            for j in 1..q {
                let out = if j + 1 == q { m } else { *inner };
                shapes.push([out, prev]);
                chain.push(Weight(j - 1));
                chain.push(Diag(j + 1));
                blocks.push(out);
                prev = out;
            }
            (chain, blocks, shapes)
        }
    })
}

impl AdaptiveLinear {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &AdaptiveConfig, rng: &mut Rng) -> Result<Self> {
        let (chain, blocks, shapes) = layout(&cfg.kind, cfg.input, cfg.output)?;
        let weights = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| store.add(format!("{name}.W{}", i + 1), s, Init::SemiOrthogonal, rng))
            .collect();
        let bias = cfg.bias.then(|| store.add(format!("{name}.b"), &[cfg.output], Init::Zeros, rng));
        let policy = PolicyNet::new(store, &format!("{name}.policy"), cfg.input, cfg.policy, rng);
        let projections = blocks
            .iter()
            .enumerate()
            .map(|(j, &ext)| {
                Projection::new(store, &format!("{name}.proj{j}"), cfg.policy.latent, ext, cfg.projection, rng)
            })
            .collect();
        Ok(AdaptiveLinear {
            kind: cfg.kind.clone(),
            input: cfg.input,
            output: cfg.output,
            activation: cfg.activation,
            weights,
            bias,
            diagonals: Diagonals::Learned { policy, projections },
            chain,
            blocks,
        })
    }

    /// Extents of the diagonal blocks `D⁰, D¹, …`.
    pub fn block_extents(&self) -> &[usize] {
        &self.blocks
    }

    /// Replaces the policy with constant diagonals.
    pub fn set_fixed_diagonals(&mut self, diags: Vec<Tensor>) -> Result<()> {
        if diags.len() != self.blocks.len() {
            return Err(Error::extent(
                "adaptive",
                format!("{} diagonals for {} blocks", diags.len(), self.blocks.len()),
            ));
        }
        for (d, &ext) in diags.iter().zip(&self.blocks) {
            if d.shape() != [ext] {
                return Err(Error::shape("adaptive", d.shape(), &[ext]));
            }
        }
        self.diagonals = Diagonals::Fixed(diags);
        Ok(())
    }

    /// Forces every diagonal to one, reducing the layer to its static form.
    pub fn set_identity_policy(&mut self) {
        let ones = self.blocks.iter().map(|&e| Tensor::ones(&[e])).collect();
        self.diagonals = Diagonals::Fixed(ones);
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        Ok(self.forward_traced(g, x)?.0)
    }

    /// Forward pass that also returns the diagonal nodes, indexed by block.
    pub fn forward_traced(&self, g: &mut Graph<'_>, x: Var) -> Result<(Var, Vec<Var>)> {
        if g.value(x).cols() != self.input {
            return Err(Error::extent(
                "adaptive_forward",
                format!("input extent {} but layer expects {}", g.value(x).cols(), self.input),
            ));
        }
        let diags: Vec<Var> = match &self.diagonals {
            Diagonals::Learned { policy, projections } => {
                let z = policy.forward(g, x)?;
                projections.iter().map(|p| p.forward(g, z)).collect::<Result<_>>()?
            }
            Diagonals::Fixed(ds) => ds.iter().map(|d| g.input(d.clone())).collect(),
        };
        let fixed = matches!(self.diagonals, Diagonals::Fixed(_));
        let scale = |g: &mut Graph<'_>, h: Var, d: Var| if fixed { g.mul_row(h, d) } else { g.mul(h, d) };

        let mut h = x;
        for stage in &self.chain {
            h = match *stage {
                Stage::Diag(j) => scale(g, h, diags[j])?,
                Stage::Weight(i) => {
                    let w = g.param(self.weights[i]);
                    g.matmul_t(h, w)?
                }
            };
        }
        if let Some(b) = self.bias {
            let b = g.param(b);
            if fixed {
                let db = g.mul(diags[0], b)?;
                h = g.add_row(h, db)?;
            } else {
                let db = g.mul_row(diags[0], b)?;
                h = g.add(h, db)?;
            }
        }
        Ok((g.activation(self.activation, h), diags))
    }

    /// IO-adaptation `D² W D¹ x + D⁰ b`.
    pub fn io_forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        self.expect_kind("io_forward", matches!(self.kind, AdaptiveKind::Io))?;
        self.forward(g, x)
    }

    /// Singular value adaptation `W² D W¹ x + D⁰ b`.
    pub fn sva_forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        self.expect_kind("sva_forward", matches!(self.kind, AdaptiveKind::Sva { .. }))?;
        self.forward(g, x)
    }

    fn expect_kind(&self, op: &'static str, ok: bool) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::UnsupportedKind {
                op,
                kind: self.kind.name().into(),
            })
        }
    }

    pub fn param_count(&self, store: &ParamStore) -> usize {
        let mut n: usize = self.weights.iter().map(|&w| store.value(w).numel()).sum();
        n += self.bias.map_or(0, |b| store.value(b).numel());
        if let Diagonals::Learned { policy, projections } = &self.diagonals {
            n += policy.param_count();
            for p in projections {
                n += store.value(p.weight).numel() + p.bias.map_or(0, |b| store.value(b).numel());
            }
        }
        n
    }
}
