//! Plain-text experiment configuration.
//!
//! A config is a list of `key = value` lines grouped under `[section]`
//! headers; keys before the first header are top-level. `#` starts a
//! comment. Every key has a default except `[model] architecture` and
//! `[model] hidden`, and `[data] path` for experiments that read files.
//! [`ExperimentConfig`]'s `Display` prints every key, and the printed text
//! parses back to an identical value.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use adapt::data::TokenMode;
use adapt::layers::PolicyKind;
use adapt::optim::{AdamConfig, DropoutRates, OptimizerKind, Schedule};
use adapt::Activation;

use crate::error::{ExperimentError, Result};

macro_rules! keywords {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $kw:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn keyword(self) -> &'static str {
                match self {
                    $($name::$variant => $kw),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($kw => Ok($name::$variant),)+
                    _ => Err(format!(
                        "expected one of {}, found {s:?}",
                        [$($kw),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.keyword())
            }
        }
    };
}

keywords!(ExperimentKind {
    TailRegression => "tail-regression",
    Mnist => "mnist",
    TinyLm => "tiny-lm",
    AblationGrid => "ablation-grid",
    RobustnessSweep => "robustness-sweep",
});

keywords!(
    /// Model family. Feed-forward families serve the regression and MNIST
    /// experiments; recurrent ones the language-model experiments.
    Architecture {
        Mlp => "mlp",
        Logistic => "logistic",
        AdaptiveFf => "adaptive-ff",
        Lstm => "lstm",
        Alstm => "alstm",
    }
);

keywords!(Adaptation {
    Input => "input",
    Output => "output",
    Io => "io",
    Sva => "sva",
    General => "general",
});

keywords!(
    /// How an adaptive LSTM produces its latent: a feed-forward layer, an
    /// LSTM on the local summary, or an LSTM on the stacked summary that
    /// also sees the latent of the layer below.
    AdaptationModel {
        FeedForward => "feed-forward",
        Lstm => "lstm",
        LstmRhn => "lstm-rhn",
    }
);

keywords!(OptimizerName {
    Adam => "adam",
    Sgd => "sgd",
});

keywords!(ActivationName {
    Identity => "identity",
    Sigmoid => "sigmoid",
    Tanh => "tanh",
    Relu => "relu",
});

keywords!(PolicyName {
    Linear => "linear",
    Glu => "glu",
    Relu => "relu",
});

keywords!(TokenName {
    Word => "word",
    Char => "char",
});

impl ActivationName {
    pub fn to_core(self) -> Activation {
        match self {
            ActivationName::Identity => Activation::Identity,
            ActivationName::Sigmoid => Activation::Sigmoid,
            ActivationName::Tanh => Activation::Tanh,
            ActivationName::Relu => Activation::Relu,
        }
    }
}

impl PolicyName {
    pub fn to_core(self) -> PolicyKind {
        match self {
            PolicyName::Linear => PolicyKind::Linear,
            PolicyName::Glu => PolicyKind::Glu,
            PolicyName::Relu => PolicyKind::ReluMlp,
        }
    }
}

impl TokenName {
    pub fn to_core(self) -> TokenMode {
        match self {
            TokenName::Word => TokenMode::Word,
            TokenName::Char => TokenMode::Char,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Hidden layer sizes, input side first.
    pub hidden: Vec<usize>,
    /// Hidden activation of feed-forward models.
    pub activation: ActivationName,
    pub adaptation: Adaptation,
    /// Number of leading adaptive layers in an `adaptive-ff` model.
    pub adaptive_layers: usize,
    pub rank: usize,
    /// Order `q` and inner extent of `general` adaptation.
    pub order: usize,
    pub inner: usize,
    /// Policy network of adaptive feed-forward layers.
    pub policy: PolicyName,
    pub adaptation_model: AdaptationModel,
    pub latent: usize,
    pub tie_inputs: bool,
    /// Embedding size; `None` uses the top hidden size.
    pub embed: Option<usize>,
    pub tie_embeddings: bool,
}

impl ModelSpec {
    pub fn new(architecture: Architecture, hidden: Vec<usize>) -> Self {
        ModelSpec {
            architecture,
            hidden,
            activation: ActivationName::Relu,
            adaptation: Adaptation::Io,
            adaptive_layers: 1,
            rank: 8,
            order: 2,
            inner: 8,
            policy: PolicyName::Glu,
            adaptation_model: AdaptationModel::LstmRhn,
            latent: 100,
            tie_inputs: true,
            embed: None,
            tie_embeddings: true,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.architecture, Architecture::Lstm | Architecture::Alstm)
    }

    /// Short label such as `alstm-io-lstm-rhn` or `adaptive-ff-sva`.
    pub fn label(&self) -> String {
        match self.architecture {
            Architecture::Alstm => format!("alstm-{}-{}", self.adaptation, self.adaptation_model),
            Architecture::AdaptiveFf => format!("adaptive-ff-{}", self.adaptation),
            a => a.keyword().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerName,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay: f64,
    pub clip: Option<f64>,
    /// Epochs after which the learning rate is divided by `factor`.
    pub cuts: Vec<usize>,
    pub factor: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let adam = AdamConfig::default();
        OptimizerSpec {
            kind: OptimizerName::Adam,
            lr: 0.003,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            decay: adam.weight_decay,
            clip: Some(5.0),
            cuts: vec![100, 160],
            factor: 10.0,
        }
    }
}

impl OptimizerSpec {
    pub fn optimizer(&self) -> OptimizerKind {
        match self.kind {
            OptimizerName::Adam => OptimizerKind::Adam(AdamConfig {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: self.decay,
            }),
            OptimizerName::Sgd => OptimizerKind::Sgd,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            base: self.lr,
            cuts: self.cuts.clone(),
            factor: self.factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    /// Corpus file for language models, IDX directory for MNIST.
    pub path: Option<PathBuf>,
    pub batch: usize,
    pub bptt: usize,
    /// Use windows of exactly `bptt` steps instead of variable lengths.
    pub bptt_fixed: bool,
    pub tokens: TokenName,
    /// Use only the first `max_tokens` tokens of the corpus.
    pub max_tokens: Option<usize>,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    /// Held-out set sizes for generated and MNIST data.
    pub valid_size: usize,
    pub test_size: usize,
    /// Rows written to the heatmap table.
    pub inspect: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            path: None,
            batch: 20,
            bptt: 70,
            bptt_fixed: false,
            tokens: TokenName::Word,
            max_tokens: None,
            valid_fraction: 0.05,
            test_fraction: 0.05,
            valid_size: 1000,
            test_size: 10_000,
            inspect: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSpec {
    /// Epochs for language models; ignored when `steps` is set.
    pub epochs: usize,
    /// Total optimizer steps for feed-forward experiments, which validate
    /// every `eval_every` steps.
    pub steps: Option<usize>,
    pub eval_every: usize,
    pub record_time: bool,
    pub divergence_after: usize,
    pub divergence_factor: f64,
    /// Robustness sweep: dropout settings per model and their half-width.
    pub samples: usize,
    pub radius: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            epochs: 200,
            steps: None,
            eval_every: 1000,
            record_time: false,
            divergence_after: 10,
            divergence_factor: 2.0,
            samples: 20,
            radius: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Prefix of every run id and output file.
    pub name: String,
    pub seed: u64,
    pub model: ModelSpec,
    /// Optional comparison model trained on the same data and seed.
    pub baseline: Option<ModelSpec>,
    pub optimizer: OptimizerSpec,
    pub data: DataSpec,
    pub dropout: DropoutRates,
    pub train: TrainSpec,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, model: ModelSpec) -> Self {
        ExperimentConfig {
            experiment,
            name: experiment.keyword().to_string(),
            seed: 0,
            model,
            baseline: None,
            optimizer: OptimizerSpec::default(),
            data: DataSpec::default(),
            dropout: DropoutRates::default(),
            train: TrainSpec::default(),
        }
    }

    /// Resolves a relative `[data] path` against `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        if let Some(p) = &self.data.path {
            if p.is_relative() {
                self.data.path = Some(dir.join(p));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Invalid(m));
        self.dropout.validate()?;
        for spec in std::iter::once(&self.model).chain(&self.baseline) {
            let recurrent = spec.is_recurrent();
            let lm = matches!(
                self.experiment,
                ExperimentKind::TinyLm | ExperimentKind::AblationGrid | ExperimentKind::RobustnessSweep
            );
            if recurrent != lm {
                return bad(format!("architecture {} does not fit experiment {}", spec.architecture, self.experiment));
            }
            if spec.hidden.contains(&0) || spec.latent == 0 || spec.rank == 0 || spec.order == 0 || spec.inner == 0 {
                return bad("sizes must be positive".into());
            }
            if recurrent && spec.hidden.is_empty() {
                return bad("recurrent models need at least one hidden layer".into());
            }
            if spec.architecture == Architecture::Logistic && !spec.hidden.is_empty() {
                return bad("logistic regression has no hidden layers".into());
            }
            if spec.architecture == Architecture::Alstm
                && !matches!(spec.adaptation, Adaptation::Output | Adaptation::Io)
            {
                return bad(format!("alstm supports output or io adaptation, not {}", spec.adaptation));
            }
            if spec.embed == Some(0) {
                return bad("embed must be positive".into());
            }
        }
        if self.data.batch == 0 || self.data.bptt == 0 || self.data.inspect == 0 {
            return bad("batch, bptt and inspect must be positive".into());
        }
        if self.train.eval_every == 0 || self.train.steps == Some(0) || self.train.samples == 0 {
            return bad("steps, eval_every and samples must be positive".into());
        }
        if self.train.radius.is_nan() || self.train.radius < 0.0 {
            return bad("radius must be non-negative".into());
        }
        let fractions = self.data.valid_fraction + self.data.test_fraction;
        if !(0.0..1.0).contains(&self.data.valid_fraction)
            || !(0.0..1.0).contains(&self.data.test_fraction)
            || fractions >= 1.0
        {
            return bad("valid and test fractions must lie in [0, 1) and sum below 1".into());
        }
        if !(self.optimizer.lr >= 0.0 && self.optimizer.factor > 0.0) {
            return bad("lr must be non-negative and factor positive".into());
        }
        Ok(())
    }

    pub fn parse_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let mut cfg: ExperimentConfig = text.parse()?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }
}

/// Reads a config file; relative data paths resolve against its directory.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    ExperimentConfig::parse_file(path)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Section {
    Top,
    Model,
    Baseline,
    Optimizer,
    Data,
    Dropout,
    Train,
}

impl Section {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "model" => Section::Model,
            "baseline" => Section::Baseline,
            "optimizer" => Section::Optimizer,
            "data" => Section::Data,
            "dropout" => Section::Dropout,
            "train" => Section::Train,
            _ => return None,
        })
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.parse().map_err(|e| ExperimentError::config(line, format!("{key}: {e}")))
}

fn list(line: usize, key: &str, raw: &str) -> Result<Vec<usize>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|s| value(line, key, s.trim())).collect()
}

fn optional<T: FromStr>(line: usize, key: &str, raw: &str, none: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if raw == none {
        Ok(None)
    } else {
        value(line, key, raw).map(Some)
    }
}

/// A model section under construction; the required keys may be absent.
struct PartialModel {
    architecture: Option<Architecture>,
    hidden: Option<Vec<usize>>,
    spec: ModelSpec,
}

impl PartialModel {
    fn new() -> Self {
        PartialModel {
            architecture: None,
            hidden: None,
            spec: ModelSpec::new(Architecture::Mlp, Vec::new()),
        }
    }

    fn set(&mut self, line: usize, key: &str, raw: &str) -> Result<bool> {
        let s = &mut self.spec;
        match key {
            "architecture" => self.architecture = Some(value(line, key, raw)?),
            "hidden" => self.hidden = Some(list(line, key, raw)?),
            "activation" => s.activation = value(line, key, raw)?,
            "adaptation" => s.adaptation = value(line, key, raw)?,
            "adaptive_layers" => s.adaptive_layers = value(line, key, raw)?,
            "rank" => s.rank = value(line, key, raw)?,
            "order" => s.order = value(line, key, raw)?,
            "inner" => s.inner = value(line, key, raw)?,
            "policy" => s.policy = value(line, key, raw)?,
            "adaptation_model" => s.adaptation_model = value(line, key, raw)?,
            "latent" => s.latent = value(line, key, raw)?,
            "tie_inputs" => s.tie_inputs = value(line, key, raw)?,
            "embed" => s.embed = optional(line, key, raw, "auto")?,
            "tie_embeddings" => s.tie_embeddings = value(line, key, raw)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn finish(self, section: &'static str) -> Result<ModelSpec> {
        let mut missing = Vec::new();
        if self.architecture.is_none() {
            missing.push("architecture");
        }
        if self.hidden.is_none() {
            missing.push("hidden");
        }
        if !missing.is_empty() {
            return Err(ExperimentError::MissingKeys {
                section,
                keys: missing.join(", "),
            });
        }
        Ok(ModelSpec {
            architecture: self.architecture.unwrap(),
            hidden: self.hidden.unwrap(),
            ..self.spec
        })
    }
}

impl FromStr for ExperimentConfig {
    type Err = ExperimentError;

    fn from_str(text: &str) -> Result<Self> {
        let mut section = Section::Top;
        let mut seen_sections = HashSet::new();
        let mut seen_keys = HashSet::new();
        let mut experiment = None;
        let mut name = None;
        let mut seed = 0;
        let mut model = None::<PartialModel>;
        let mut baseline = None::<PartialModel>;
        let mut optimizer = OptimizerSpec::default();
        let mut data = DataSpec::default();
        let mut dropout = DropoutRates::default();
        let mut train = TrainSpec::default();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(header) = content.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| ExperimentError::config(line, "unterminated section header"))?
                    .trim();
                section = Section::parse(header)
                    .ok_or_else(|| ExperimentError::config(line, format!("unknown section [{header}]")))?;
                if !seen_sections.insert(section) {
                    return Err(ExperimentError::config(line, format!("duplicate section [{header}]")));
                }
                match section {
                    Section::Model => model = Some(PartialModel::new()),
                    Section::Baseline => baseline = Some(PartialModel::new()),
                    _ => {}
                }
                continue;
            }
            let (key, val) = content
                .split_once('=')
                .ok_or_else(|| ExperimentError::config(line, format!("expected `key = value`, found {content:?}")))?;
            let (key, val) = (key.trim(), val.trim());
            if !seen_keys.insert((section, key.to_string())) {
                return Err(ExperimentError::config(line, format!("duplicate key {key}")));
            }
            let known = match section {
                Section::Top => {
                    match key {
                        "experiment" => experiment = Some(value(line, key, val)?),
                        "name" => name = Some(val.to_string()),
                        "seed" => seed = value(line, key, val)?,
                        _ => return Err(unknown(line, key, section)),
                    }
                    true
                }
                Section::Model => model.as_mut().expect("opened by header").set(line, key, val)?,
                Section::Baseline => baseline.as_mut().expect("opened by header").set(line, key, val)?,
                Section::Optimizer => {
                    let o = &mut optimizer;
                    match key {
                        "kind" => o.kind = value(line, key, val)?,
                        "lr" => o.lr = value(line, key, val)?,
                        "beta1" => o.beta1 = value(line, key, val)?,
                        "beta2" => o.beta2 = value(line, key, val)?,
                        "eps" => o.eps = value(line, key, val)?,
                        "decay" => o.decay = value(line, key, val)?,
                        "clip" => o.clip = optional(line, key, val, "none")?,
                        "cuts" => o.cuts = list(line, key, val)?,
                        "factor" => o.factor = value(line, key, val)?,
                        _ => return Err(unknown(line, key, section)),
                    }
                    true
                }
                Section::Data => {
                    let d = &mut data;
                    match key {
                        "path" => d.path = (!val.is_empty()).then(|| PathBuf::from(val)),
                        "batch" => d.batch = value(line, key, val)?,
                        "bptt" => d.bptt = value(line, key, val)?,
                        "bptt_fixed" => d.bptt_fixed = value(line, key, val)?,
                        "tokens" => d.tokens = value(line, key, val)?,
                        "max_tokens" => d.max_tokens = optional(line, key, val, "all")?,
                        "valid_fraction" => d.valid_fraction = value(line, key, val)?,
                        "test_fraction" => d.test_fraction = value(line, key, val)?,
                        "valid_size" => d.valid_size = value(line, key, val)?,
                        "test_size" => d.test_size = value(line, key, val)?,
                        "inspect" => d.inspect = value(line, key, val)?,
                        _ => return Err(unknown(line, key, section)),
                    }
                    true
                }
                Section::Dropout => {
                    let r = &mut dropout;
                    match key {
                        "word" => r.word = value(line, key, val)?,
                        "embedding" => r.embedding = value(line, key, val)?,
                        "latent" => r.latent = value(line, key, val)?,
                        "hidden" => r.hidden = value(line, key, val)?,
                        "output" => r.output = value(line, key, val)?,
                        _ => return Err(unknown(line, key, section)),
                    }
                    true
                }
                Section::Train => {
                    let t = &mut train;
                    match key {
                        "epochs" => t.epochs = value(line, key, val)?,
                        "steps" => t.steps = optional(line, key, val, "none")?,
                        "eval_every" => t.eval_every = value(line, key, val)?,
                        "record_time" => t.record_time = value(line, key, val)?,
                        "divergence_after" => t.divergence_after = value(line, key, val)?,
                        "divergence_factor" => t.divergence_factor = value(line, key, val)?,
                        "samples" => t.samples = value(line, key, val)?,
                        "radius" => t.radius = value(line, key, val)?,
                        _ => return Err(unknown(line, key, section)),
                    }
                    true
                }
            };
            if !known {
                return Err(unknown(line, key, section));
            }
        }

        let experiment: ExperimentKind = experiment.ok_or_else(|| ExperimentError::MissingKeys {
            section: "top level",
            keys: "experiment".into(),
        })?;
        let model = model.unwrap_or_else(PartialModel::new).finish("model")?;
        let baseline = baseline.map(|b| b.finish("baseline")).transpose()?;
        let cfg = ExperimentConfig {
            experiment,
            name: name.unwrap_or_else(|| experiment.keyword().to_string()),
            seed,
            model,
            baseline,
            optimizer,
            data,
            dropout,
            train,
        };
        if matches!(
            experiment,
            ExperimentKind::Mnist
                | ExperimentKind::TinyLm
                | ExperimentKind::AblationGrid
                | ExperimentKind::RobustnessSweep
        ) && cfg.data.path.is_none()
        {
            return Err(ExperimentError::MissingKeys {
                section: "data",
                keys: "path".into(),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn unknown(line: usize, key: &str, section: Section) -> ExperimentError {
    let where_ = match section {
        Section::Top => "at top level".to_string(),
        s => format!("in [{}]", format!("{s:?}").to_lowercase()),
    };
    ExperimentError::config(line, format!("unknown key {key} {where_}"))
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn opt<T: fmt::Display>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or(none.to_string(), T::to_string)
}

fn write_model(f: &mut fmt::Formatter<'_>, header: &str, m: &ModelSpec) -> fmt::Result {
    writeln!(f, "\n[{header}]")?;
    writeln!(f, "architecture = {}", m.architecture)?;
    writeln!(f, "hidden = {}", join(&m.hidden))?;
    writeln!(f, "activation = {}", m.activation)?;
    writeln!(f, "adaptation = {}", m.adaptation)?;
    writeln!(f, "adaptive_layers = {}", m.adaptive_layers)?;
    writeln!(f, "rank = {}", m.rank)?;
    writeln!(f, "order = {}", m.order)?;
    writeln!(f, "inner = {}", m.inner)?;
    writeln!(f, "policy = {}", m.policy)?;
    writeln!(f, "adaptation_model = {}", m.adaptation_model)?;
    writeln!(f, "latent = {}", m.latent)?;
    writeln!(f, "tie_inputs = {}", m.tie_inputs)?;
    writeln!(f, "embed = {}", opt(&m.embed, "auto"))?;
    writeln!(f, "tie_embeddings = {}", m.tie_embeddings)
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "experiment = {}", self.experiment)?;
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "seed = {}", self.seed)?;
        write_model(f, "model", &self.model)?;
        if let Some(b) = &self.baseline {
            write_model(f, "baseline", b)?;
        }
        let o = &self.optimizer;
        writeln!(f, "\n[optimizer]")?;
        writeln!(f, "kind = {}", o.kind)?;
        writeln!(f, "lr = {}", o.lr)?;
        writeln!(f, "beta1 = {}", o.beta1)?;
        writeln!(f, "beta2 = {}", o.beta2)?;
        writeln!(f, "eps = {}", o.eps)?;
        writeln!(f, "decay = {}", o.decay)?;
        writeln!(f, "clip = {}", opt(&o.clip, "none"))?;
        writeln!(f, "cuts = {}", join(&o.cuts))?;
        writeln!(f, "factor = {}", o.factor)?;
        let d = &self.data;
        writeln!(f, "\n[data]")?;
        writeln!(f, "path = {}", d.path.as_ref().map_or(String::new(), |p| p.display().to_string()))?;
        writeln!(f, "batch = {}", d.batch)?;
        writeln!(f, "bptt = {}", d.bptt)?;
        writeln!(f, "bptt_fixed = {}", d.bptt_fixed)?;
        writeln!(f, "tokens = {}", d.tokens)?;
        writeln!(f, "max_tokens = {}", opt(&d.max_tokens, "all"))?;
        writeln!(f, "valid_fraction = {}", d.valid_fraction)?;
        writeln!(f, "test_fraction = {}", d.test_fraction)?;
        writeln!(f, "valid_size = {}", d.valid_size)?;
        writeln!(f, "test_size = {}", d.test_size)?;
        writeln!(f, "inspect = {}", d.inspect)?;
        let r = &self.dropout;
        writeln!(f, "\n[dropout]")?;
        writeln!(f, "word = {}", r.word)?;
        writeln!(f, "embedding = {}", r.embedding)?;
        writeln!(f, "latent = {}", r.latent)?;
        writeln!(f, "hidden = {}", r.hidden)?;
        writeln!(f, "output = {}", r.output)?;
        let t = &self.train;
        writeln!(f, "\n[train]")?;
        writeln!(f, "epochs = {}", t.epochs)?;
        writeln!(f, "steps = {}", opt(&t.steps, "none"))?;
        writeln!(f, "eval_every = {}", t.eval_every)?;
        writeln!(f, "record_time = {}", t.record_time)?;
        writeln!(f, "divergence_after = {}", t.divergence_after)?;
        writeln!(f, "divergence_factor = {}", t.divergence_factor)?;
        writeln!(f, "samples = {}", t.samples)?;
        writeln!(f, "radius = {}", t.radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAIL: &str = "experiment = tail-regression\n[model]\narchitecture = adaptive-ff\nhidden = 2\n";

    #[test]
    fn defaults_follow_the_reference_hyperparameters() {
        let cfg: ExperimentConfig = TAIL.parse().unwrap();
        let o = &cfg.optimizer;
        assert_eq!((o.lr, o.beta1, o.beta2, o.decay), (0.003, 0.0, 0.999, 1e-6));
        assert_eq!((o.cuts.clone(), o.factor), (vec![100, 160], 10.0));
        assert_eq!(cfg.dropout.as_array(), [0.16, 0.6, 0.1, 0.25, 0.6]);
        assert_eq!((cfg.data.batch, cfg.data.bptt, cfg.model.latent), (20, 70, 100));
        assert_eq!(cfg.name, "tail-regression");
    }

    #[test]
    fn missing_model_keys_are_listed() {
        let err = "experiment = mnist\n[data]\npath = x\n[model]\n".parse::<ExperimentConfig>().unwrap_err();
        assert_eq!(err.to_string(), "config: missing required keys in [model]: architecture, hidden");
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let err = format!("{TAIL}colour = red\n").parse::<ExperimentConfig>().unwrap_err();
        assert!(err.to_string().contains("line 5: unknown key colour in [model]"), "{err}");
        let err = format!("{TAIL}hidden = 3\n").parse::<ExperimentConfig>().unwrap_err();
        assert!(err.to_string().contains("line 5: duplicate key hidden"), "{err}");
        let err = format!("{TAIL}[optimizer]\nlr = fast\n").parse::<ExperimentConfig>().unwrap_err();
        assert!(err.to_string().contains("line 6: lr:"), "{err}");
    }

    #[test]
    fn file_experiments_need_a_path() {
        let err = "experiment = mnist\n[model]\narchitecture = logistic\nhidden =\n"
            .parse::<ExperimentConfig>()
            .unwrap_err();
        assert!(matches!(err, ExperimentError::MissingKeys { section: "data", .. }));
    }

    #[test]
    fn printed_config_reparses_identically() {
        let mut cfg: ExperimentConfig = TAIL.parse().unwrap();
        cfg.baseline = Some(ModelSpec::new(Architecture::Mlp, vec![10, 10]));
        cfg.optimizer.clip = None;
        cfg.data.max_tokens = Some(1234);
        cfg.optimizer.lr = 0.1 + 0.2;
        let again: ExperimentConfig = cfg.to_string().parse().unwrap();
        assert_eq!(again, cfg);
    }
}
