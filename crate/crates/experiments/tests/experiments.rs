use std::fs;
use std::path::Path;

use adapt::optim::DropoutRates;
use experiments::config::{
    ActivationName, Adaptation, AdaptationModel, Architecture, DataSpec, OptimizerName, PolicyName, TokenName,
};
use experiments::grid::{ablation_grid, grid_cells, GRID_HEADER};
use experiments::lm::{run_lm, Corpus};
use experiments::report::{overview, read_summaries};
use experiments::sweep::{robustness_sweep, SWEEP_HEADER};
use experiments::{emit_report, ff, run, ExperimentConfig, ExperimentError, ExperimentKind, ModelSpec};
use proptest::prelude::*;

const METRICS_HEADER: &str = "epoch,step,split,loss,ppl,lr,seconds";

fn tail_config(steps: usize) -> ExperimentConfig {
    let mut model = ModelSpec::new(Architecture::AdaptiveFf, vec![2]);
    model.adaptation = Adaptation::Sva;
    model.rank = 1;
    model.latent = 4;
    let mut cfg = ExperimentConfig::new(ExperimentKind::TailRegression, model);
    cfg.name = "tail".into();
    cfg.seed = 3;
    cfg.baseline = Some(ModelSpec::new(Architecture::Mlp, vec![4, 4]));
    cfg.optimizer.cuts.clear();
    cfg.data.batch = 16;
    cfg.data.valid_size = 64;
    cfg.data.test_size = 128;
    cfg.data.inspect = 5;
    cfg.train.steps = Some(steps);
    cfg.train.eval_every = 25;
    cfg
}

fn lm_config(experiment: ExperimentKind, hidden: Vec<usize>) -> ExperimentConfig {
    let mut model = ModelSpec::new(Architecture::Alstm, hidden.clone());
    model.latent = 3;
    let mut cfg = ExperimentConfig::new(experiment, model);
    cfg.name = "lm".into();
    cfg.seed = 5;
    cfg.baseline = Some(ModelSpec::new(Architecture::Lstm, hidden));
    cfg.optimizer.cuts.clear();
    cfg.data = DataSpec {
        tokens: TokenName::Char,
        batch: 4,
        bptt: 8,
        valid_fraction: 0.1,
        test_fraction: 0.1,
        inspect: 3,
        ..DataSpec::default()
    };
    cfg.train.epochs = 2;
    cfg
}

fn corpus(data: &DataSpec) -> Corpus {
    let text = "the whale swam past the ship and the sailors watched it go. ".repeat(30);
    Corpus::from_text(&text, data).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn shipped_configs_parse_validate_and_reprint() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "conf") {
            let cfg = experiments::parse_config(&path).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.to_string().parse::<ExperimentConfig>().unwrap(), cfg, "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

fn arb_model() -> impl Strategy<Value = ModelSpec> {
    (
        (
            prop::sample::select(Architecture::ALL),
            prop::collection::vec(1usize..300, 0..4),
            prop::sample::select(ActivationName::ALL),
            prop::sample::select(Adaptation::ALL),
            0usize..4,
            1usize..20,
            1usize..5,
        ),
        (
            1usize..20,
            prop::sample::select(PolicyName::ALL),
            prop::sample::select(AdaptationModel::ALL),
            1usize..200,
            any::<bool>(),
            prop::option::of(1usize..500),
            any::<bool>(),
        ),
    )
        .prop_map(
            |(
                (architecture, hidden, activation, adaptation, adaptive_layers, rank, order),
                (inner, policy, adaptation_model, latent, tie_inputs, embed, tie_embeddings),
            )| ModelSpec {
                architecture,
                hidden,
                activation,
                adaptation,
                adaptive_layers,
                rank,
                order,
                inner,
                policy,
                adaptation_model,
                latent,
                tie_inputs,
                embed,
                tie_embeddings,
            },
        )
}

/// Moves a random spec into the family `experiment` accepts.
fn fit(mut spec: ModelSpec, experiment: ExperimentKind) -> ModelSpec {
    let lm =
        matches!(experiment, ExperimentKind::TinyLm | ExperimentKind::AblationGrid | ExperimentKind::RobustnessSweep);
    spec.architecture = match (lm, spec.architecture) {
        (true, Architecture::Lstm) => Architecture::Lstm,
        (true, _) => Architecture::Alstm,
        (false, Architecture::Lstm) => Architecture::Mlp,
        (false, Architecture::Alstm) => Architecture::AdaptiveFf,
        (false, a) => a,
    };
    if spec.architecture == Architecture::Logistic {
        spec.hidden.clear();
    }
    if lm && spec.hidden.is_empty() {
        spec.hidden.push(8);
    }
    if spec.architecture == Architecture::Alstm && !matches!(spec.adaptation, Adaptation::Output | Adaptation::Io) {
        spec.adaptation = Adaptation::Io;
    }
    spec
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        prop::sample::select(ExperimentKind::ALL),
        "[a-z][a-z0-9_-]{0,12}",
        any::<u64>(),
        arb_model(),
        prop::option::of(arb_model()),
        (
            prop::sample::select(OptimizerName::ALL),
            0.0f64..1.0,
            prop::option::of(0.1f64..100.0),
            prop::collection::vec(1usize..500, 0..3),
            1.0f64..20.0,
        ),
        (1usize..200, 1usize..200, any::<bool>(), prop::option::of(1usize..1_000_000)),
        prop::array::uniform5(0.0f64..0.99),
        (1usize..500, prop::option::of(1usize..100_000), 1usize..5000, any::<bool>(), 0.0f64..1.0),
    )
        .prop_map(|(experiment, name, seed, model, baseline, opt, data, rates, train)| {
            let mut cfg = ExperimentConfig::new(experiment, fit(model, experiment));
            cfg.name = name;
            cfg.seed = seed;
            cfg.baseline = baseline.map(|b| fit(b, experiment));
            (cfg.optimizer.kind, cfg.optimizer.lr, cfg.optimizer.clip, cfg.optimizer.cuts, cfg.optimizer.factor) = opt;
            (cfg.data.batch, cfg.data.bptt, cfg.data.bptt_fixed, cfg.data.max_tokens) = data;
            cfg.data.path = Some("data/corpus.txt".into());
            cfg.dropout = DropoutRates::from_array(rates);
            (cfg.train.epochs, cfg.train.steps, cfg.train.samples, cfg.train.record_time, cfg.train.radius) = train;
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn printed_configs_parse_back_identically(cfg in arb_config()) {
        let text = cfg.to_string();
        let back: ExperimentConfig = text.parse().unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn malformed_configs_report_the_line() {
    let err = "experiment = tail-regression\n[model]\narchitecture = mlp\nhidden = 2 2\n"
        .parse::<ExperimentConfig>()
        .unwrap_err();
    assert!(matches!(err, ExperimentError::Config { line: 4, .. }), "{err}");
    let err = "experiment = mnist\n[model]\nhidden = 3\n".parse::<ExperimentConfig>().unwrap_err();
    assert!(err.to_string().contains("architecture"), "{err}");
}

#[test]
fn tail_smoke_run_stays_finite_and_reports() {
    let cfg = tail_config(100);
    let records = run(&cfg).unwrap();
    assert_eq!(records.len(), 2);
    for r in &records {
        assert_eq!(r.steps, 100);
        assert!(r.converged);
        assert!(r.history.rows().iter().all(|row| row.loss.is_finite()));
        assert!(r.score("test_mse").unwrap().is_finite());
    }
    assert_eq!(records[0].run_id, "tail-adaptive-ff-sva-s3");
    assert_eq!(records[1].run_id, "tail-mlp-s3");

    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&records, dir.path()).unwrap();
    assert_eq!(paths.len(), 6);
    for r in &records {
        let metrics = fs::read_to_string(dir.path().join(format!("{}.metrics.csv", r.run_id))).unwrap();
        assert_eq!(metrics.lines().next(), Some(METRICS_HEADER));
        let heatmap = fs::read_to_string(dir.path().join(format!("{}.heatmap.csv", r.run_id))).unwrap();
        assert_eq!(heatmap.lines().count(), 1 + cfg.data.inspect);
    }

    let rows = read_summaries(dir.path()).unwrap();
    assert_eq!(rows.len(), 2);
    let text = overview(&rows);
    assert!(text.contains("tail-mlp-s3 model=mlp"), "{text}");
    assert!(text.contains("test_mse="), "{text}");
}

#[test]
fn seeded_reruns_are_byte_identical() {
    let cfg = tail_config(60);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = experiments::run_to(&cfg, a.path()).unwrap();
    let second = experiments::run_to(&cfg, b.path()).unwrap();
    assert_eq!(first, second);
    assert_eq!(files(a.path()), files(b.path()));

    let other = experiments::run(&ExperimentConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(other[0].score("test_mse"), first[0].score("test_mse"));
}

#[test]
fn clashing_labels_get_distinct_run_ids() {
    let mut cfg = tail_config(25);
    cfg.baseline = Some(cfg.model.clone());
    let ids: Vec<String> = run(&cfg).unwrap().into_iter().map(|r| r.run_id).collect();
    assert_eq!(ids, ["tail-adaptive-ff-sva-s3", "tail-adaptive-ff-sva-baseline-s3"]);
}

#[test]
fn reports_need_records_and_a_writable_directory() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(emit_report(&[], dir.path()), Err(ExperimentError::Invalid(_))));
    let records = run(&tail_config(25)).unwrap();
    let file = dir.path().join("occupied");
    fs::write(&file, "").unwrap();
    assert!(matches!(emit_report(&records, &file.join("runs")), Err(ExperimentError::Io { .. })));
}

#[test]
fn missing_mnist_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ff::load_mnist(dir.path(), 10).is_err());
}

#[test]
fn language_model_runs_report_perplexities_and_states() {
    let cfg = lm_config(ExperimentKind::TinyLm, vec![6, 6]);
    let corpus = corpus(&cfg.data);
    let record = run_lm(&cfg, &corpus, "lm".into()).unwrap();
    let valid = record.score("valid_ppl").unwrap();
    let test = record.score("test_ppl").unwrap();
    assert!(valid.is_finite() && test.is_finite());
    assert!(valid < corpus.vocab.len() as f64, "{valid}");
    let heatmap: Vec<&str> = record.heatmap.lines().collect();
    assert_eq!(heatmap.len(), 1 + cfg.data.inspect);
    assert!(heatmap[0].starts_with("sample,h0_0") && heatmap[0].contains("z0_2"));
    assert_eq!(run_lm(&cfg, &corpus, "lm".into()).unwrap(), record);
}

#[test]
fn grid_cells_are_matched_and_the_lstm_cell_is_a_plain_run() {
    let mut cfg = lm_config(ExperimentKind::AblationGrid, vec![24, 24]);
    cfg.train.epochs = 1;
    let corpus = corpus(&cfg.data);
    let cells = grid_cells(&cfg, corpus.vocab.len()).unwrap();
    assert_eq!(cells.len(), 7);
    assert!(cells.iter().all(|c| c.matched()), "{cells:?}");
    assert_eq!(cells[0].spec.architecture, Architecture::Lstm);

    let result = ablation_grid(&cfg, &corpus).unwrap();
    let lines: Vec<&str> = result.table.lines().collect();
    assert_eq!(lines[0], GRID_HEADER);
    assert_eq!(lines.len(), 8);
    assert!(lines[1].starts_with("lstm,-,none,"));

    let mut plain = cfg.clone();
    plain.model = cells[0].spec.clone();
    let direct = run_lm(&plain, &corpus, result.records[0].run_id.clone()).unwrap();
    assert_eq!(direct, result.records[0]);
}

#[test]
fn zero_radius_sweep_repeats_one_run_per_model() {
    let mut cfg = lm_config(ExperimentKind::RobustnessSweep, vec![5, 5]);
    cfg.train.epochs = 1;
    let corpus = corpus(&cfg.data);
    let result = robustness_sweep(&cfg, &corpus, 3, 0.0).unwrap();
    assert_eq!(result.records.len(), 6);
    for pop in [&result.baseline, &result.model] {
        assert_eq!(pop.samples, 3);
        assert!(pop.scores.windows(2).all(|w| w[0] == w[1]), "{:?}", pop.scores);
        if pop.failures == 0 {
            assert_eq!(pop.iqr(), 0.0);
        }
    }
    let lines: Vec<&str> = result.table.lines().collect();
    assert_eq!(lines[0], SWEEP_HEADER);
    assert_eq!(lines.len(), 7);
    assert_eq!(result.summary.lines().count(), 3);

    assert!(robustness_sweep(&cfg, &corpus, 0, 0.1).is_err());
    assert!(robustness_sweep(&cfg, &corpus, 1, -0.1).is_err());
    cfg.baseline = None;
    assert!(robustness_sweep(&cfg, &corpus, 1, 0.1).is_err());
}
