//! Recurrent stacks and the truncated unroll.

use adapt::autodiff::{Graph, ParamId, ParamStore};
use adapt::optim::{sample_masks, DropoutRates};
use adapt::recurrent::{
    AdaptationPolicy, AdaptiveSpec, LanguageModel, LayerTensors, LmConfig, PolicyModel, RecurrentStack, StackSpec,
    Summary,
};
use adapt::rng;
use adapt::Tensor;

fn adaptive(model: PolicyModel, summary: Summary) -> AdaptiveSpec {
    AdaptiveSpec {
        latent: 4,
        policy: AdaptationPolicy::Io,
        model,
        tie_inputs: true,
        summary,
    }
}

fn lm(store: &mut ParamStore, adaptive: Option<AdaptiveSpec>, seed: u64) -> LanguageModel {
    let cfg = LmConfig {
        vocab: 7,
        embed: 5,
        hidden: vec![6, 5],
        adaptive,
        tie_embeddings: true,
    };
    LanguageModel::new(store, cfg, &mut rng::seeded(seed)).unwrap()
}

fn tokens(n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut r = rng::seeded(seed);
    (0..2).map(|_| (0..n).map(|_| (rng::normal(&mut r).abs() * 3.0) as usize % 7).collect()).collect()
}

#[test]
fn thousand_steps_keep_extents_and_stay_finite() {
    for model in [PolicyModel::Static, PolicyModel::Recurrent] {
        let mut store = ParamStore::new();
        let spec = StackSpec {
            input: 3,
            hidden: vec![5, 4],
            adaptive: Some(adaptive(model, Summary::Stacked)),
        };
        let mut r = rng::seeded(1);
        let stack = RecurrentStack::new(&mut store, "rnn", &spec, &mut r).unwrap();
        let mut state = stack.zero_state(2);
        let shapes: Vec<_> = state.iter().map(|s| (s.h.shape().to_vec(), s.c.shape().to_vec())).collect();
        for t in 1..=1000 {
            let mut g = Graph::new(&store);
            let loaded = RecurrentStack::load_state(&mut g, &state);
            let x = g.input(Tensor::randn(&[2, 3], &mut r).scale(2.0));
            let (_, next) = stack.step(&mut g, x, &loaded, &Default::default()).unwrap();
            let c_prev: f64 = state.iter().map(|s| s.c.max_abs()).fold(0.0, f64::max);
            state = RecurrentStack::detach_state(&g, &next);
            for (s, (h, c)) in state.iter().zip(&shapes) {
                assert_eq!(s.h.shape(), &h[..]);
                assert_eq!(s.c.shape(), &c[..]);
                assert!(s.h.all_finite() && s.c.all_finite());
                assert!(s.h.max_abs() < 1.0);
                assert!(s.c.max_abs() <= c_prev + 1.0, "step {t}");
                assert_eq!(s.z.as_ref().unwrap().shape(), &[2, 4]);
            }
        }
    }
}

#[test]
fn single_layer_stacked_summary_uses_its_own_latent() {
    let mut store = ParamStore::new();
    let spec = StackSpec {
        input: 3,
        hidden: vec![4],
        adaptive: Some(adaptive(PolicyModel::Recurrent, Summary::Stacked)),
    };
    let stack = RecurrentStack::new(&mut store, "rnn", &spec, &mut rng::seeded(2)).unwrap();
    if let RecurrentStack::Alstm { layers, .. } = &stack {
        assert_eq!(layers[0].cfg.summary, 3 + 4 + 4);
    }
    let zero = stack.zero_state(1);
    let run = || {
        let mut g = Graph::new(&store);
        let s = RecurrentStack::load_state(&mut g, &zero);
        let x = g.input(Tensor::matrix(&[[0.5, -1.0, 2.0]]));
        let (out, _) = stack.step(&mut g, x, &s, &Default::default()).unwrap();
        g.value(out).clone()
    };
    assert_eq!(run(), run());
}

/// Splitting a window and carrying the detached state gives the same total
/// loss as one long window.
#[test]
fn unroll_loss_is_additive_over_split_windows() {
    for ad in [None, Some(adaptive(PolicyModel::Recurrent, Summary::Stacked))] {
        let mut store = ParamStore::new();
        let model = lm(&mut store, ad, 3);
        let seq = tokens(13, 4);
        let inputs: Vec<Vec<usize>> = seq.iter().map(|s| s[..12].to_vec()).collect();
        let targets: Vec<Vec<usize>> = seq.iter().map(|s| s[1..].to_vec()).collect();
        let zero = model.zero_state(2);

        let mut g = Graph::new(&store);
        let (full, _) = model.unroll(&mut g, &inputs, &targets, &zero, None).unwrap();
        let full = g.value(full).item();

        let mut total = 0.0;
        let mut state = zero.clone();
        for (a, b) in [(0, 5), (5, 6), (6, 12)] {
            let i: Vec<Vec<usize>> = inputs.iter().map(|s| s[a..b].to_vec()).collect();
            let t: Vec<Vec<usize>> = targets.iter().map(|s| s[a..b].to_vec()).collect();
            let mut g = Graph::new(&store);
            let (loss, st) = model.unroll(&mut g, &i, &t, &state, None).unwrap();
            total += g.value(loss).item();
            state = RecurrentStack::detach_state(&g, &st);
        }
        assert!((full - total).abs() < 1e-10, "{full} vs {total}");
    }
}

/// A window run with masks equals the same masks applied one step at a time,
/// which holds only if every step of the window reuses them.
#[test]
fn dropout_masks_are_locked_across_the_window() {
    let mut store = ParamStore::new();
    let model = lm(&mut store, Some(adaptive(PolicyModel::Recurrent, Summary::Stacked)), 5);
    // Fresh weights give near-uniform logits; enlarge them so masks matter.
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let v = store.value(id).scale(4.0);
        store.set(id, v).unwrap();
    }
    let masks = sample_masks(&DropoutRates::default(), &model.mask_shapes(2), &mut rng::seeded(6)).unwrap();
    let seq = tokens(9, 7);
    let inputs: Vec<Vec<usize>> = seq.iter().map(|s| s[..8].to_vec()).collect();
    let targets: Vec<Vec<usize>> = seq.iter().map(|s| s[1..].to_vec()).collect();
    let zero = model.zero_state(2);

    let mut g = Graph::new(&store);
    let (full, _) = model.unroll(&mut g, &inputs, &targets, &zero, Some(&masks)).unwrap();
    let full = g.value(full).item();

    let mut state: Vec<LayerTensors> = zero.clone();
    let mut total = 0.0;
    for t in 0..8 {
        let i: Vec<Vec<usize>> = inputs.iter().map(|s| vec![s[t]]).collect();
        let o: Vec<Vec<usize>> = targets.iter().map(|s| vec![s[t]]).collect();
        let mut g = Graph::new(&store);
        let (loss, st) = model.unroll(&mut g, &i, &o, &state, Some(&masks)).unwrap();
        total += g.value(loss).item();
        state = RecurrentStack::detach_state(&g, &st);
    }
    assert!((full - total).abs() < 1e-10);

    let mut g = Graph::new(&store);
    let (plain, _) = model.unroll(&mut g, &inputs, &targets, &zero, None).unwrap();
    let plain = g.value(plain).item();
    assert!((plain - full).abs() > 1e-2, "masks have no effect: {plain} vs {full}");
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut store = ParamStore::new();
        let model = lm(&mut store, Some(adaptive(PolicyModel::Recurrent, Summary::Stacked)), 8);
        let seq = tokens(6, 9);
        let inputs: Vec<Vec<usize>> = seq.iter().map(|s| s[..5].to_vec()).collect();
        let targets: Vec<Vec<usize>> = seq.iter().map(|s| s[1..].to_vec()).collect();
        let zero = model.zero_state(2);
        let mut g = Graph::new(&store);
        let (loss, _) = model.unroll(&mut g, &inputs, &targets, &zero, None).unwrap();
        let value = g.value(loss).item().to_bits();
        let ids: Vec<ParamId> = store.ids().collect();
        let grads = g.backward(loss).unwrap();
        let bits: Vec<u64> = ids
            .iter()
            .flat_map(|&id| grads.param(id).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect();
        (value, bits)
    };
    assert_eq!(run(), run());
}

#[test]
fn evaluate_matches_manual_windows() {
    let mut store = ParamStore::new();
    let model = lm(&mut store, None, 10);
    let corpus: Vec<usize> = tokens(40, 11).concat();
    let ppl_loss = model.evaluate(&store, &corpus, 2, 7).unwrap();

    let streams: Vec<&[usize]> = corpus.chunks(40).collect();
    let mut g = Graph::new(&store);
    let inputs: Vec<Vec<usize>> = streams.iter().map(|s| s[..39].to_vec()).collect();
    let targets: Vec<Vec<usize>> = streams.iter().map(|s| s[1..].to_vec()).collect();
    let (loss, _) = model.unroll(&mut g, &inputs, &targets, &model.zero_state(2), None).unwrap();
    assert!((g.value(loss).item() / 39.0 - ppl_loss).abs() < 1e-12);
}

#[test]
fn empty_window_is_rejected() {
    let mut store = ParamStore::new();
    let model = lm(&mut store, None, 12);
    let mut g = Graph::new(&store);
    let empty = vec![vec![], vec![]];
    assert!(model.unroll(&mut g, &empty, &empty, &model.zero_state(2), None).is_err());
}
