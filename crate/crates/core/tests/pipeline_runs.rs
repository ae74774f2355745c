//! End-to-end schedule, labeling and evaluation on small synthetic data.

mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{band_dataset, quick_presentation, small_params};
use spikeprune::compression::{connectivity, CompressionConfig};
use spikeprune::encoding::pixels_to_rates_scaled;
use spikeprune::network::Network;
use spikeprune::pipeline::{
    self, argmax_class, assign_labels, class_scores, evaluate, predict, train, Mode, NeuronLabels, RunSettings,
};
use spikeprune::report;

fn schedule(n_batches: usize, warmup: usize, batch_size: usize) -> CompressionConfig {
    CompressionConfig {
        n_batches,
        warmup_batches: warmup,
        batch_size,
        pruning_threshold: 0.2,
        ..CompressionConfig::default()
    }
}

fn settings(mode: Mode, cc: CompressionConfig, seed: u64) -> RunSettings {
    RunSettings {
        seed,
        mode,
        network: small_params(6),
        presentation: quick_presentation(),
        compression: cc,
        ..RunSettings::default()
    }
}

#[test]
fn single_batch_schedule_prunes_once() {
    let data = band_dataset(3, 4);
    let s = settings(Mode::Compressed, schedule(1, 1, 12), 1);
    let out = pipeline::run(&s, &data, &data).unwrap();
    let h = &out.metrics.per_batch_history;
    assert_eq!(h.len(), 1);
    assert!(h[0].pruned);
    assert_eq!(h[0].levels.len(), 1);
    assert!(out.network.synapses.is_hard_pruned());
    let mut live: Vec<f64> = out.network.synapses.weights().iter().copied().filter(|w| *w > 0.0).collect();
    live.dedup();
    assert_eq!(live, h[0].levels);
}

#[test]
fn prune_steps_follow_the_warmup() {
    let data = band_dataset(3, 8);
    let s = settings(Mode::Compressed, schedule(12, 3, 2), 2);
    let out = pipeline::run(&s, &data, &data).unwrap();
    let h = &out.metrics.per_batch_history;
    assert_eq!(h.len(), 12);
    for r in h {
        assert_eq!(r.pruned, r.batch >= 3, "batch {}", r.batch);
        assert!((0.0..=1.0).contains(&r.connectivity));
    }
    assert!(h.windows(2).all(|w| w[0].presentations <= w[1].presentations));
    assert_eq!(h.last().unwrap().connectivity, connectivity(&out.network.synapses));
    assert_eq!(out.metrics.connectivity, connectivity(&out.network.synapses));
}

#[test]
fn baseline_equals_plain_stdp() {
    let data = band_dataset(3, 5);
    let s = settings(Mode::Baseline, schedule(3, 1, 5), 3);
    let pp = s.presentation;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Network::build(s.network, &mut rng).unwrap();
    let report = train(&mut net, &data, Mode::Baseline, &s.compression, &pp, &mut rng).unwrap();
    assert!(report.history.iter().all(|r| !r.pruned && r.levels.is_empty()));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut plain = Network::build(s.network, &mut rng).unwrap();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    for &i in &order {
        let rates = pixels_to_rates_scaled(&data[i].pixels[..], pp.rate_scale);
        plain.run_image(&rates, &pp, true, &mut rng).unwrap();
    }
    assert_eq!(net.synapses.weights(), plain.synapses.weights());
    assert_eq!(net.thetas(), plain.thetas());
}

#[test]
fn memorized_training_subset_is_classified_perfectly() {
    let data = band_dataset(3, 20);
    let mut s = settings(Mode::Baseline, schedule(1, 1, 60), 4);
    s.network = small_params(9);
    let out = pipeline::run(&s, &data, &data[..12]).unwrap();
    assert_eq!(out.metrics.accuracy, 1.0, "{:?}", out.labels);
}

#[test]
fn inference_passes_leave_weights_alone() {
    let data = band_dataset(3, 4);
    let s = settings(Mode::Baseline, schedule(1, 1, 12), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = Network::build(s.network, &mut rng).unwrap();
    train(&mut net, &data, Mode::Baseline, &s.compression, &s.presentation, &mut rng).unwrap();
    let (w, th) = (net.synapses.weights().to_vec(), net.thetas());
    let labels = assign_labels(&mut net, &data, &s.presentation, &mut rng).unwrap();
    let ev = evaluate(&mut net, &labels, &data, 3, &s.presentation, &mut rng).unwrap();
    assert_eq!(net.synapses.weights(), &w[..]);
    assert_eq!(net.thetas(), th);

    let recount = ev.predictions.iter().filter(|(t, p)| t == p).count() as f64 / data.len() as f64;
    assert_eq!(ev.accuracy, recount);

    // same network state, image and seed give the same answer
    let a = predict(&mut net.clone(), &labels, &data[0], 3, &s.presentation, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let b = predict(&mut net.clone(), &labels, &data[0], 3, &s.presentation, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn same_seed_same_csv() {
    let data = band_dataset(3, 6);
    let csv = |seed| {
        let s = settings(Mode::Compressed, schedule(3, 2, 6), seed);
        let out = pipeline::run(&s, &data, &data).unwrap();
        (
            report::summary_table(&s, &out.metrics, 0).to_csv(),
            report::history_table(&out.metrics.per_batch_history).to_csv(),
        )
    };
    assert_eq!(csv(7), csv(7));
}

#[test]
fn random_sparse_mode_starts_sparse() {
    let data = band_dataset(3, 4);
    let mut s = settings(Mode::RandomSparse, schedule(1, 1, 12), 6);
    s.random_connectivity = 0.4;
    let out = pipeline::run(&s, &data, &data).unwrap();
    let removed = out.network.synapses.removed().iter().filter(|r| **r).count();
    assert_eq!(removed, (0.6_f64 * 784.0 * 6.0).round() as usize);
    assert!(out.metrics.connectivity <= 0.4 + 1e-12);
}

#[test]
fn schedule_larger_than_data_is_rejected() {
    let data = band_dataset(3, 2);
    let s = settings(Mode::Compressed, schedule(4, 2, 5), 1);
    assert!(pipeline::run(&s, &data, &data).is_err());
    assert!(pipeline::run(&s, &data, &[]).is_err());
}

proptest! {
    #[test]
    fn positive_scaling_keeps_the_prediction(
        counts in proptest::collection::vec(0u32..20, 8),
        labels in proptest::collection::vec(proptest::option::of(0u8..4), 8),
        k in 0.01f64..100.0,
    ) {
        let labels = NeuronLabels(labels);
        let scores = class_scores(&labels, &counts, 4);
        let scaled: Vec<f64> = scores.iter().map(|s| s * k).collect();
        prop_assert_eq!(argmax_class(&scores), argmax_class(&scaled));
    }
}
