//! Training schedule, neuron labeling, inference and metrics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compression::{self, classify, hard_prune, quantize, random_sparse_init, soft_prune, CompressionConfig};
use crate::encoding::{pixels_to_rates_scaled, LabeledImage};
use crate::error::{Error, Result};
use crate::network::{Network, NetworkParams, PresentationParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Plain STDP over every image, no pruning.
    Baseline,
    /// Batched soft prune / quantize, final hard prune.
    Compressed,
    /// Random synapses removed up front, then trained like the baseline.
    RandomSparse,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Compressed => "compressed",
            Mode::RandomSparse => "random-sparse",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    /// 1-based batch number.
    pub batch: usize,
    pub connectivity: f64,
    /// Shared weight values after this step (empty if not quantized).
    pub levels: Vec<f64>,
    pub pruned: bool,
    /// Presentations so far, re-presentations included.
    pub presentations: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub history: Vec<BatchRecord>,
    pub presentations: u64,
    pub images: usize,
}

/// Runs the batch schedule on `dataset`.
///
/// The first `n_batches * batch_size` images of a seeded shuffle are used.
/// In compressed mode, batches `warmup..=n_batches` each end with
/// classify + prune (+ quantize); the last of them hard-prunes.
pub fn train<R: Rng + ?Sized>(
    net: &mut Network,
    dataset: &[LabeledImage],
    mode: Mode,
    cc: &CompressionConfig,
    pp: &PresentationParams,
    rng: &mut R,
) -> Result<TrainReport> {
    cc.validate(net.params.stdp.w_max)?;
    pp.validate(net.params.dt)?;
    let total = cc.total_images();
    if dataset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if dataset.len() < total {
        return Err(Error::param(
            "compression.n_batches/batch_size",
            format!(
                "schedule needs {total} images but the training set has {}",
                dataset.len()
            ),
        ));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    order.truncate(total);

    let mut report = TrainReport::default();
    for (b, batch) in order.chunks(cc.batch_size).enumerate() {
        let batch_no = b + 1;
        for &idx in batch {
            let rates = pixels_to_rates_scaled(&dataset[idx].pixels[..], pp.rate_scale);
            let resp = net.run_image(&rates, pp, true, rng)?;
            report.presentations += u64::from(resp.attempts);
            report.images += 1;
        }

        let prune_step = mode == Mode::Compressed && batch_no >= cc.warmup_batches;
        let mut levels = Vec::new();
        if prune_step {
            let mask = classify(&mut net.synapses, cc.pruning_threshold);
            if batch_no == cc.n_batches {
                hard_prune(&mut net.synapses, &mask)?;
            } else {
                soft_prune(&mut net.synapses, &mask)?;
            }
            if cc.quantize_enabled {
                levels = quantize(&mut net.synapses, &mask, cc.levels)?.unwrap_or_default();
            }
        }
        let rec = BatchRecord {
            batch: batch_no,
            connectivity: compression::connectivity(&net.synapses),
            levels,
            pruned: prune_step,
            presentations: report.presentations,
        };
        log::info!(
            "{mode} batch {}/{}: connectivity {:.4}, presentations {}",
            rec.batch,
            cc.n_batches,
            rec.connectivity,
            rec.presentations
        );
        report.history.push(rec);
    }
    Ok(report)
}

/// Excitatory neuron labels; `None` for neurons that never responded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronLabels(pub Vec<Option<u8>>);

impl NeuronLabels {
    pub fn assigned(&self) -> usize {
        self.0.iter().filter(|l| l.is_some()).count()
    }
}

/// Labels from a `classes x neurons` matrix of mean responses. Ties go to the
/// lowest class id; all-zero columns stay unassigned.
pub fn labels_from_responses(responses: &[Vec<f64>]) -> NeuronLabels {
    let n_neurons = responses.first().map_or(0, Vec::len);
    let labels = (0..n_neurons)
        .map(|j| {
            let mut best: Option<(usize, f64)> = None;
            for (c, row) in responses.iter().enumerate() {
                let r = row[j];
                if r > 0.0 && best.map_or(true, |(_, b)| r > b) {
                    best = Some((c, r));
                }
            }
            best.map(|(c, _)| c as u8)
        })
        .collect();
    NeuronLabels(labels)
}

fn n_classes(images: &[LabeledImage]) -> usize {
    images.iter().map(|im| usize::from(im.label)).max().map_or(0, |m| m + 1)
}

/// Presents every image with learning off and labels each neuron by the class
/// with its highest mean spike count.
pub fn assign_labels<R: Rng + ?Sized>(
    net: &mut Network,
    images: &[LabeledImage],
    pp: &PresentationParams,
    rng: &mut R,
) -> Result<NeuronLabels> {
    if images.is_empty() {
        return Err(Error::Empty("labeling set"));
    }
    let classes = n_classes(images);
    let n_exc = net.topology().n_exc;
    let mut sums = vec![vec![0.0; n_exc]; classes];
    let mut per_class = vec![0usize; classes];
    for img in images {
        let rates = pixels_to_rates_scaled(&img.pixels[..], pp.rate_scale);
        let resp = net.run_image(&rates, pp, false, rng)?;
        let c = usize::from(img.label);
        per_class[c] += 1;
        for (s, &k) in sums[c].iter_mut().zip(&resp.counts) {
            *s += f64::from(k);
        }
    }
    for (row, &n) in sums.iter_mut().zip(&per_class) {
        if n > 0 {
            row.iter_mut().for_each(|s| *s /= n as f64);
        }
    }
    let mut labels = labels_from_responses(&sums);
    for (j, l) in labels.0.iter_mut().enumerate() {
        if net.synapses.is_dead(j) {
            *l = None;
        }
    }
    if labels.assigned() == 0 {
        return Err(Error::Untrained);
    }
    Ok(labels)
}

/// Per-class mean spike count over the neurons carrying that label.
pub fn class_scores(labels: &NeuronLabels, counts: &[u32], n_classes: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n_classes];
    let mut members = vec![0usize; n_classes];
    for (l, &k) in labels.0.iter().zip(counts) {
        if let Some(c) = l {
            let c = usize::from(*c);
            if c < n_classes {
                sum[c] += f64::from(k);
                members[c] += 1;
            }
        }
    }
    sum.iter()
        .zip(&members)
        .map(|(s, &m)| if m == 0 { 0.0 } else { s / m as f64 })
        .collect()
}

/// Highest-scoring class, lowest id on ties.
pub fn argmax_class(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub class: u8,
    /// No labeled neuron fired; the class is the lowest id by convention.
    pub low_confidence: bool,
    pub spikes: u64,
}

pub fn predict<R: Rng + ?Sized>(
    net: &mut Network,
    labels: &NeuronLabels,
    image: &LabeledImage,
    n_classes: usize,
    pp: &PresentationParams,
    rng: &mut R,
) -> Result<Prediction> {
    let rates = pixels_to_rates_scaled(&image.pixels[..], pp.rate_scale);
    let resp = net.run_image(&rates, pp, false, rng)?;
    let scores = class_scores(labels, &resp.counts, n_classes);
    let low_confidence = scores.iter().all(|s| *s == 0.0);
    if low_confidence {
        log::debug!("no labeled neuron responded; predicting class 0");
    }
    Ok(Prediction {
        class: argmax_class(&scores) as u8,
        low_confidence,
        spikes: resp.total_spikes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub total_spikes: u64,
    /// `(true label, predicted)` per test image, in order.
    pub predictions: Vec<(u8, u8)>,
    pub low_confidence: usize,
}

pub fn evaluate<R: Rng + ?Sized>(
    net: &mut Network,
    labels: &NeuronLabels,
    test: &[LabeledImage],
    n_classes: usize,
    pp: &PresentationParams,
    rng: &mut R,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut predictions = Vec::with_capacity(test.len());
    let mut total_spikes = 0;
    let mut low = 0;
    for img in test {
        let p = predict(net, labels, img, n_classes, pp, rng)?;
        total_spikes += p.spikes;
        low += usize::from(p.low_confidence);
        predictions.push((img.label, p.class));
    }
    let correct = predictions.iter().filter(|(t, p)| t == p).count();
    Ok(Evaluation {
        accuracy: correct as f64 / test.len() as f64,
        total_spikes,
        predictions,
        low_confidence: low,
    })
}

/// Possible synapses divided by live ones.
pub fn area_proxy(net: &Network) -> Result<f64> {
    let c = compression::connectivity(&net.synapses);
    if c == 0.0 {
        return Err(Error::param("connectivity", "no surviving synapses"));
    }
    Ok(1.0 / c)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRecord {
    pub accuracy: f64,
    pub connectivity: f64,
    pub total_test_exc_spikes: u64,
    pub per_batch_history: Vec<BatchRecord>,
    pub training_presentations: u64,
    pub labeled_neurons: usize,
}

/// Everything one end-to-end run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub seed: u64,
    pub mode: Mode,
    pub network: NetworkParams,
    pub presentation: PresentationParams,
    pub compression: CompressionConfig,
    /// Target connectivity for `random-sparse` mode.
    pub random_connectivity: f64,
    /// Images used for labeling, taken from the trained subset; 0 means all.
    pub label_images: usize,
    /// Test images evaluated; 0 means all.
    pub test_images: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: Mode::Compressed,
            network: NetworkParams::default(),
            presentation: PresentationParams::default(),
            compression: CompressionConfig::default(),
            random_connectivity: 1.0,
            label_images: 0,
            test_images: 0,
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.presentation.validate(self.network.dt)?;
        self.compression.validate(self.network.stdp.w_max)?;
        if self.mode == Mode::RandomSparse && !(self.random_connectivity > 0.0 && self.random_connectivity <= 1.0) {
            return Err(Error::param("random_connectivity", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

pub struct RunOutcome {
    pub network: Network,
    pub labels: NeuronLabels,
    pub metrics: MetricsRecord,
    pub evaluation: Evaluation,
}

/// Build, train, label and test with a single seeded random stream.
pub fn run(settings: &RunSettings, train_set: &[LabeledImage], test_set: &[LabeledImage]) -> Result<RunOutcome> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut net = Network::build(settings.network, &mut rng)?;
    if settings.mode == Mode::RandomSparse {
        random_sparse_init(&mut net.synapses, settings.random_connectivity, &mut rng)?;
    }
    let pp = settings.presentation;
    let report = train(&mut net, train_set, settings.mode, &settings.compression, &pp, &mut rng)?;

    // Labeling walks the training set in file order, as many images as training used.
    let used = settings.compression.total_images().min(train_set.len());
    let n_label = if settings.label_images == 0 { used } else { settings.label_images.min(used) };
    let label_set = &train_set[..n_label];
    let labels = assign_labels(&mut net, label_set, &pp, &mut rng)?;

    let n_test = if settings.test_images == 0 { test_set.len() } else { settings.test_images.min(test_set.len()) };
    let classes = n_classes(train_set).max(n_classes(test_set));
    let evaluation = evaluate(&mut net, &labels, &test_set[..n_test], classes, &pp, &mut rng)?;

    let metrics = MetricsRecord {
        accuracy: evaluation.accuracy,
        connectivity: compression::connectivity(&net.synapses),
        total_test_exc_spikes: evaluation.total_spikes,
        per_batch_history: report.history,
        training_presentations: report.presentations,
        labeled_neurons: labels.assigned(),
    };
    log::info!(
        "{} run done: accuracy {:.4}, connectivity {:.4}, test spikes {}",
        settings.mode,
        metrics.accuracy,
        metrics.connectivity,
        metrics.total_test_exc_spikes
    );
    Ok(RunOutcome {
        network: net,
        labels,
        metrics,
        evaluation,
    })
}
