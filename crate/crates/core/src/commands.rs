//! The work behind each CLI subcommand. Output files go to the configured
//! output directory:
//!
//! | command          | files                                            |
//! |------------------|--------------------------------------------------|
//! | `train`          | `checkpoint.spk`, `history.csv`, `summary.csv`   |
//! | `evaluate`       | `evaluation.csv` (summary schema)                |
//! | `sweep`          | `sweep.csv`                                      |
//! | `compare-sparse` | `compare.csv`                                    |
//! | `export-weights` | `weights.pgm`                                    |

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{config_hash, Checkpoint};
use crate::config::{DataFormat, RunConfig};
use crate::encoding::{LabeledImage, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::idx::load_idx;
use crate::pipeline::{self, MetricsRecord, Mode, RunSettings};
use crate::report::{self, GrayImage, Table, COMPARE_COLUMNS, SWEEP_COLUMNS};

pub const CHECKPOINT_FILE: &str = "checkpoint.spk";
/// Largest gap allowed between a compare target and the pruned run's connectivity.
pub const MATCH_TOLERANCE: f64 = 0.03;
pub const MAX_PROBES: usize = 8;

pub struct Data {
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

fn path_of<'a>(p: &'a Option<PathBuf>, field: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config {
        field: field.into(),
        reason: "missing".into(),
    })
}

pub fn load_data(cfg: &RunConfig) -> Result<Data> {
    let d = &cfg.data;
    match d.format {
        DataFormat::Idx => Ok(Data {
            train: load_idx(path_of(&d.train_images, "data.train_images")?, path_of(&d.train_labels, "data.train_labels")?)?,
            test: load_idx(path_of(&d.test_images, "data.test_images")?, path_of(&d.test_labels, "data.test_labels")?)?,
        }),
        #[cfg(feature = "images")]
        DataFormat::ImageDir => {
            let (train, test) = crate::preprocess::load_balanced(
                path_of(&d.image_root, "data.image_root")?,
                d.test_fraction,
                cfg.seed,
                d.train_per_class,
                d.test_per_class,
                d.cache.as_deref(),
            )?;
            Ok(Data { train, test })
        }
        #[cfg(not(feature = "images"))]
        DataFormat::ImageDir => Err(Error::Config {
            field: "data.format".into(),
            reason: "built without image support".into(),
        }),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.output.dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn settings_hash(settings: &RunSettings) -> u64 {
    config_hash(&toml::to_string(settings).unwrap_or_default())
}

pub struct TrainOutput {
    pub settings: RunSettings,
    pub metrics: MetricsRecord,
    pub checkpoint: PathBuf,
}

/// Trains, labels and tests one configuration.
pub fn cmd_train(cfg: &RunConfig, data: &Data) -> Result<TrainOutput> {
    let settings = cfg.settings();
    let outcome = pipeline::run(&settings, &data.train, &data.test)?;
    let dir = out_dir(cfg)?;
    let checkpoint = dir.join(CHECKPOINT_FILE);
    Checkpoint::from_network(&settings, &outcome.network, Some(&outcome.labels)).save(&checkpoint)?;
    report::history_table(&outcome.metrics.per_batch_history).write(&dir.join("history.csv"))?;
    report::summary_table(&settings, &outcome.metrics, settings_hash(&settings)).write(&dir.join("summary.csv"))?;
    Ok(TrainOutput {
        settings,
        metrics: outcome.metrics,
        checkpoint,
    })
}

/// Tests a saved network on the configured test set. Networks saved without
/// labels are labeled first on the configured training images.
pub fn cmd_evaluate(cfg: &RunConfig, data: &Data, checkpoint: &Path) -> Result<MetricsRecord> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut net = ck.to_network()?;
    let pp = ck.settings.presentation;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = match &ck.labels {
        Some(l) => l.clone(),
        None => {
            let n = match cfg.run.label_images {
                0 => data.train.len(),
                n => n.min(data.train.len()),
            };
            pipeline::assign_labels(&mut net, &data.train[..n], &pp, &mut rng)?
        }
    };
    let n_test = match cfg.run.test_images {
        0 => data.test.len(),
        n => n.min(data.test.len()),
    };
    let classes = data
        .train
        .iter()
        .chain(&data.test)
        .map(|im| usize::from(im.label) + 1)
        .max()
        .unwrap_or(0);
    let ev = pipeline::evaluate(&mut net, &labels, &data.test[..n_test], classes, &pp, &mut rng)?;
    let metrics = MetricsRecord {
        accuracy: ev.accuracy,
        connectivity: crate::compression::connectivity(&net.synapses),
        total_test_exc_spikes: ev.total_spikes,
        per_batch_history: Vec::new(),
        training_presentations: 0,
        labeled_neurons: labels.assigned(),
    };
    let dir = out_dir(cfg)?;
    let mut table = report::summary_table(&ck.settings, &metrics, settings_hash(&ck.settings));
    table.schema = "evaluation";
    table.write(&dir.join("evaluation.csv"))?;
    Ok(metrics)
}

/// Runs `f` over `jobs` on up to `workers` threads, keeping job order.
pub fn run_parallel<J: Sync, T: Send>(jobs: &[J], workers: usize, f: impl Fn(&J) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<T>>> = Mutex::new(jobs.iter().map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = f(job);
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Sorts thresholds and drops duplicates, warning about them.
pub fn dedupe_thresholds(thresholds: &[f64]) -> Vec<f64> {
    let mut t = thresholds.to_vec();
    t.sort_by(f64::total_cmp);
    let before = t.len();
    t.dedup();
    if t.len() != before {
        log::warn!("dropped {} duplicate threshold(s)", before - t.len());
    }
    t
}

/// Settings for one pruning threshold; zero means the unpruned baseline.
pub fn threshold_settings(base: &RunSettings, threshold: f64) -> RunSettings {
    let mut s = base.clone();
    s.compression.pruning_threshold = threshold;
    s.mode = if threshold == 0.0 { Mode::Baseline } else { Mode::Compressed };
    s
}

fn fail_cell(e: &Error) -> String {
    format!("failed: {e}")
}

/// One run per threshold. The CSV is written even when some runs fail, in
/// which case the first error is returned after writing.
pub fn cmd_sweep(cfg: &RunConfig, data: &Data, thresholds: &[f64]) -> Result<Table> {
    if thresholds.is_empty() {
        return Err(Error::Config {
            field: "thresholds".into(),
            reason: "empty list".into(),
        });
    }
    let thresholds = dedupe_thresholds(thresholds);
    let base = cfg.settings();
    let results = run_parallel(&thresholds, cfg.output.workers, |&t| {
        pipeline::run(&threshold_settings(&base, t), &data.train, &data.test).map(|o| o.metrics)
    });
    let mut table = Table::new("sweep", &SWEEP_COLUMNS);
    let mut first_err = None;
    for (t, r) in thresholds.iter().zip(results) {
        match r {
            Ok(m) => table.push(vec![
                t.to_string(),
                m.connectivity.to_string(),
                m.accuracy.to_string(),
                m.total_test_exc_spikes.to_string(),
                "ok".into(),
            ]),
            Err(e) => {
                table.push(vec![t.to_string(), String::new(), String::new(), String::new(), fail_cell(&e)]);
                first_err.get_or_insert(e);
            }
        }
    }
    table.write(&out_dir(cfg)?.join("sweep.csv"))?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(table),
    }
}

/// Result of searching for a pruning threshold that lands on a connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct Bisection {
    pub threshold: f64,
    pub metrics: Option<MetricsRecord>,
    pub probes: usize,
}

/// Bisects the pruning threshold until the final connectivity is within
/// [`MATCH_TOLERANCE`] of `target`, starting from `start`. `probe` runs one
/// configuration and returns its metrics. Connectivity falls as the threshold
/// rises.
pub fn bisect_threshold(
    target: f64,
    start: f64,
    w_max: f64,
    mut probe: impl FnMut(f64) -> Result<MetricsRecord>,
) -> Result<Bisection> {
    let (mut lo, mut hi) = (0.0, w_max);
    let mut t = start.clamp(0.0, w_max * 0.999);
    for probes in 1..=MAX_PROBES {
        let m = probe(t)?;
        let c = m.connectivity;
        log::info!("probe {probes}: threshold {t} -> connectivity {c:.4} (target {target})");
        if (c - target).abs() <= MATCH_TOLERANCE {
            return Ok(Bisection {
                threshold: t,
                metrics: Some(m),
                probes,
            });
        }
        if c > target {
            lo = t;
        } else {
            hi = t;
        }
        t = 0.5 * (lo + hi);
    }
    Ok(Bisection {
        threshold: t,
        metrics: None,
        probes: MAX_PROBES,
    })
}

/// Pairs pruning-while-training with random initial sparsity at each target.
pub fn cmd_compare_sparse(cfg: &RunConfig, data: &Data, targets: &[f64]) -> Result<Table> {
    if let Some(t) = targets.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::Config {
            field: "targets".into(),
            reason: format!("{t} is outside (0, 1]"),
        });
    }
    let base = cfg.settings();
    let run = |s: RunSettings| pipeline::run(&s, &data.train, &data.test).map(|o| o.metrics);
    let rows = run_parallel(targets, cfg.output.workers, |&target| -> Result<Vec<String>> {
        let found = if target == 1.0 {
            Bisection {
                threshold: 0.0,
                metrics: Some(run(threshold_settings(&base, 0.0))?),
                probes: 1,
            }
        } else {
            bisect_threshold(target, base.compression.pruning_threshold, base.network.stdp.w_max, |t| {
                run(threshold_settings(&base, t))
            })?
        };
        let Some(pruned) = found.metrics else {
            log::warn!("no threshold reached connectivity {target} within {MAX_PROBES} probes; skipping");
            let mut row = vec![target.to_string(), found.threshold.to_string()];
            row.extend(std::iter::repeat(String::new()).take(4));
            row.extend([found.probes.to_string(), "no-bracket".into()]);
            return Ok(row);
        };
        let mut rs = base.clone();
        rs.mode = Mode::RandomSparse;
        rs.random_connectivity = target;
        let random = run(rs)?;
        Ok(vec![
            target.to_string(),
            found.threshold.to_string(),
            pruned.connectivity.to_string(),
            pruned.accuracy.to_string(),
            random.connectivity.to_string(),
            random.accuracy.to_string(),
            found.probes.to_string(),
            "ok".into(),
        ])
    });
    let mut table = Table::new("compare", &COMPARE_COLUMNS);
    let mut first_err = None;
    for (&target, r) in targets.iter().zip(rows) {
        match r {
            Ok(row) => table.push(row),
            Err(e) => {
                let mut row = vec![target.to_string()];
                row.extend(std::iter::repeat(String::new()).take(6));
                row.push(fail_cell(&e));
                table.push(row);
                first_err.get_or_insert(e);
            }
        }
    }
    table.write(&out_dir(cfg)?.join("compare.csv"))?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(table),
    }
}

/// Writes the input weights of a saved network as a PGM grid.
pub fn cmd_export_weights(checkpoint: &Path, out: &Path) -> Result<GrayImage> {
    let ck = Checkpoint::load(checkpoint)?;
    let side = (ck.synapses.n_input() as f64).sqrt().round() as usize;
    let side = if side * side == ck.synapses.n_input() { side } else { IMAGE_SIDE };
    let grid = report::weight_grid(&ck.synapses, side)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    grid.write_pgm(out)?;
    Ok(grid)
}
