//! Critical-synapse classification, pruning and weight sharing.
//!
//! A synapse is critical when its learned weight lies strictly above the
//! pruning threshold. Non-critical synapses are zeroed between batches (soft
//! prune, still plastic) and removed for good after the last batch (hard
//! prune). Critical weights are then replaced by a few shared values: the
//! critical set is cut at equal-probability percentiles and every bucket takes
//! its mean. Two levels means one shared value; three levels splits at the
//! median, with weights equal to the median joining the lower bucket.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::SynapseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompressionConfig {
    pub pruning_threshold: f64,
    /// Conductance levels including zero.
    pub levels: usize,
    pub batch_size: usize,
    pub n_batches: usize,
    pub warmup_batches: usize,
    pub quantize_enabled: bool,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            pruning_threshold: 0.3,
            levels: 2,
            batch_size: 5000,
            n_batches: 12,
            warmup_batches: 3,
            quantize_enabled: true,
        }
    }
}

impl CompressionConfig {
    pub fn validate(&self, w_max: f64) -> Result<()> {
        if !(self.pruning_threshold >= 0.0 && self.pruning_threshold < w_max) {
            return Err(Error::param(
                "compression.pruning_threshold",
                format!("must lie in [0, {w_max})"),
            ));
        }
        if self.levels < 2 {
            return Err(Error::param("compression.levels", "need at least 2 levels"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("compression.batch_size", "must be > 0"));
        }
        if self.n_batches == 0 {
            return Err(Error::param("compression.n_batches", "must be > 0"));
        }
        if self.warmup_batches == 0 || self.warmup_batches > self.n_batches {
            return Err(Error::param(
                "compression.warmup_batches",
                "need 1 <= warmup_batches <= n_batches",
            ));
        }
        Ok(())
    }

    pub fn total_images(&self) -> usize {
        self.batch_size * self.n_batches
    }
}

/// Which synapses were critical at a classification step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticalMask {
    pub mask: Vec<bool>,
}

impl CriticalMask {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// True when every critical entry of `self` is also critical in `other`.
    pub fn is_subset_of(&self, other: &CriticalMask) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    fn check_shape(&self, synapses: &SynapseMatrix) -> Result<()> {
        if self.mask.len() != synapses.len() {
            return Err(Error::ShapeMismatch {
                expected: synapses.len(),
                actual: self.mask.len(),
            });
        }
        Ok(())
    }
}

/// Marks synapses with `w > threshold` that have not been removed. Also records
/// the critical count on the matrix for connectivity reporting.
pub fn classify(synapses: &mut SynapseMatrix, threshold: f64) -> CriticalMask {
    let mask: Vec<bool> = synapses
        .weights
        .iter()
        .zip(&synapses.removed)
        .map(|(w, r)| !*r && *w > threshold)
        .collect();
    let mask = CriticalMask { mask };
    synapses.last_critical = Some(mask.count());
    mask
}

/// Zeroes non-critical weights; they stay plastic.
pub fn soft_prune(synapses: &mut SynapseMatrix, mask: &CriticalMask) -> Result<()> {
    mask.check_shape(synapses)?;
    for (w, &keep) in synapses.weights.iter_mut().zip(&mask.mask) {
        if !keep {
            *w = 0.0;
        }
    }
    Ok(())
}

/// Permanently removes non-critical synapses. Allowed once per network.
pub fn hard_prune(synapses: &mut SynapseMatrix, mask: &CriticalMask) -> Result<()> {
    mask.check_shape(synapses)?;
    if synapses.hard_pruned {
        return Err(Error::AlreadyHardPruned);
    }
    for ((w, r), &keep) in synapses.weights.iter_mut().zip(synapses.removed.iter_mut()).zip(&mask.mask) {
        if !keep {
            *w = 0.0;
            *r = true;
        }
    }
    synapses.hard_pruned = true;
    Ok(())
}

/// Percentile with linear interpolation between order statistics, so the
/// 50th percentile of an even-sized set is the mean of the middle pair.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Shared values for a set of critical weights, and a bucket lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// Upper (inclusive) edges of every bucket but the last.
    pub edges: Vec<f64>,
    /// Mean weight of each bucket; `NaN` for an empty bucket.
    pub means: Vec<f64>,
}

impl Codebook {
    pub fn fit(values: &[f64], levels: usize) -> Option<Self> {
        if values.is_empty() || levels < 2 {
            return None;
        }
        let buckets = levels - 1;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let edges: Vec<f64> = (1..buckets)
            .map(|i| percentile(&sorted, i as f64 / buckets as f64))
            .collect();
        let mut sums = vec![0.0; buckets];
        let mut counts = vec![0usize; buckets];
        for &v in values {
            let b = bucket_of(&edges, v);
            sums[b] += v;
            counts[b] += 1;
        }
        let means = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect();
        Some(Self { edges, means })
    }

    pub fn lookup(&self, v: f64) -> f64 {
        self.means[bucket_of(&self.edges, v)]
    }

    /// Distinct shared values, ascending.
    pub fn levels(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.means.iter().copied().filter(|m| !m.is_nan()).collect();
        out.dedup();
        out
    }
}

fn bucket_of(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| v > e)
}

/// Replaces every critical weight by its bucket mean. Returns the shared
/// values, or `None` (and leaves everything untouched) for an empty critical
/// set.
pub fn quantize(synapses: &mut SynapseMatrix, mask: &CriticalMask, levels: usize) -> Result<Option<Vec<f64>>> {
    mask.check_shape(synapses)?;
    if levels < 2 {
        return Err(Error::param("levels", "need at least 2 levels"));
    }
    let critical: Vec<f64> = synapses
        .weights
        .iter()
        .zip(&mask.mask)
        .zip(&synapses.removed)
        .filter(|((_, m), r)| **m && !**r)
        .map(|((w, _), _)| *w)
        .collect();
    let Some(book) = Codebook::fit(&critical, levels) else {
        log::warn!("quantize: critical set is empty, nothing to share");
        return Ok(None);
    };
    for ((w, &m), &r) in synapses.weights.iter_mut().zip(&mask.mask).zip(&synapses.removed) {
        if m && !r {
            *w = book.lookup(*w);
        }
    }
    let shared = book.levels();
    synapses.shared_levels = Some(shared.clone());
    Ok(Some(shared))
}

/// Removes `round((1 - connectivity) * total)` synapses chosen uniformly at
/// random, before any training.
pub fn random_sparse_init<R: Rng + ?Sized>(synapses: &mut SynapseMatrix, connectivity: f64, rng: &mut R) -> Result<usize> {
    if !(connectivity > 0.0 && connectivity <= 1.0) {
        return Err(Error::param("connectivity", "must lie in (0, 1]"));
    }
    let total = synapses.len();
    let n_remove = ((1.0 - connectivity) * total as f64).round() as usize;
    for k in sample(rng, total, n_remove) {
        synapses.weights[k] = 0.0;
        synapses.removed[k] = true;
    }
    Ok(n_remove)
}

/// Fraction of possible input synapses that count as connections.
///
/// After the final hard prune (or for a network never classified) this is the
/// share of surviving synapses with non-zero weight. Between prune steps it is
/// the critical fraction from the latest classification.
pub fn connectivity(synapses: &SynapseMatrix) -> f64 {
    let total = synapses.len();
    if total == 0 {
        return 0.0;
    }
    let live = match (synapses.hard_pruned, synapses.last_critical) {
        (false, Some(c)) => c,
        _ => synapses.nonzero(),
    };
    live as f64 / total as f64
}
