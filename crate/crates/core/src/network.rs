//! Two-layer excitatory/inhibitory network driven by an input layer.
//!
//! Input neurons connect to every excitatory neuron through plastic synapses.
//! Excitatory neuron `i` drives only inhibitory neuron `i`, which in turn
//! inhibits every excitatory neuron except `i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{RateVector, IMAGE_PIXELS};
use crate::error::{Error, Result};
use crate::neuron::{Integrator, LifParams, Population};
use crate::plasticity::{apply_post_spike, PreTraces, StdpParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Topology {
    pub n_input: usize,
    pub n_exc: usize,
    /// Always equal to `n_exc`; kept explicit for checkpoints and reports.
    pub n_inh: usize,
    pub w_exc_to_inh: f64,
    pub w_inh_to_exc: f64,
}

impl Default for Topology {
    fn default() -> Self {
        Self::new(IMAGE_PIXELS, 100)
    }
}

impl Topology {
    pub fn new(n_input: usize, n_exc: usize) -> Self {
        Self {
            n_input,
            n_exc,
            n_inh: n_exc,
            w_exc_to_inh: 10.4,
            w_inh_to_exc: 17.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_input == 0 {
            return Err(Error::param("topology.n_input", "must be > 0"));
        }
        if self.n_exc == 0 {
            return Err(Error::param("topology.n_exc", "must be > 0"));
        }
        if self.n_inh != self.n_exc {
            return Err(Error::param("topology.n_inh", "must equal n_exc"));
        }
        if !(self.w_exc_to_inh >= 0.0 && self.w_inh_to_exc >= 0.0) {
            return Err(Error::param("topology.w_*", "fixed weights must be >= 0"));
        }
        Ok(())
    }

    /// Excitatory neurons inhibited by inhibitory neuron `inh`.
    pub fn inhibitory_targets(&self, inh: usize) -> impl Iterator<Item = usize> {
        (0..self.n_exc).filter(move |&j| j != inh)
    }
}

/// Input-to-excitatory weights, stored one contiguous column per
/// excitatory neuron (`index = post * n_input + pre`).
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseMatrix {
    n_input: usize,
    n_exc: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) removed: Vec<bool>,
    pub(crate) shared_levels: Option<Vec<f64>>,
    pub(crate) hard_pruned: bool,
    /// Size of the critical set at the most recent classification.
    pub(crate) last_critical: Option<usize>,
}

impl SynapseMatrix {
    pub fn filled(n_input: usize, n_exc: usize, value: f64) -> Self {
        Self {
            n_input,
            n_exc,
            weights: vec![value; n_input * n_exc],
            removed: vec![false; n_input * n_exc],
            shared_levels: None,
            hard_pruned: false,
            last_critical: None,
        }
    }

    /// Builds a matrix from column-major weights (one column per neuron).
    pub fn from_columns(n_input: usize, n_exc: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n_input * n_exc {
            return Err(Error::ShapeMismatch {
                expected: n_input * n_exc,
                actual: weights.len(),
            });
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::NegativeWeight(w));
        }
        Ok(Self {
            weights,
            ..Self::filled(n_input, n_exc, 0.0)
        })
    }

    pub fn uniform<R: Rng + ?Sized>(n_input: usize, n_exc: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let weights = (0..n_input * n_exc).map(|_| rng.gen_range(lo..hi)).collect();
        Self {
            weights,
            ..Self::filled(n_input, n_exc, 0.0)
        }
    }

    pub fn n_input(&self) -> usize {
        self.n_input
    }

    pub fn n_exc(&self) -> usize {
        self.n_exc
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn index(&self, pre: usize, post: usize) -> usize {
        post * self.n_input + pre
    }

    pub fn get(&self, pre: usize, post: usize) -> f64 {
        self.weights[self.index(pre, post)]
    }

    /// Sets a weight; removed synapses stay at zero.
    pub fn set(&mut self, pre: usize, post: usize, w: f64) {
        let k = self.index(pre, post);
        if !self.removed[k] {
            self.weights[k] = w;
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn removed(&self) -> &[bool] {
        &self.removed
    }

    pub fn column(&self, post: usize) -> &[f64] {
        &self.weights[post * self.n_input..(post + 1) * self.n_input]
    }

    pub fn shared_levels(&self) -> Option<&[f64]> {
        self.shared_levels.as_deref()
    }

    pub fn is_hard_pruned(&self) -> bool {
        self.hard_pruned
    }

    pub fn last_critical(&self) -> Option<usize> {
        self.last_critical
    }

    pub fn surviving(&self) -> usize {
        self.removed.iter().filter(|r| !**r).count()
    }

    pub fn nonzero(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.removed)
            .filter(|(w, r)| !**r && **w > 0.0)
            .count()
    }

    /// A neuron whose whole input column is removed can never fire.
    pub fn is_dead(&self, post: usize) -> bool {
        self.removed[post * self.n_input..(post + 1) * self.n_input]
            .iter()
            .all(|r| *r)
    }

    /// Rescales every column so its weights sum to `total`, capped at
    /// `w_max`. All-zero columns are left alone.
    pub fn normalize_columns(&mut self, total: f64, w_max: f64) {
        for col in self.weights.chunks_mut(self.n_input) {
            let sum: f64 = col.iter().sum();
            if sum > 0.0 {
                let k = total / sum;
                for w in col.iter_mut() {
                    *w = (*w * k).min(w_max);
                }
            }
        }
    }

    fn column_and_mask_mut(&mut self, post: usize) -> (&mut [f64], &[bool]) {
        let range = post * self.n_input..(post + 1) * self.n_input;
        (&mut self.weights[range.clone()], &self.removed[range])
    }

    pub(crate) fn restore(
        n_input: usize,
        n_exc: usize,
        weights: Vec<f64>,
        removed: Vec<bool>,
        shared_levels: Option<Vec<f64>>,
        hard_pruned: bool,
        last_critical: Option<usize>,
    ) -> Self {
        Self {
            n_input,
            n_exc,
            weights,
            removed,
            shared_levels,
            hard_pruned,
            last_critical,
        }
    }
}

/// Everything needed to build and step a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkParams {
    pub topology: Topology,
    pub exc: LifParams,
    pub inh: LifParams,
    pub stdp: StdpParams,
    /// Integration step, ms.
    pub dt: f64,
    pub init_w_min: f64,
    pub init_w_max: f64,
    /// When set, each neuron's input weights are rescaled to this sum before
    /// every training image.
    pub weight_sum: Option<f64>,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            topology: Topology::default(),
            exc: LifParams::excitatory(),
            inh: LifParams::inhibitory(),
            stdp: StdpParams::default(),
            dt: 0.5,
            init_w_min: 0.0,
            init_w_max: 0.3,
            weight_sum: None,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.exc.validate()?;
        self.inh.validate()?;
        self.stdp.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("network.dt", "must be positive"));
        }
        if !(0.0 <= self.init_w_min && self.init_w_min < self.init_w_max && self.init_w_max <= self.stdp.w_max) {
            return Err(Error::param(
                "network.init_w_min/init_w_max",
                "need 0 <= min < max <= w_max",
            ));
        }
        if let Some(t) = self.weight_sum {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::param("network.weight_sum", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Source of input-layer spikes, queried once per time step.
pub trait InputSource {
    /// Appends the indices of inputs firing in the step starting at `t` (ms).
    fn spikes(&mut self, t: f64, dt: f64, out: &mut Vec<usize>);
}

/// Poisson input: each input fires independently with probability
/// `rate * dt` per step. Gaps between spikes are drawn directly from the
/// matching geometric distribution, so quiet steps cost no random draws.
pub struct PoissonInput<'a, R: ?Sized> {
    inputs: Vec<usize>,
    log_miss: Vec<f64>,
    next: Vec<u64>,
    step: u64,
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> PoissonInput<'a, R> {
    pub fn new(rates: &RateVector, dt: f64, rng: &'a mut R) -> Result<Self> {
        crate::encoding::check_poisson_step(rates, dt)?;
        let (inputs, log_miss): (Vec<usize>, Vec<f64>) = rates
            .0
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > 0.0)
            .map(|(i, r)| (i, (-r * dt / 1000.0).ln_1p()))
            .unzip();
        let next = log_miss.iter().map(|&lm| geometric(rng, lm)).collect();
        Ok(Self {
            inputs,
            log_miss,
            next,
            step: 0,
            rng,
        })
    }
}

/// Failures before the first success of a Bernoulli process with
/// `ln(1 - p) = log_miss`.
#[inline]
fn geometric<R: Rng + ?Sized>(rng: &mut R, log_miss: f64) -> u64 {
    let u = 1.0 - rng.gen::<f64>();
    let k = (u.ln() / log_miss).floor();
    if k >= u64::MAX as f64 {
        u64::MAX
    } else {
        k as u64
    }
}

impl<R: Rng + ?Sized> InputSource for PoissonInput<'_, R> {
    fn spikes(&mut self, _t: f64, _dt: f64, out: &mut Vec<usize>) {
        for k in 0..self.inputs.len() {
            if self.next[k] == self.step {
                out.push(self.inputs[k]);
                self.next[k] = self.step.saturating_add(1).saturating_add(geometric(self.rng, self.log_miss[k]));
            }
        }
        self.step += 1;
    }
}

/// Fixed spike times, relative to the start of the presentation.
#[derive(Debug, Clone, Default)]
pub struct ScriptedInput {
    events: Vec<(f64, usize)>,
    cursor: usize,
    origin: Option<f64>,
}

impl ScriptedInput {
    pub fn new(mut events: Vec<(f64, usize)>) -> Self {
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            events,
            cursor: 0,
            origin: None,
        }
    }
}

impl InputSource for ScriptedInput {
    fn spikes(&mut self, t: f64, dt: f64, out: &mut Vec<usize>) {
        let origin = *self.origin.get_or_insert(t);
        let local = t - origin;
        while let Some(&(at, i)) = self.events.get(self.cursor) {
            if at >= local + dt - 1e-9 {
                break;
            }
            if at >= local - 1e-9 {
                out.push(i);
            }
            self.cursor += 1;
        }
    }
}

pub struct Silent;

impl InputSource for Silent {
    fn spikes(&mut self, _t: f64, _dt: f64, _out: &mut Vec<usize>) {}
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PresentationResult {
    pub exc_spike_counts: Vec<u32>,
    pub total_exc_spikes: u64,
}

/// Stimulus and rest windows, plus the re-presentation rule for quiet images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PresentationParams {
    pub stimulus_ms: f64,
    pub rest_ms: f64,
    /// Hz per pixel intensity level.
    pub rate_scale: f64,
    /// Minimum excitatory spikes for a presentation to count.
    pub min_spikes: u32,
    /// Rate added to a full-intensity pixel on each re-presentation.
    pub boost_hz: f64,
    pub max_boosts: u32,
}

impl Default for PresentationParams {
    fn default() -> Self {
        Self {
            stimulus_ms: 350.0,
            rest_ms: 150.0,
            rate_scale: crate::encoding::DEFAULT_RATE_SCALE,
            min_spikes: 5,
            boost_hz: 32.0,
            max_boosts: 16,
        }
    }
}

impl PresentationParams {
    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.stimulus_ms > 0.0) {
            return Err(Error::param("presentation.stimulus_ms", "must be > 0"));
        }
        if !(self.rest_ms >= 0.0) {
            return Err(Error::param("presentation.rest_ms", "must be >= 0"));
        }
        if !(self.rate_scale >= 0.0 && self.boost_hz >= 0.0) {
            return Err(Error::param("presentation.rate_scale/boost_hz", "must be >= 0"));
        }
        let top = 255.0 * self.rate_scale + f64::from(self.max_boosts) * self.boost_hz;
        if top * dt / 1000.0 >= 0.5 {
            return Err(Error::param(
                "presentation.max_boosts",
                format!("boosted rate {top} Hz is too high for dt = {dt} ms"),
            ));
        }
        Ok(())
    }

    fn boost_factor(&self, level: u32) -> f64 {
        let full = 255.0 * self.rate_scale;
        if full == 0.0 {
            return 1.0;
        }
        1.0 + f64::from(level) * self.boost_hz / full
    }
}

/// Outcome of showing one image, re-presentations included.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ImageResponse {
    /// Counts from the final (accepted) stimulus window.
    pub counts: Vec<u32>,
    /// All excitatory spikes emitted over every attempt and rest window.
    pub total_spikes: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub params: NetworkParams,
    pub synapses: SynapseMatrix,
    pub exc: Population,
    pub inh: Population,
    traces: PreTraces,
    step_index: u64,
    input_buf: Vec<usize>,
    exc_fired: Vec<usize>,
    inh_fired: Vec<usize>,
    trace_buf: Vec<f64>,
}

impl Network {
    /// Fully connected network with i.i.d. uniform initial weights.
    pub fn build<R: Rng + ?Sized>(params: NetworkParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let topo = params.topology;
        let synapses =
            SynapseMatrix::uniform(topo.n_input, topo.n_exc, params.init_w_min, params.init_w_max, rng);
        Self::with_synapses(params, synapses)
    }

    pub fn with_synapses(params: NetworkParams, synapses: SynapseMatrix) -> Result<Self> {
        params.validate()?;
        let topo = params.topology;
        if synapses.n_input() != topo.n_input || synapses.n_exc() != topo.n_exc {
            return Err(Error::ShapeMismatch {
                expected: topo.n_input * topo.n_exc,
                actual: synapses.len(),
            });
        }
        Ok(Self {
            exc: Population::at_rest(Integrator::new(params.exc, params.dt)?, topo.n_exc),
            inh: Population::at_rest(Integrator::new(params.inh, params.dt)?, topo.n_inh),
            traces: PreTraces::new(topo.n_input, params.stdp.tau),
            step_index: 0,
            input_buf: Vec::new(),
            exc_fired: Vec::new(),
            inh_fired: Vec::new(),
            trace_buf: Vec::with_capacity(topo.n_input),
            params,
            synapses,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.params.topology
    }

    /// Simulation clock in ms.
    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.params.dt
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.exc.theta.clone()
    }

    pub fn set_thetas(&mut self, thetas: &[f64]) -> Result<()> {
        if thetas.len() != self.exc.len() {
            return Err(Error::ShapeMismatch {
                expected: self.exc.len(),
                actual: thetas.len(),
            });
        }
        self.exc.theta.copy_from_slice(thetas);
        Ok(())
    }

    pub fn traces(&self) -> &PreTraces {
        &self.traces
    }

    fn steps_for(&self, duration: f64) -> Result<u64> {
        let steps = (duration / self.params.dt).round();
        if !(duration >= 0.0) || (steps * self.params.dt - duration).abs() > 1e-6 * self.params.dt.max(1.0) {
            return Err(Error::param(
                "duration",
                format!("{duration} ms is not a non-negative multiple of dt = {}", self.params.dt),
            ));
        }
        Ok(steps as u64)
    }

    /// Runs `duration` ms of input. With `learning` set, STDP and homeostasis
    /// are active; otherwise weights and thresholds are left bit-identical.
    pub fn present(
        &mut self,
        source: &mut dyn InputSource,
        duration: f64,
        learning: bool,
    ) -> Result<PresentationResult> {
        if !(duration > 0.0) {
            return Err(Error::param("duration", "must be > 0"));
        }
        let steps = self.steps_for(duration)?;
        let mut counts = vec![0u32; self.params.topology.n_exc];
        let mut total = 0u64;
        for _ in 0..steps {
            total += self.advance(source, learning, &mut counts)?;
        }
        Ok(PresentationResult {
            exc_spike_counts: counts,
            total_exc_spikes: total,
        })
    }

    /// Lets the network settle without input, then clears presynaptic traces.
    /// Returns the number of excitatory spikes emitted while settling.
    pub fn rest(&mut self, duration: f64, learning: bool) -> Result<u64> {
        let steps = self.steps_for(duration)?;
        let mut counts = vec![0u32; self.params.topology.n_exc];
        let mut total = 0;
        for _ in 0..steps {
            total += self.advance(&mut Silent, learning, &mut counts)?;
        }
        self.traces.clear();
        Ok(total)
    }

    /// Presents one rate-coded image, followed by a rest window. Quiet
    /// presentations are repeated with boosted rates until `min_spikes` is
    /// reached or the boost budget runs out.
    pub fn run_image<R: Rng + ?Sized>(
        &mut self,
        rates: &RateVector,
        pp: &PresentationParams,
        learning: bool,
        rng: &mut R,
    ) -> Result<ImageResponse> {
        if let (true, Some(t)) = (learning, self.params.weight_sum) {
            self.synapses.normalize_columns(t, self.params.stdp.w_max);
        }
        let mut total = 0u64;
        let mut level = 0u32;
        loop {
            let boosted = rates.scaled(pp.boost_factor(level));
            let mut src = PoissonInput::new(&boosted, self.params.dt, rng)?;
            let res = self.present(&mut src, pp.stimulus_ms, learning)?;
            total += res.total_exc_spikes;
            total += self.rest(pp.rest_ms, learning)?;
            if res.total_exc_spikes >= u64::from(pp.min_spikes) || level >= pp.max_boosts {
                return Ok(ImageResponse {
                    counts: res.exc_spike_counts,
                    total_spikes: total,
                    attempts: level + 1,
                });
            }
            level += 1;
        }
    }

    fn advance(&mut self, source: &mut dyn InputSource, learning: bool, counts: &mut [u32]) -> Result<u64> {
        let t = self.time();
        let step = self.step_index;
        let n_input = self.params.topology.n_input;

        self.input_buf.clear();
        source.spikes(t, self.params.dt, &mut self.input_buf);
        for &i in &self.input_buf {
            if i >= n_input {
                return Err(Error::ShapeMismatch {
                    expected: n_input,
                    actual: i + 1,
                });
            }
            self.traces.on_pre_spike(i, t)?;
            let w = &self.synapses.weights;
            for (j, g) in self.exc.g_exc.iter_mut().enumerate() {
                *g += w[j * n_input + i];
            }
        }

        self.exc_fired.clear();
        self.exc
            .step(t, learning, &mut self.exc_fired)
            .map_err(|e| relabel(e, "excitatory", step))?;
        self.inh_fired.clear();
        self.inh
            .step(t, false, &mut self.inh_fired)
            .map_err(|e| relabel(e, "inhibitory", step))?;

        if learning && !self.exc_fired.is_empty() {
            self.traces.snapshot(t, &mut self.trace_buf);
            for &j in &self.exc_fired {
                let (col, removed) = self.synapses.column_and_mask_mut(j);
                apply_post_spike(col, removed, &self.trace_buf, &self.params.stdp)?;
            }
        }

        let w_ei = self.params.topology.w_exc_to_inh;
        for &j in &self.exc_fired {
            counts[j] += 1;
            self.inh.g_exc[j] += w_ei;
        }
        let w_ie = self.params.topology.w_inh_to_exc;
        if w_ie > 0.0 {
            for &k in &self.inh_fired {
                for (j, g) in self.exc.g_inh.iter_mut().enumerate() {
                    if j != k {
                        *g += w_ie;
                    }
                }
            }
        }

        self.step_index += 1;
        Ok(self.exc_fired.len() as u64)
    }
}

fn relabel(e: Error, layer: &'static str, step: u64) -> Error {
    match e {
        Error::Diverged { neuron, .. } => Error::Diverged { layer, neuron, step },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(n_input: usize, n_exc: usize) -> NetworkParams {
        NetworkParams {
            topology: Topology::new(n_input, n_exc),
            ..NetworkParams::default()
        }
    }

    #[test]
    fn columns_normalize_to_target_sum() {
        let mut m = SynapseMatrix::from_columns(4, 3, vec![0.1, 0.1, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.1, 0.1])
            .unwrap();
        m.normalize_columns(0.8, 1.0);
        assert!(m.column(0).iter().zip([0.2, 0.2, 0.4, 0.0]).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(m.column(1), &[0.0; 4]);
        assert!((m.column(2).iter().sum::<f64>() - 0.8).abs() < 1e-12);
        m.normalize_columns(10.0, 1.0);
        // 0.5 scales to 4.17 and is capped; 0.1 lands at 0.83
        assert_eq!(&m.column(2)[..2], &[1.0, 1.0]);
        assert!((m.column(2)[2] - 0.8 / 1.2 * 0.1 * 12.5).abs() < 1e-12);

        let mut p = small(4, 3);
        p.weight_sum = Some(0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn full_mnist_sized_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::build(NetworkParams::default(), &mut rng).unwrap();
        assert_eq!(net.synapses.len(), 78_400);
        assert_eq!(net.synapses.surviving(), 78_400);
        assert!(net.synapses.weights().iter().all(|w| (0.0..0.3).contains(w)));
    }

    #[test]
    fn build_is_deterministic() {
        let a = Network::build(small(20, 5), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = Network::build(small(20, 5), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.synapses, b.synapses);
    }

    #[test]
    fn inhibitory_wiring() {
        let topo = Topology::new(784, 100);
        let targets: Vec<_> = topo.inhibitory_targets(5).collect();
        assert_eq!(targets.len(), 99);
        assert!(!targets.contains(&5));
    }

    #[test]
    fn zero_sized_layers_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Network::build(small(0, 3), &mut rng).is_err());
        assert!(Network::build(small(3, 0), &mut rng).is_err());
    }

    #[test]
    fn silent_input_gives_no_spikes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::build(small(784, 10), &mut rng).unwrap();
        let rates = RateVector::zeros(784);
        let mut src = PoissonInput::new(&rates, 0.5, &mut rng).unwrap();
        let res = net.present(&mut src, 350.0, true).unwrap();
        assert_eq!(res.total_exc_spikes, 0);
    }

    #[test]
    fn inference_preserves_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Network::build(small(784, 10), &mut rng).unwrap();
        let before = net.synapses.clone();
        let thetas = net.thetas();
        let rates = RateVector(vec![40.0; 784]);
        let mut src = PoissonInput::new(&rates, 0.5, &mut rng).unwrap();
        let res = net.present(&mut src, 350.0, false).unwrap();
        assert!(res.total_exc_spikes > 0);
        assert_eq!(net.synapses, before);
        assert_eq!(net.thetas(), thetas);
    }

    #[test]
    fn rest_settles_and_clears_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Network::build(small(4, 2), &mut rng).unwrap();
        net.exc.v[0] = -55.0;
        net.exc.g_exc[1] = 1.0;
        net.traces.on_pre_spike(0, 0.0).unwrap();
        net.rest(0.0, false).unwrap();
        assert_eq!(net.traces().value(0, 0.0), 0.0);
        assert_eq!(net.exc.g_exc[1], 1.0);

        let half_life = net.params.exc.tau_ge * std::f64::consts::LN_2;
        let mut probe = Network::build(small(4, 2), &mut rng).unwrap();
        probe.exc.g_exc[1] = 1.0;
        // ln2 is not a multiple of dt; compare against the exact factor at the nearest step
        let steps = (4.0 * half_life / 0.5).round();
        probe.rest(steps * 0.5, false).unwrap();
        let expected = (-steps * 0.5 / probe.params.exc.tau_ge).exp();
        assert!((probe.exc.g_exc[1] - expected).abs() < 1e-12);
        assert!((expected - 0.5f64.powf(steps * 0.5 / half_life)).abs() < 1e-12);

        net.rest(1000.0, false).unwrap();
        for &v in &net.exc.v {
            assert!((v - net.params.exc.v_rest).abs() <= 0.01 * net.params.exc.v_rest.abs());
        }
    }

    #[test]
    fn duration_must_align_with_dt() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = Network::build(small(4, 2), &mut rng).unwrap();
        assert!(net.present(&mut Silent, 0.3, false).is_err());
        assert!(net.present(&mut Silent, 0.0, false).is_err());
    }

    #[test]
    fn scripted_input_emits_at_the_right_step() {
        let mut src = ScriptedInput::new(vec![(1.0, 0), (0.0, 1), (1.2, 2)]);
        let mut out = Vec::new();
        src.spikes(10.0, 0.5, &mut out);
        assert_eq!(out, vec![1]);
        out.clear();
        src.spikes(10.5, 0.5, &mut out);
        assert!(out.is_empty());
        src.spikes(11.0, 0.5, &mut out);
        assert_eq!(out, vec![0, 2]);
    }

    #[test]
    fn divergence_names_the_neuron() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut net = Network::build(small(4, 3), &mut rng).unwrap();
        net.exc.g_inh[2] = f64::NAN;
        match net.present(&mut Silent, 1.0, false) {
            Err(Error::Diverged { layer, neuron, step }) => {
                assert_eq!((layer, neuron, step), ("excitatory", 2, 0));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
