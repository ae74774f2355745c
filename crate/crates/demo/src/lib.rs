//! Three small views of the model for the browser page in `www/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use spikeprune::compression::{classify, connectivity, quantize, soft_prune};
use spikeprune::network::SynapseMatrix;
use spikeprune::neuron::{Integrator, LifParams, LifState, SynapseKind};
use spikeprune::plasticity::{stdp_delta, StdpParams};

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Weight change for post-minus-pre delays `0, step, .., max_delay` ms.
#[wasm_bindgen]
pub fn stdp_window(w: f64, offset: f64, mu: f64, max_delay: f64, step: f64) -> Result<Vec<f64>, JsError> {
    window_values(w, offset, mu, max_delay, step).map_err(js)
}

pub fn window_values(w: f64, offset: f64, mu: f64, max_delay: f64, step: f64) -> Result<Vec<f64>, String> {
    let p = StdpParams {
        offset,
        mu,
        ..StdpParams::default()
    };
    p.validate().map_err(|e| e.to_string())?;
    if !(step > 0.0 && max_delay >= 0.0) {
        return Err("need step > 0 and max_delay >= 0".into());
    }
    if !(0.0..=p.w_max).contains(&w) {
        return Err(format!("weight must lie in [0, {}]", p.w_max));
    }
    let n = (max_delay / step).floor() as usize + 1;
    Ok((0..n)
        .map(|k| stdp_delta((-(k as f64 * step) / p.tau).exp(), w, &p))
        .collect())
}

#[wasm_bindgen]
pub fn zero_crossing_ms(offset: f64) -> f64 {
    StdpParams {
        offset,
        ..StdpParams::default()
    }
    .zero_crossing_delay()
}

#[wasm_bindgen]
pub struct Sharing {
    before: Vec<f64>,
    after: Vec<f64>,
    levels: Vec<f64>,
    connectivity: f64,
}

#[wasm_bindgen]
impl Sharing {
    /// Histogram of the weights before pruning.
    pub fn before(&self) -> Vec<f64> {
        self.before.clone()
    }

    pub fn after(&self) -> Vec<f64> {
        self.after.clone()
    }

    pub fn levels(&self) -> Vec<f64> {
        self.levels.clone()
    }

    pub fn connectivity(&self) -> f64 {
        self.connectivity
    }
}

fn histogram(values: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &v in values {
        let b = ((v * bins as f64) as usize).min(bins - 1);
        h[b] += 1.0;
    }
    h
}

/// Prunes and shares a synthetic trained-looking weight population: most
/// weights near zero, a minority spread toward the ceiling.
#[wasm_bindgen]
pub fn share_weights(seed: u64, threshold: f64, levels: usize, bins: usize) -> Result<Sharing, JsError> {
    sharing(seed, threshold, levels, bins).map_err(js)
}

pub fn sharing(seed: u64, threshold: f64, levels: usize, bins: usize) -> Result<Sharing, String> {
    if bins == 0 {
        return Err("need at least one bin".into());
    }
    if !(0.0..1.0).contains(&threshold) || levels < 2 {
        return Err("need 0 <= threshold < 1 and at least 2 levels".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..784 * 20)
        .map(|_| {
            if rng.gen_bool(0.7) {
                rng.gen_range(0.0..0.15_f64).powi(2) * 4.0
            } else {
                rng.gen_range(0.1..1.0_f64).sqrt()
            }
        })
        .collect();
    let before = histogram(&weights, bins);
    let err = |e: spikeprune::Error| e.to_string();
    let mut m = SynapseMatrix::from_columns(784, 20, weights).map_err(err)?;
    let mask = classify(&mut m, threshold);
    soft_prune(&mut m, &mask).map_err(err)?;
    let shared = quantize(&mut m, &mask, levels).map_err(err)?.unwrap_or_default();
    Ok(Sharing {
        before,
        after: histogram(m.weights(), bins),
        levels: shared,
        connectivity: connectivity(&m),
    })
}

#[wasm_bindgen]
pub struct Trace {
    voltage: Vec<f64>,
    spikes: Vec<f64>,
}

#[wasm_bindgen]
impl Trace {
    /// Membrane potential at every step, mV.
    pub fn voltage(&self) -> Vec<f64> {
        self.voltage.clone()
    }

    /// Spike times, ms.
    pub fn spikes(&self) -> Vec<f64> {
        self.spikes.clone()
    }
}

/// One excitatory neuron driven by `inputs` Poisson inputs at `rate_hz`, each
/// through a synapse of weight `weight`.
#[wasm_bindgen]
pub fn lif_trace(rate_hz: f64, weight: f64, inputs: u32, duration_ms: f64, seed: u64) -> Result<Trace, JsError> {
    trace(rate_hz, weight, inputs, duration_ms, seed).map_err(js)
}

pub fn trace(rate_hz: f64, weight: f64, inputs: u32, duration_ms: f64, seed: u64) -> Result<Trace, String> {
    let dt = 0.5;
    let p_spike = rate_hz * dt / 1000.0;
    if !(0.0..0.5).contains(&p_spike) {
        return Err("rate must be >= 0 and below 1000 Hz".into());
    }
    let err = |e: spikeprune::Error| e.to_string();
    let params = LifParams::excitatory();
    let int = Integrator::new(params, dt).map_err(err)?;
    let mut state = LifState::at_rest(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (duration_ms / dt).max(0.0) as usize;
    let mut voltage = Vec::with_capacity(steps);
    let mut spikes = Vec::new();
    for k in 0..steps {
        let t = k as f64 * dt;
        for _ in 0..inputs {
            if rng.gen_bool(p_spike) {
                state.inject(weight, SynapseKind::Excitatory).map_err(err)?;
            }
        }
        if int.step(&mut state, t, true).map_err(err)? {
            spikes.push(t);
        }
        voltage.push(state.v);
    }
    Ok(Trace { voltage, spikes })
}
