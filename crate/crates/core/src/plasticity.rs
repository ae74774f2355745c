//! Power-law weight-dependent STDP.
//!
//! On every postsynaptic spike each incoming weight moves by
//!
//! ```text
//! dw = eta * (x_pre - offset) * (w_max - w)^mu
//! ```
//!
//! where `x_pre = exp((t_pre - t_post) / tau)` for the most recent presynaptic
//! spike, or 0 if the input has not fired since the traces were last cleared.
//! Presynaptic spikes only refresh their trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StdpParams {
    pub eta: f64,
    /// Trace time constant, ms.
    pub tau: f64,
    pub offset: f64,
    pub w_max: f64,
    pub mu: f64,
}

impl Default for StdpParams {
    fn default() -> Self {
        Self {
            eta: 0.002,
            tau: 20.0,
            offset: 0.4,
            w_max: 1.0,
            mu: 0.9,
        }
    }
}

impl StdpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::param("stdp.eta", "must be positive"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param("stdp.tau", "must be positive"));
        }
        if !(self.offset > 0.0 && self.offset < 1.0) {
            return Err(Error::param("stdp.offset", "must lie in (0, 1)"));
        }
        if !(self.w_max > 0.0 && self.w_max.is_finite()) {
            return Err(Error::param("stdp.w_max", "must be positive"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::param("stdp.mu", "must be >= 0"));
        }
        Ok(())
    }

    /// Post-minus-pre delay at which the update changes sign.
    pub fn zero_crossing_delay(&self) -> f64 {
        self.tau * (1.0 / self.offset).ln()
    }
}

/// Weight change for one synapse given its presynaptic trace.
#[inline]
pub fn stdp_delta(x_pre: f64, w: f64, p: &StdpParams) -> f64 {
    let headroom = (p.w_max - w).max(0.0);
    p.eta * (x_pre - p.offset) * headroom.powf(p.mu)
}

/// Exponential presynaptic trace that resets to 1 on each spike.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PreTrace {
    pub x: f64,
    pub last_update: f64,
}

impl PreTrace {
    pub fn on_pre_spike(&mut self, t: f64) -> Result<()> {
        if t < self.last_update {
            return Err(Error::TimeReversal {
                last: self.last_update,
                requested: t,
            });
        }
        self.x = 1.0;
        self.last_update = t;
        Ok(())
    }

    /// Trace value at `t` without mutating it.
    #[inline]
    pub fn value_at(&self, t: f64, tau: f64) -> f64 {
        if self.x == 0.0 {
            return 0.0;
        }
        self.x * (-(t - self.last_update) / tau).exp()
    }
}

/// Traces for a whole input layer.
#[derive(Debug, Clone)]
pub struct PreTraces {
    traces: Vec<PreTrace>,
    tau: f64,
}

impl PreTraces {
    pub fn new(n: usize, tau: f64) -> Self {
        Self {
            traces: vec![PreTrace::default(); n],
            tau,
        }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn on_pre_spike(&mut self, input: usize, t: f64) -> Result<()> {
        self.traces[input].on_pre_spike(t)
    }

    pub fn value(&self, input: usize, t: f64) -> f64 {
        self.traces[input].value_at(t, self.tau)
    }

    /// Writes every trace value at time `t` into `out`.
    pub fn snapshot(&self, t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.traces.iter().map(|tr| tr.value_at(t, self.tau)));
    }

    /// Forgets all presynaptic history; the clock stays where it is.
    pub fn clear(&mut self) {
        for tr in &mut self.traces {
            tr.x = 0.0;
        }
    }
}

/// Applies one postsynaptic spike to the weight column of the spiking neuron.
///
/// `removed` entries are skipped. Every other weight, including soft-pruned
/// zeros, is updated and clamped to `[0, w_max]`.
pub fn apply_post_spike(
    column: &mut [f64],
    removed: &[bool],
    traces: &[f64],
    p: &StdpParams,
) -> Result<()> {
    if column.len() != traces.len() {
        return Err(Error::ShapeMismatch {
            expected: column.len(),
            actual: traces.len(),
        });
    }
    if column.len() != removed.len() {
        return Err(Error::ShapeMismatch {
            expected: column.len(),
            actual: removed.len(),
        });
    }
    for ((w, &gone), &x) in column.iter_mut().zip(removed).zip(traces) {
        if gone {
            continue;
        }
        *w = (*w + stdp_delta(x, *w, p)).clamp(0.0, p.w_max);
    }
    Ok(())
}
