//! Conductance-based leaky integrate-and-fire neurons.
//!
//! The membrane follows
//!
//! ```text
//! tau_mem * dv/dt = (v_rest - v) + g_exc * (e_exc - v) + g_inh * (e_inh - v)
//! ```
//!
//! and is advanced with forward Euler. Conductances and the adaptive threshold
//! `theta` are linear decays, so they are advanced with their exact per-step
//! factor. A neuron fires when `v > v_thresh_base + theta` outside its
//! refractory window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Membrane constants. Potentials in mV, times in ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifParams {
    pub v_rest: f64,
    pub v_reset: f64,
    pub v_thresh_base: f64,
    pub tau_mem: f64,
    pub refractory: f64,
    pub e_exc: f64,
    pub e_inh: f64,
    pub tau_ge: f64,
    pub tau_gi: f64,
    pub theta_plus: f64,
    pub tau_theta: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self::excitatory()
    }
}

impl LifParams {
    pub fn excitatory() -> Self {
        Self {
            v_rest: -65.0,
            v_reset: -65.0,
            v_thresh_base: -52.0,
            tau_mem: 100.0,
            refractory: 5.0,
            e_exc: 0.0,
            e_inh: -100.0,
            tau_ge: 1.0,
            tau_gi: 2.0,
            theta_plus: 0.05,
            tau_theta: 1e7,
        }
    }

    /// Inhibitory layer: fast membrane, fixed threshold, no homeostasis.
    pub fn inhibitory() -> Self {
        Self {
            v_rest: -60.0,
            v_reset: -45.0,
            v_thresh_base: -40.0,
            tau_mem: 10.0,
            refractory: 2.0,
            e_exc: 0.0,
            e_inh: -85.0,
            tau_ge: 1.0,
            tau_gi: 2.0,
            theta_plus: 0.0,
            tau_theta: 1e7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.v_rest,
            self.v_reset,
            self.v_thresh_base,
            self.tau_mem,
            self.refractory,
            self.e_exc,
            self.e_inh,
            self.tau_ge,
            self.tau_gi,
            self.theta_plus,
            self.tau_theta,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("lif", "all constants must be finite"));
        }
        if self.tau_mem <= 0.0 || self.tau_ge <= 0.0 || self.tau_gi <= 0.0 || self.tau_theta <= 0.0
        {
            return Err(Error::param("lif.tau_*", "time constants must be positive"));
        }
        if self.refractory < 0.0 {
            return Err(Error::param("lif.refractory", "must be >= 0"));
        }
        if self.theta_plus < 0.0 {
            return Err(Error::param("lif.theta_plus", "must be >= 0"));
        }
        if self.v_rest >= self.v_thresh_base {
            return Err(Error::param(
                "lif.v_thresh_base",
                "must lie above v_rest",
            ));
        }
        if self.e_inh > self.v_reset.min(self.v_rest) {
            return Err(Error::param(
                "lif.e_inh",
                "inhibitory reversal must not exceed the resting and reset potentials",
            ));
        }
        Ok(())
    }
}

/// Dynamic state of one neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifState {
    pub v: f64,
    pub g_exc: f64,
    pub g_inh: f64,
    pub theta: f64,
    pub refractory_until: f64,
    pub last_spike: Option<f64>,
}

impl LifState {
    pub fn at_rest(params: &LifParams) -> Self {
        Self {
            v: params.v_rest,
            g_exc: 0.0,
            g_inh: 0.0,
            theta: 0.0,
            refractory_until: f64::NEG_INFINITY,
            last_spike: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.g_exc.is_finite() && self.g_inh.is_finite() && self.theta.is_finite()
    }

    /// Adds a presynaptic spike's conductance jump.
    pub fn inject(&mut self, weight: f64, kind: SynapseKind) -> Result<()> {
        if weight < 0.0 || weight.is_nan() {
            return Err(Error::NegativeWeight(weight));
        }
        match kind {
            SynapseKind::Excitatory => self.g_exc += weight,
            SynapseKind::Inhibitory => self.g_inh += weight,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynapseKind {
    Excitatory,
    Inhibitory,
}

/// Conductances below this are treated as fully decayed, which keeps the
/// arithmetic out of the (very slow) subnormal range.
pub const CONDUCTANCE_FLOOR: f64 = 1e-30;

#[inline]
fn flush(g: f64) -> f64 {
    if g < CONDUCTANCE_FLOOR {
        0.0
    } else {
        g
    }
}

/// Step constants for a fixed `dt`, so the inner loop does no `exp` calls.
#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    pub params: LifParams,
    pub dt: f64,
    ge_decay: f64,
    gi_decay: f64,
    theta_decay: f64,
}

impl Integrator {
    pub fn new(params: LifParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be a positive finite step"));
        }
        params.validate()?;
        Ok(Self {
            params,
            dt,
            ge_decay: (-dt / params.tau_ge).exp(),
            gi_decay: (-dt / params.tau_gi).exp(),
            theta_decay: (-dt / params.tau_theta).exp(),
        })
    }

    /// Advances `state` from `t` to `t + dt` and reports whether it fired.
    ///
    /// With `adapt_theta` unset the threshold offset is left untouched (no
    /// increment and no decay), which is how inference freezes homeostasis.
    #[inline]
    pub fn step(&self, state: &mut LifState, t: f64, adapt_theta: bool) -> Result<bool> {
        let p = &self.params;
        let refractory = t < state.refractory_until;
        if !refractory {
            let drive = (p.v_rest - state.v)
                + state.g_exc * (p.e_exc - state.v)
                + state.g_inh * (p.e_inh - state.v);
            state.v += (self.dt / p.tau_mem) * drive;
            if state.v < p.e_inh {
                state.v = p.e_inh;
            }
        }
        state.g_exc = flush(state.g_exc * self.ge_decay);
        state.g_inh = flush(state.g_inh * self.gi_decay);
        if adapt_theta {
            state.theta *= self.theta_decay;
        }
        if !state.is_finite() {
            return Err(Error::Diverged {
                layer: "lif",
                neuron: 0,
                step: (t / self.dt).round() as u64,
            });
        }

        if !refractory && state.v > p.v_thresh_base + state.theta {
            state.v = p.v_reset;
            state.refractory_until = t + p.refractory;
            state.last_spike = Some(t);
            if adapt_theta {
                state.theta += p.theta_plus;
            }
            return Ok(true);
        }
        Ok(false)
    }
}

/// A population of neurons sharing one parameter set, stored as parallel
/// arrays. Same dynamics as [`Integrator::step`], vectorized over neurons.
#[derive(Debug, Clone)]
pub struct Population {
    int: Integrator,
    pub v: Vec<f64>,
    pub g_exc: Vec<f64>,
    pub g_inh: Vec<f64>,
    pub theta: Vec<f64>,
    pub refractory_until: Vec<f64>,
    /// `NEG_INFINITY` until the first spike.
    pub last_spike: Vec<f64>,
}

impl Population {
    pub fn at_rest(int: Integrator, n: usize) -> Self {
        Self {
            v: vec![int.params.v_rest; n],
            g_exc: vec![0.0; n],
            g_inh: vec![0.0; n],
            theta: vec![0.0; n],
            refractory_until: vec![f64::NEG_INFINITY; n],
            last_spike: vec![f64::NEG_INFINITY; n],
            int,
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn params(&self) -> &LifParams {
        &self.int.params
    }

    pub fn get(&self, j: usize) -> LifState {
        LifState {
            v: self.v[j],
            g_exc: self.g_exc[j],
            g_inh: self.g_inh[j],
            theta: self.theta[j],
            refractory_until: self.refractory_until[j],
            last_spike: Some(self.last_spike[j]).filter(|t| t.is_finite()),
        }
    }

    pub fn set(&mut self, j: usize, s: LifState) {
        self.v[j] = s.v;
        self.g_exc[j] = s.g_exc;
        self.g_inh[j] = s.g_inh;
        self.theta[j] = s.theta;
        self.refractory_until[j] = s.refractory_until;
        self.last_spike[j] = s.last_spike.unwrap_or(f64::NEG_INFINITY);
    }

    /// Advances every neuron one step and appends the indices that fired.
    /// On divergence the error carries the offending neuron index.
    pub fn step(&mut self, t: f64, adapt_theta: bool, fired: &mut Vec<usize>) -> Result<()> {
        let p = self.int.params;
        let k = self.int.dt / p.tau_mem;
        let (dge, dgi) = (self.int.ge_decay, self.int.gi_decay);
        let dth = if adapt_theta { self.int.theta_decay } else { 1.0 };
        let n = self.v.len();
        let (v, ge, gi) = (&mut self.v[..n], &mut self.g_exc[..n], &mut self.g_inh[..n]);
        let (theta, until) = (&mut self.theta[..n], &self.refractory_until[..n]);

        // Branch-free update so the loop vectorizes; spikes are resolved after.
        let mut check = 0.0;
        let mut any = false;
        for j in 0..n {
            let refractory = t < until[j];
            let vj = v[j];
            let integrated = vj + k * ((p.v_rest - vj) + ge[j] * (p.e_exc - vj) + gi[j] * (p.e_inh - vj));
            check += integrated + ge[j] + gi[j];
            let integrated = if integrated < p.e_inh { p.e_inh } else { integrated };
            let vn = if refractory { vj } else { integrated };
            v[j] = vn;
            ge[j] = flush(ge[j] * dge);
            gi[j] = flush(gi[j] * dgi);
            theta[j] *= dth;
            any |= !refractory & (vn > p.v_thresh_base + theta[j]);
        }
        if !check.is_finite() {
            let neuron = (0..n).find(|&j| !self.get(j).is_finite()).unwrap_or(0);
            return Err(Error::Diverged {
                layer: "lif",
                neuron,
                step: (t / self.int.dt).round() as u64,
            });
        }
        if any {
            for j in 0..n {
                if t >= self.refractory_until[j] && self.v[j] > p.v_thresh_base + self.theta[j] {
                    self.v[j] = p.v_reset;
                    self.refractory_until[j] = t + p.refractory;
                    self.last_spike[j] = t;
                    if adapt_theta {
                        self.theta[j] += p.theta_plus;
                    }
                    fired.push(j);
                }
            }
        }
        Ok(())
    }
}

/// One-off step without a cached [`Integrator`].
pub fn step(
    state: &mut LifState,
    params: &LifParams,
    dt: f64,
    t: f64,
    adapt_theta: bool,
) -> Result<bool> {
    Integrator::new(*params, dt)?.step(state, t, adapt_theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rest_is_a_fixed_point() {
        let p = LifParams::excitatory();
        let mut s = LifState::at_rest(&p);
        let spiked = step(&mut s, &p, 0.5, 0.0, true).unwrap();
        assert!(!spiked);
        assert_eq!(s.v, p.v_rest);
    }

    #[test]
    fn crossing_threshold_fires_and_resets() {
        let p = LifParams::excitatory();
        let mut s = LifState::at_rest(&p);
        s.theta = 2.0;
        s.v = p.v_thresh_base + s.theta + 1.0;
        let spiked = step(&mut s, &p, 0.5, 10.0, true).unwrap();
        assert!(spiked);
        assert_eq!(s.v, p.v_reset);
        assert_eq!(s.refractory_until, 10.0 + p.refractory);
        // theta decays by one step before the increment
        let decayed = 2.0 * (-0.5 / p.tau_theta).exp();
        assert_relative_eq!(s.theta, decayed + p.theta_plus, epsilon = 1e-12);
    }

    #[test]
    fn euler_leak_step_matches_hand_value() {
        let p = LifParams::excitatory();
        let mut s = LifState::at_rest(&p);
        s.v = -60.0;
        step(&mut s, &p, 0.5, 0.0, true).unwrap();
        assert_relative_eq!(s.v, -60.025, epsilon = 1e-12);
    }

    #[test]
    fn refractory_blocks_firing() {
        let p = LifParams::excitatory();
        let mut s = LifState::at_rest(&p);
        s.refractory_until = 3.0;
        s.v = 0.0;
        assert!(!step(&mut s, &p, 0.5, 1.0, true).unwrap());
        assert!(step(&mut s, &p, 0.5, 3.0, true).unwrap());
    }

    #[test]
    fn frozen_theta_does_not_move() {
        let p = LifParams::excitatory();
        let mut s = LifState::at_rest(&p);
        s.theta = 5.0;
        s.v = 0.0;
        assert!(step(&mut s, &p, 0.5, 0.0, false).unwrap());
        assert_eq!(s.theta, 5.0);
    }

    #[test]
    fn injection() {
        let p = LifParams::excitatory();
        let mut s = LifState::at_rest(&p);
        s.inject(0.0, SynapseKind::Excitatory).unwrap();
        assert_eq!(s, LifState::at_rest(&p));

        s.g_exc = 0.2;
        s.inject(0.5, SynapseKind::Excitatory).unwrap();
        assert_relative_eq!(s.g_exc, 0.7);

        let mut a = LifState::at_rest(&p);
        let mut b = a;
        a.inject(0.3, SynapseKind::Inhibitory).unwrap();
        a.inject(0.3, SynapseKind::Inhibitory).unwrap();
        b.inject(0.6, SynapseKind::Inhibitory).unwrap();
        assert_relative_eq!(a.g_inh, b.g_inh, epsilon = 1e-15);
        assert_eq!(a.g_exc, 0.0);

        assert!(matches!(
            s.inject(-0.1, SynapseKind::Excitatory),
            Err(Error::NegativeWeight(_))
        ));
    }

    #[test]
    fn conductance_decay_tracks_exponential() {
        let p = LifParams::excitatory();
        let int = Integrator::new(p, 0.5).unwrap();
        let mut s = LifState::at_rest(&p);
        s.g_exc = 1.0;
        s.g_inh = 1.0;
        for k in 1..=20u32 {
            int.step(&mut s, f64::from(k) * 0.5, true).unwrap();
            let t = f64::from(k) * 0.5;
            assert_relative_eq!(s.g_exc, (-t / p.tau_ge).exp(), max_relative = 0.02);
            assert_relative_eq!(s.g_inh, (-t / p.tau_gi).exp(), max_relative = 0.02);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let p = LifParams::excitatory();
        let mut s = LifState::at_rest(&p);
        s.g_exc = f64::INFINITY;
        assert!(matches!(
            step(&mut s, &p, 0.5, 0.0, true),
            Err(Error::Diverged { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn population_matches_single_neuron(
            v in -100.0f64..0.0,
            ge in 0.0f64..5.0,
            gi in 0.0f64..5.0,
            theta in 0.0f64..20.0,
            refr in -5.0f64..5.0,
            adapt: bool,
        ) {
            let p = LifParams::excitatory();
            let int = Integrator::new(p, 0.5).unwrap();
            let s0 = LifState { v, g_exc: ge, g_inh: gi, theta, refractory_until: refr, last_spike: None };
            let mut pop = Population::at_rest(int, 3);
            pop.set(1, s0);
            let mut single = s0;
            for step in 0..40u32 {
                let t = f64::from(step) * 0.5;
                let mut fired = Vec::new();
                pop.step(t, adapt, &mut fired).unwrap();
                let spiked = int.step(&mut single, t, adapt).unwrap();
                proptest::prop_assert_eq!(fired.contains(&1), spiked);
                proptest::prop_assert_eq!(pop.get(1), single);
            }
        }
    }

    #[test]
    fn population_reports_diverged_neuron() {
        let int = Integrator::new(LifParams::excitatory(), 0.5).unwrap();
        let mut pop = Population::at_rest(int, 4);
        pop.g_exc[3] = f64::NAN;
        match pop.step(0.0, true, &mut Vec::new()) {
            Err(Error::Diverged { neuron, .. }) => assert_eq!(neuron, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = LifParams::excitatory();
        p.tau_mem = 0.0;
        assert!(p.validate().is_err());
        let mut p = LifParams::excitatory();
        p.v_thresh_base = -70.0;
        assert!(p.validate().is_err());
        assert!(Integrator::new(LifParams::excitatory(), 0.0).is_err());
        assert!(LifParams::inhibitory().validate().is_ok());
    }
}
