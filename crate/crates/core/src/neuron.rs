//! Double-threshold spiking (DTS) neuron.
//!
//! The membrane potential integrates a scaled input with an exponential leak and
//! is compared against two thresholds `u_n <= u_p`:
//!
//! ```text
//! u'  = (1 - |o|) (1 - dt/tau) u + (dt/tau) C_q q
//! o'  = +1 if u' < u_n,  -1 if u' > u_p,  0 otherwise
//! torque = C_t o'
//! ```
//!
//! A spike on the previous step erases the potential, so after any spike the
//! potential equals the weighted input exactly. The thresholds may share a sign,
//! in which case the neuron fires continuously until the input leaves the band.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Output of a DTS neuron on one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Spike {
    Negative,
    #[default]
    Silent,
    Positive,
}

impl Spike {
    pub fn value(self) -> f64 {
        match self {
            Spike::Negative => -1.0,
            Spike::Silent => 0.0,
            Spike::Positive => 1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Spike::Negative => -1,
            Spike::Silent => 0,
            Spike::Positive => 1,
        }
    }

    pub fn is_silent(self) -> bool {
        self == Spike::Silent
    }

    pub fn negated(self) -> Spike {
        match self {
            Spike::Negative => Spike::Positive,
            Spike::Silent => Spike::Silent,
            Spike::Positive => Spike::Negative,
        }
    }

    pub fn from_i8(v: i8) -> Option<Spike> {
        match v {
            -1 => Some(Spike::Negative),
            0 => Some(Spike::Silent),
            1 => Some(Spike::Positive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtsParams {
    /// Input gain `C_q`.
    pub c_q: f64,
    /// Torque gain `C_t` (N·m per spike).
    pub c_t: f64,
    /// Membrane time constant (s).
    pub tau: f64,
    /// Integration step (s).
    pub dt: f64,
}

impl Default for DtsParams {
    fn default() -> Self {
        Self {
            c_q: 5.0,
            c_t: 0.1,
            tau: 0.1,
            dt: 0.001,
        }
    }
}

impl DtsParams {
    pub fn new(c_q: f64, c_t: f64, tau: f64, dt: f64) -> Result<Self> {
        let params = Self { c_q, c_t, tau, dt };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_q.is_finite() && self.c_t.is_finite()) {
            return Err(Error::invalid("DTS gains must be finite"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.dt > 0.0 && self.dt < self.tau) {
            return Err(Error::invalid(format!(
                "dt must lie in (0, tau), got dt={} tau={}",
                self.dt, self.tau
            )));
        }
        Ok(())
    }

    /// `dt / tau`.
    pub fn rate(&self) -> f64 {
        self.dt / self.tau
    }

    /// Leak factor `1 - dt/tau`.
    pub fn leak(&self) -> f64 {
        1.0 - self.dt / self.tau
    }

    /// `(dt/tau) C_q q`, the potential right after a spike.
    pub fn weighted_input(&self, q: f64) -> f64 {
        self.rate() * self.c_q * q
    }
}

/// The firing band `[u_n, u_p]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub u_n: f64,
    pub u_p: f64,
}

impl Thresholds {
    pub fn new(u_n: f64, u_p: f64) -> Result<Self> {
        if !(u_n.is_finite() && u_p.is_finite()) {
            return Err(Error::NonFinite {
                context: "thresholds",
            });
        }
        if u_n > u_p {
            return Err(Error::invalid(format!(
                "thresholds must satisfy u_n <= u_p, got ({u_n}, {u_p})"
            )));
        }
        Ok(Self { u_n, u_p })
    }

    /// Maps an RL action `(mu, sigma)` onto `(mu - |sigma|, mu + |sigma|)`.
    pub fn from_action(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite()) {
            return Err(Error::NonFinite {
                context: "threshold action",
            });
        }
        let half = sigma.abs();
        Ok(Self {
            u_n: mu - half,
            u_p: mu + half,
        })
    }

    /// The band reflected through zero: `(-u_p, -u_n)`.
    pub fn mirrored(&self) -> Self {
        Self {
            u_n: -self.u_p,
            u_p: -self.u_n,
        }
    }

    pub fn fire(&self, u: f64) -> Spike {
        if u < self.u_n {
            Spike::Positive
        } else if u > self.u_p {
            Spike::Negative
        } else {
            Spike::Silent
        }
    }
}

/// Membrane potential and last emitted spike.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeuronState {
    pub u: f64,
    pub o_prev: Spike,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub state: NeuronState,
    pub spike: Spike,
    pub torque: f64,
    pub weighted_input: f64,
}

impl NeuronState {
    pub fn new(u: f64, o_prev: Spike) -> Self {
        Self { u, o_prev }
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Advances the neuron by one step with input `q`.
    ///
    /// The spike is decided on the updated potential, so a nonzero spike means
    /// the next call starts from a cleared potential.
    pub fn step(&self, params: &DtsParams, thr: &Thresholds, q: f64) -> Result<StepOutput> {
        if !q.is_finite() {
            return Err(Error::NonFinite {
                context: "neuron input",
            });
        }
        if !self.u.is_finite() {
            return Err(Error::NonFinite {
                context: "membrane potential",
            });
        }
        let keep = 1.0 - self.o_prev.value().abs();
        let weighted_input = params.weighted_input(q);
        let u = keep * params.leak() * self.u + weighted_input;
        let spike = thr.fire(u);
        Ok(StepOutput {
            state: NeuronState { u, o_prev: spike },
            spike,
            torque: params.c_t * spike.value(),
            weighted_input,
        })
    }

    /// In-place variant of [`NeuronState::step`] used by the inner control loop.
    pub fn advance(&mut self, params: &DtsParams, thr: &Thresholds, q: f64) -> Result<StepOutput> {
        let out = self.step(params, thr, q)?;
        *self = out.state;
        Ok(out)
    }
}

/// One row of an exported neuron trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub t: f64,
    pub q: f64,
    pub weighted_input: f64,
    pub u: f64,
    pub o: i8,
    pub torque: f64,
}

/// Runs a neuron over an input sequence with a threshold schedule.
///
/// `thresholds(k)` gives the band in force at step `k` (1-based, matching the
/// time `t = k dt` of the input sample).
pub fn run_trace<F>(
    params: &DtsParams,
    initial: NeuronState,
    inputs: &[f64],
    mut thresholds: F,
) -> Result<Vec<TraceRecord>>
where
    F: FnMut(usize) -> Thresholds,
{
    let mut state = initial;
    let mut out = Vec::with_capacity(inputs.len());
    for (i, &q) in inputs.iter().enumerate() {
        let k = i + 1;
        let thr = thresholds(k);
        let step = state.advance(params, &thr, q)?;
        out.push(TraceRecord {
            k,
            t: k as f64 * params.dt,
            q,
            weighted_input: step.weighted_input,
            u: step.state.u,
            o: step.spike.as_i8(),
            torque: step.torque,
        });
    }
    Ok(out)
}

/// The three-phase sine demonstration: a symmetric band for the first second,
/// a positive same-sign band for the next half second, and its mirror for the
/// last half second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreePhaseProtocol {
    pub params: DtsParams,
    pub duration: f64,
    /// Input frequency (Hz) of `q(t) = sin(2 pi f t)`.
    pub frequency: f64,
    pub phase1: Thresholds,
    pub phase2: Thresholds,
    pub phase1_end: f64,
    pub phase2_end: f64,
}

impl Default for ThreePhaseProtocol {
    fn default() -> Self {
        let phase2 = Thresholds {
            u_n: 0.025,
            u_p: 0.125,
        };
        Self {
            params: DtsParams {
                c_q: 10.0,
                c_t: 0.1,
                tau: 0.1,
                dt: 0.001,
            },
            duration: 2.0,
            frequency: 1.0,
            phase1: Thresholds { u_n: -0.1, u_p: 0.1 },
            phase2,
            phase1_end: 1.0,
            phase2_end: 1.5,
        }
    }
}

impl ThreePhaseProtocol {
    pub fn steps(&self) -> usize {
        (self.duration / self.params.dt).round() as usize
    }

    pub fn input(&self) -> Vec<f64> {
        let dt = self.params.dt;
        (1..=self.steps())
            .map(|k| (2.0 * std::f64::consts::PI * self.frequency * k as f64 * dt).sin())
            .collect()
    }

    /// Step index at which phase 2 starts (first step with `t > phase1_end`).
    pub fn phase2_start(&self) -> usize {
        (self.phase1_end / self.params.dt).round() as usize + 1
    }

    pub fn phase3_start(&self) -> usize {
        (self.phase2_end / self.params.dt).round() as usize + 1
    }

    pub fn thresholds_at(&self, k: usize) -> Thresholds {
        if k < self.phase2_start() {
            self.phase1
        } else if k < self.phase3_start() {
            self.phase2
        } else {
            self.phase2.mirrored()
        }
    }

    pub fn run(&self) -> Result<Vec<TraceRecord>> {
        self.params.validate()?;
        let input = self.input();
        run_trace(&self.params, NeuronState::default(), &input, |k| {
            self.thresholds_at(k)
        })
    }
}

pub fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    io::write_csv_atomic(path, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_params() -> DtsParams {
        DtsParams::new(10.0, 0.1, 0.1, 0.001).unwrap()
    }

    #[test]
    fn zero_fixed_point() {
        let thr = Thresholds::new(-0.1, 0.1).unwrap();
        let out = NeuronState::default()
            .step(&default_params(), &thr, 0.0)
            .unwrap();
        assert_eq!(out.state.u, 0.0);
        assert_eq!(out.spike, Spike::Silent);
        assert_eq!(out.torque, 0.0);
    }

    #[test]
    fn crossing_positive_threshold_emits_negative_spike() {
        let thr = Thresholds::new(-0.1, 0.1).unwrap();
        let state = NeuronState::new(0.05, Spike::Silent);
        let out = state.step(&default_params(), &thr, 1.0).unwrap();
        // 0.99 * 0.05 + 0.1
        assert!((out.state.u - 0.1495).abs() < 1e-15);
        assert_eq!(out.spike, Spike::Negative);
        assert_eq!(out.torque, -0.1);
    }

    #[test]
    fn spike_erases_history() {
        let thr = Thresholds::new(-10.0, 10.0).unwrap();
        for prev in [Spike::Positive, Spike::Negative] {
            for u in [-3.0, 0.0, 0.7, 42.0] {
                let out = NeuronState::new(u, prev)
                    .step(&default_params(), &thr, 0.8)
                    .unwrap();
                assert!((out.state.u - 0.08).abs() < 1e-16, "u={}", out.state.u);
            }
        }
    }

    #[test]
    fn thresholds_from_action() {
        let t = Thresholds::from_action(0.5, -0.25).unwrap();
        assert_eq!((t.u_n, t.u_p), (0.25, 0.75));
        let t = Thresholds::from_action(0.0, 0.0).unwrap();
        assert_eq!((t.u_n, t.u_p), (0.0, 0.0));
        let t = Thresholds::from_action(-0.0625, 0.0375).unwrap();
        assert!((t.u_n + 0.1).abs() < 1e-15);
        assert!((t.u_p + 0.025).abs() < 1e-15);
        assert!(Thresholds::from_action(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn degenerate_band_fires_except_at_equality() {
        let thr = Thresholds::from_action(0.0, 0.0).unwrap();
        assert_eq!(thr.fire(-1e-12), Spike::Positive);
        assert_eq!(thr.fire(1e-12), Spike::Negative);
        assert_eq!(thr.fire(0.0), Spike::Silent);
    }

    #[test]
    fn reset_clears_state() {
        let mut s = NeuronState::new(0.3, Spike::Negative);
        s.reset();
        assert_eq!(s, NeuronState::default());
        let thr = Thresholds::new(-0.1, 0.1).unwrap();
        let out = s.step(&default_params(), &thr, 0.0).unwrap();
        assert_eq!(out.spike, Spike::Silent);
    }

    #[test]
    fn rejects_non_finite() {
        let thr = Thresholds::new(-0.1, 0.1).unwrap();
        assert!(NeuronState::default()
            .step(&default_params(), &thr, f64::NAN)
            .is_err());
        assert!(NeuronState::new(f64::INFINITY, Spike::Silent)
            .step(&default_params(), &thr, 0.0)
            .is_err());
    }

    #[test]
    fn invalid_params() {
        assert!(DtsParams::new(1.0, 1.0, 0.0, 0.001).is_err());
        assert!(DtsParams::new(1.0, 1.0, 0.1, 0.1).is_err());
        assert!(DtsParams::new(1.0, 1.0, 0.1, -0.001).is_err());
        assert!(Thresholds::new(0.2, 0.1).is_err());
    }

    #[test]
    fn replay_after_reset_is_identical() {
        let proto = ThreePhaseProtocol::default();
        let a = proto.run().unwrap();
        let b = proto.run().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2000);
    }
}
