//! Matsuoka central pattern generator: one extensor/flexor pair per segment,
//! coupled to the neighbouring segments through their same-side neurons.
//!
//! ```text
//! tau_r x_e' = -x_e - a z_f - b v_e - sum_j w_j z_{j,e} + u
//! tau_a v_e' = -v_e + z_e                  z = max(0, x)
//! ```
//!
//! and symmetrically for the flexor. The segment output is
//! `amplitude_ratio * (z_e - z_f)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpgParams {
    pub amplitude_ratio: f64,
    /// Adaptation (self-inhibition) weight `b`.
    pub self_inhibit_weight: f64,
    /// Weight `a` between the two neurons of a pair.
    pub mutual_inhibit_weight: f64,
    /// Membrane time constant `tau_r` (s).
    pub discharge_rate: f64,
    /// Adaptation time constant `tau_a` (s).
    pub adaption_rate: f64,
    /// `[descending, ascending]`: from segment `i-1` into `i`, and from `i+1` into `i`.
    pub coupling_weights: [f64; 2],
    /// N·m per unit of oscillator output.
    pub torque_gain: f64,
}

impl Default for CpgParams {
    fn default() -> Self {
        Self {
            amplitude_ratio: 2.30,
            self_inhibit_weight: 10.05,
            mutual_inhibit_weight: 2.18,
            discharge_rate: 0.56,
            adaption_rate: 1.76,
            coupling_weights: [9.13, 0.73],
            torque_gain: 0.1,
        }
    }
}

impl CpgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.discharge_rate > 0.0 && self.adaption_rate > 0.0) {
            return Err(Error::invalid("CPG rates must be > 0"));
        }
        let all = [
            self.amplitude_ratio,
            self.self_inhibit_weight,
            self.mutual_inhibit_weight,
            self.coupling_weights[0],
            self.coupling_weights[1],
            self.torque_gain,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "CPG parameters",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OscillatorPair {
    pub x_e: f64,
    pub x_f: f64,
    pub v_e: f64,
    pub v_f: f64,
}

impl OscillatorPair {
    pub fn z_e(&self) -> f64 {
        self.x_e.max(0.0)
    }

    pub fn z_f(&self) -> f64 {
        self.x_f.max(0.0)
    }

    fn swapped(&self) -> Self {
        Self {
            x_e: self.x_f,
            x_f: self.x_e,
            v_e: self.v_f,
            v_f: self.v_e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpgState {
    pub pairs: Vec<OscillatorPair>,
}

impl CpgState {
    /// Extensor membrane offset that breaks the e/f symmetry at start-up.
    pub const START_OFFSET: f64 = 0.01;

    pub fn new(m: usize) -> Self {
        let pair = OscillatorPair {
            x_e: Self::START_OFFSET,
            ..OscillatorPair::default()
        };
        Self {
            pairs: vec![pair; m],
        }
    }

    pub fn reset(&mut self) {
        let m = self.pairs.len();
        *self = Self::new(m);
    }

    /// The same network with extensor and flexor exchanged in every pair.
    pub fn swapped(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(OscillatorPair::swapped).collect(),
        }
    }

    pub fn outputs(&self, params: &CpgParams) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|p| params.amplitude_ratio * (p.z_e() - p.z_f()))
            .collect()
    }

    pub fn output(&self, params: &CpgParams, segment: usize) -> f64 {
        let p = &self.pairs[segment];
        params.amplitude_ratio * (p.z_e() - p.z_f())
    }

    /// One explicit Euler step with tonic drive `tonic[i]` on both neurons of
    /// pair `i`.
    pub fn step(&mut self, params: &CpgParams, tonic: &[f64], dt: f64) -> Result<()> {
        let m = self.pairs.len();
        if tonic.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: tonic.len(),
            });
        }
        let a = params.mutual_inhibit_weight;
        let b = params.self_inhibit_weight;
        let [w_down, w_up] = params.coupling_weights;
        let kr = dt / params.discharge_rate;
        let ka = dt / params.adaption_rate;
        let old = self.pairs.clone();
        for i in 0..m {
            let p = &old[i];
            let (mut ce, mut cf) = (0.0, 0.0);
            if i > 0 {
                ce += w_down * old[i - 1].z_e();
                cf += w_down * old[i - 1].z_f();
            }
            if i + 1 < m {
                ce += w_up * old[i + 1].z_e();
                cf += w_up * old[i + 1].z_f();
            }
            let u = tonic[i];
            let dx_e = -p.x_e - a * p.z_f() - b * p.v_e - ce + u;
            let dx_f = -p.x_f - a * p.z_e() - b * p.v_f - cf + u;
            let dv_e = -p.v_e + p.z_e();
            let dv_f = -p.v_f + p.z_f();
            let next = &mut self.pairs[i];
            next.x_e += kr * dx_e;
            next.x_f += kr * dx_f;
            next.v_e += ka * dv_e;
            next.v_f += ka * dv_f;
        }
        if self
            .pairs
            .iter()
            .any(|p| !(p.x_e.is_finite() && p.x_f.is_finite() && p.v_e.is_finite() && p.v_f.is_finite()))
        {
            return Err(Error::NonFinite {
                context: "CPG state",
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(m: usize, tonic: f64, seconds: f64) -> (CpgState, Vec<f64>) {
        let params = CpgParams::default();
        let mut s = CpgState::new(m);
        let steps = (seconds / 1e-3) as usize;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            s.step(&params, &vec![tonic; m], 1e-3).unwrap();
            out.push(s.output(&params, 0));
        }
        (s, out)
    }

    #[test]
    fn quiescent_without_drive() {
        let (s, out) = run(3, 0.0, 60.0);
        assert!(out.last().unwrap().abs() < 1e-12);
        assert!(s.pairs.iter().all(|p| p.x_e.abs() < 1e-9 && p.x_f.abs() < 1e-9 && p.v_e.abs() < 1e-9));
    }

    #[test]
    fn oscillates_under_constant_drive() {
        for m in [1, 3] {
            let (_, out) = run(m, 1.0, 40.0);
            let tail = &out[out.len() / 2..];
            let max = tail.iter().cloned().fold(f64::MIN, f64::max);
            let min = tail.iter().cloned().fold(f64::MAX, f64::min);
            assert!(max > 0.01 && min < -0.01, "m={m}: [{min}, {max}]");
        }
    }

    #[test]
    fn exchanging_extensor_and_flexor_negates_output() {
        let params = CpgParams::default();
        let mut a = CpgState::new(3);
        let mut b = a.swapped();
        let tonic = [0.7, 1.0, 0.4];
        for _ in 0..5000 {
            a.step(&params, &tonic, 1e-3).unwrap();
            b.step(&params, &tonic, 1e-3).unwrap();
            for (x, y) in a.outputs(&params).iter().zip(b.outputs(&params)) {
                assert_eq!(*x, -y);
            }
        }
    }

    #[test]
    fn dimension_checked() {
        let mut s = CpgState::new(2);
        assert!(s.step(&CpgParams::default(), &[1.0], 1e-3).is_err());
    }
}
