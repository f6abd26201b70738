//! A mass on a spring and damper, pushed by the torque output of one DTS
//! neuron that reads the mass position.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{DtsParams, NeuronState, Thresholds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub dts: DtsParams,
    pub thr: Thresholds,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            stiffness: 1.0,
            damping: 0.1,
            dts: DtsParams {
                c_q: 10.0,
                c_t: 1.0,
                tau: 0.1,
                dt: 1e-3,
            },
            thr: Thresholds {
                u_n: -0.1,
                u_p: -0.025,
            },
        }
    }
}

impl OscillatorParams {
    pub fn with_thresholds(thr: Thresholds) -> Self {
        Self {
            thr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.stiffness > 0.0 && self.damping >= 0.0) {
            return Err(Error::invalid(
                "oscillator needs mass > 0, stiffness > 0, damping >= 0",
            ));
        }
        self.dts.validate()
    }

    pub fn energy(&self, p: PhasePoint) -> f64 {
        0.5 * self.mass * p.q_dot * p.q_dot + 0.5 * self.stiffness * p.q * p.q
    }

    /// Same system with thresholds reflected through zero.
    pub fn mirrored(&self) -> Self {
        Self {
            thr: self.thr.mirrored(),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: f64,
    pub q_dot: f64,
}

impl PhasePoint {
    pub fn new(q: f64, q_dot: f64) -> Self {
        Self { q, q_dot }
    }
}

/// State after one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorRecord {
    pub t: f64,
    pub q: f64,
    pub q_dot: f64,
    pub u: f64,
    pub o: i8,
}

impl OscillatorRecord {
    pub fn point(&self) -> PhasePoint {
        PhasePoint::new(self.q, self.q_dot)
    }
}

/// Semi-implicit Euler: the neuron reads `q`, its force enters the
/// acceleration, velocity updates first and position uses the new velocity.
pub fn simulate(
    params: &OscillatorParams,
    initial: PhasePoint,
    steps: usize,
) -> Result<Vec<OscillatorRecord>> {
    simulate_from(params, initial, NeuronState::default(), steps)
}

pub fn simulate_from(
    params: &OscillatorParams,
    initial: PhasePoint,
    neuron: NeuronState,
    steps: usize,
) -> Result<Vec<OscillatorRecord>> {
    params.validate()?;
    if steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    let dt = params.dts.dt;
    let (mut q, mut v) = (initial.q, initial.q_dot);
    let mut neuron = neuron;
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let spike = neuron.advance(&params.dts, &params.thr, q)?;
        let acc = (-params.stiffness * q - params.damping * v + spike.torque) / params.mass;
        v += dt * acc;
        q += dt * v;
        if !(q.is_finite() && v.is_finite()) {
            return Err(Error::Divergence {
                step: k as u64,
                reason: "oscillator state is not finite".into(),
            });
        }
        out.push(OscillatorRecord {
            t: (k + 1) as f64 * dt,
            q,
            q_dot: v,
            u: neuron.u,
            o: spike.spike.as_i8(),
        });
    }
    Ok(out)
}

fn tail(traj: &[OscillatorRecord], transient_fraction: f64) -> Result<&[OscillatorRecord]> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(Error::invalid("transient fraction must lie in [0, 1)"));
    }
    let start = (traj.len() as f64 * transient_fraction).floor() as usize;
    let rest = &traj[start.min(traj.len())..];
    if rest.is_empty() {
        return Err(Error::Empty("post-transient window"));
    }
    Ok(rest)
}

/// Largest distance from a point of `a` to its nearest point of `b`.
/// Points are `(key, other)` pairs and `b` must be sorted by key; the search
/// walks outward from the insertion index and stops once the key gap alone
/// exceeds the best so far.
fn directed_hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut cmax: f64 = 0.0;
    for p in a {
        let mid = b.partition_point(|r| r.0 < p.0);
        let mut best = f64::INFINITY;
        let (mut lo, mut hi) = (mid, mid);
        loop {
            let left = lo.checked_sub(1).map(|i| p.0 - b[i].0);
            let right = (hi < b.len()).then(|| b[hi].0 - p.0);
            let (gap, idx) = match (left, right) {
                (Some(l), Some(r)) if l <= r => (l, lo - 1),
                (Some(l), None) => (l, lo - 1),
                (_, Some(r)) => (r, hi),
                (None, None) => break,
            };
            if gap * gap >= best {
                break;
            }
            if idx < lo {
                lo -= 1;
            } else {
                hi += 1;
            }
            let r = &b[idx];
            best = best.min((p.0 - r.0).powi(2) + (p.1 - r.1).powi(2));
            if best <= cmax {
                break;
            }
        }
        cmax = cmax.max(best);
    }
    cmax.sqrt()
}

/// Symmetric Hausdorff distance between the phase-space point sets that
/// remain after dropping the first `transient_fraction` of each trajectory.
pub fn limit_cycle_distance(
    a: &[OscillatorRecord],
    b: &[OscillatorRecord],
    transient_fraction: f64,
) -> Result<f64> {
    let (ta, tb) = (tail(a, transient_fraction)?, tail(b, transient_fraction)?);
    // Sweep along the wider axis.
    let spread = |f: fn(&OscillatorRecord) -> f64| {
        let (lo, hi) = ta.iter().chain(tb).map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
            (l.min(x), h.max(x))
        });
        hi - lo
    };
    let by_q = spread(|r| r.q) >= spread(|r| r.q_dot);
    let sorted = |t: &[OscillatorRecord]| {
        let mut pts: Vec<(f64, f64)> = t
            .iter()
            .map(|r| if by_q { (r.q, r.q_dot) } else { (r.q_dot, r.q) })
            .collect();
        pts.sort_by(|x, y| x.0.total_cmp(&y.0));
        pts
    };
    let (pa, pb) = (sorted(ta), sorted(tb));
    Ok(directed_hausdorff(&pa, &pb).max(directed_hausdorff(&pb, &pa)))
}

pub fn write_oscillator_csv(path: &Path, records: &[OscillatorRecord]) -> Result<()> {
    crate::io::write_csv_atomic(path, records)
}
