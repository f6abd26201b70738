//! Segment controllers. Every controller turns the current snake state into
//! one couple per segment, applied through [`Snake::apply_couple`].

pub mod cpg;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{DtsParams, NeuronState, Spike, Thresholds};
use crate::snake::Snake;

pub use cpg::{CpgParams, CpgState, OscillatorPair};

/// Bound on each SpikingSoft action entry (mean and interval).
pub const SPIKING_ACTION_LIMIT: f64 = 3.25;
/// Bound on each vanilla torque (N·m).
pub const VANILLA_TORQUE_LIMIT: f64 = 50.0;
/// Upper bound on each CPG tonic input.
pub const CPG_TONIC_LIMIT: f64 = 3.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    SpikingSoft,
    Vanilla,
    Cpg,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [Self::SpikingSoft, Self::Vanilla, Self::Cpg];

    pub fn name(self) -> &'static str {
        match self {
            Self::SpikingSoft => "spikingsoft",
            Self::Vanilla => "vanilla",
            Self::Cpg => "cpg",
        }
    }

    /// Action length for an `m`-segment snake.
    pub fn action_dim(self, m: usize) -> usize {
        match self {
            Self::SpikingSoft => 2 * m,
            Self::Vanilla | Self::Cpg => m,
        }
    }

    /// Inclusive `(low, high)` bounds shared by every action entry.
    pub fn action_bounds(self) -> (f64, f64) {
        match self {
            Self::SpikingSoft => (-SPIKING_ACTION_LIMIT, SPIKING_ACTION_LIMIT),
            Self::Vanilla => (-VANILLA_TORQUE_LIMIT, VANILLA_TORQUE_LIMIT),
            Self::Cpg => (0.0, CPG_TONIC_LIMIT),
        }
    }

    /// Observation entries contributed by the controller itself.
    pub fn observation_extra(self, m: usize) -> usize {
        match self {
            Self::SpikingSoft => m,
            Self::Vanilla | Self::Cpg => 0,
        }
    }

    pub fn is_event_triggered(self) -> bool {
        matches!(self, Self::SpikingSoft)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spikingsoft" | "spiking" | "dts" => Ok(Self::SpikingSoft),
            "vanilla" | "torque" => Ok(Self::Vanilla),
            "cpg" | "matsuoka" => Ok(Self::Cpg),
            other => Err(Error::invalid(format!(
                "unknown controller '{other}' (expected spikingsoft, vanilla or cpg)"
            ))),
        }
    }
}

/// Torques (and spikes, for SpikingSoft) for one physics step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerCommand {
    pub torques: Vec<f64>,
    pub spikes: Option<Vec<Spike>>,
}

impl ControllerCommand {
    /// Segments whose output is exactly zero this step.
    pub fn silent_outputs(&self) -> usize {
        match &self.spikes {
            Some(s) => s.iter().filter(|o| o.is_silent()).count(),
            None => self.torques.iter().filter(|g| **g == 0.0).count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SilenceCounter {
    pub zero_output_steps: u64,
    pub total_steps: u64,
}

impl SilenceCounter {
    pub fn record(&mut self, zero: u64, total: u64) {
        debug_assert!(zero <= total);
        self.zero_output_steps += zero;
        self.total_steps += total;
    }

    pub fn merge(&mut self, other: SilenceCounter) {
        self.record(other.zero_output_steps, other.total_steps);
    }

    /// `None` before anything was counted.
    pub fn rate(&self) -> Option<f64> {
        (self.total_steps > 0).then(|| self.zero_output_steps as f64 / self.total_steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikingSoft {
    pub params: DtsParams,
    pub neurons: Vec<NeuronState>,
    pub thresholds: Vec<Thresholds>,
}

impl SpikingSoft {
    pub fn new(params: DtsParams, m: usize) -> Result<Self> {
        params.validate()?;
        let wide = Thresholds::new(-SPIKING_ACTION_LIMIT * 2.0, SPIKING_ACTION_LIMIT * 2.0)?;
        Ok(Self {
            params,
            neurons: vec![NeuronState::default(); m],
            thresholds: vec![wide; m],
        })
    }

    /// Sets thresholds from `(mu_0, sigma_0, mu_1, sigma_1, ...)`.
    pub fn set_action(&mut self, action: &[f64]) -> Result<()> {
        let m = self.neurons.len();
        check_len(action, 2 * m)?;
        for (thr, pair) in self.thresholds.iter_mut().zip(action.chunks_exact(2)) {
            let mu = clamp_finite(pair[0], -SPIKING_ACTION_LIMIT, SPIKING_ACTION_LIMIT)?;
            let sigma = clamp_finite(pair[1], -SPIKING_ACTION_LIMIT, SPIKING_ACTION_LIMIT)?;
            *thr = Thresholds::from_action(mu, sigma)?;
        }
        Ok(())
    }

    pub fn potentials(&self) -> Vec<f64> {
        self.neurons.iter().map(|n| n.u).collect()
    }

    pub fn reset(&mut self) {
        self.neurons.iter_mut().for_each(NeuronState::reset);
    }

    fn command(&mut self, snake: &Snake) -> Result<ControllerCommand> {
        let m = self.neurons.len();
        let mut torques = Vec::with_capacity(m);
        let mut spikes = Vec::with_capacity(m);
        for i in 0..m {
            let q = snake.deformation(i)?;
            let out = self.neurons[i].advance(&self.params, &self.thresholds[i], q)?;
            torques.push(out.torque);
            spikes.push(out.spike);
        }
        Ok(ControllerCommand {
            torques,
            spikes: Some(spikes),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vanilla {
    pub torques: Vec<f64>,
}

impl Vanilla {
    pub fn new(m: usize) -> Self {
        Self {
            torques: vec![0.0; m],
        }
    }

    pub fn set_action(&mut self, action: &[f64]) -> Result<()> {
        check_len(action, self.torques.len())?;
        for (t, a) in self.torques.iter_mut().zip(action) {
            *t = clamp_finite(*a, -VANILLA_TORQUE_LIMIT, VANILLA_TORQUE_LIMIT)?;
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.torques.iter_mut().for_each(|t| *t = 0.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpg {
    pub params: CpgParams,
    pub state: CpgState,
    pub tonic: Vec<f64>,
    pub dt: f64,
}

impl Cpg {
    pub fn new(params: CpgParams, m: usize, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::invalid("CPG dt must be > 0"));
        }
        Ok(Self {
            params,
            state: CpgState::new(m),
            tonic: vec![0.0; m],
            dt,
        })
    }

    pub fn set_action(&mut self, action: &[f64]) -> Result<()> {
        check_len(action, self.tonic.len())?;
        for (u, a) in self.tonic.iter_mut().zip(action) {
            *u = clamp_finite(*a, 0.0, CPG_TONIC_LIMIT)?;
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.state.reset();
        self.tonic.iter_mut().for_each(|u| *u = 0.0);
    }

    fn command(&mut self) -> Result<ControllerCommand> {
        let torques = self
            .state
            .outputs(&self.params)
            .into_iter()
            .map(|y| y * self.params.torque_gain)
            .collect();
        self.state.step(&self.params, &self.tonic, self.dt)?;
        Ok(ControllerCommand {
            torques,
            spikes: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Controller {
    SpikingSoft(SpikingSoft),
    Vanilla(Vanilla),
    Cpg(Cpg),
}

/// Constants for building any controller.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerParams {
    pub dts: DtsParams,
    pub cpg: CpgParams,
}

impl Controller {
    pub fn new(kind: ControllerKind, m: usize, params: &ControllerParams) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("controller needs at least one segment"));
        }
        Ok(match kind {
            ControllerKind::SpikingSoft => Self::SpikingSoft(SpikingSoft::new(params.dts, m)?),
            ControllerKind::Vanilla => Self::Vanilla(Vanilla::new(m)),
            ControllerKind::Cpg => Self::Cpg(Cpg::new(params.cpg, m, params.dts.dt)?),
        })
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            Self::SpikingSoft(_) => ControllerKind::SpikingSoft,
            Self::Vanilla(_) => ControllerKind::Vanilla,
            Self::Cpg(_) => ControllerKind::Cpg,
        }
    }

    pub fn segment_count(&self) -> usize {
        match self {
            Self::SpikingSoft(c) => c.neurons.len(),
            Self::Vanilla(c) => c.torques.len(),
            Self::Cpg(c) => c.tonic.len(),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.kind().action_dim(self.segment_count())
    }

    /// Clamps and installs an RL action; it stays in force until the next call.
    pub fn set_action(&mut self, action: &[f64]) -> Result<()> {
        match self {
            Self::SpikingSoft(c) => c.set_action(action),
            Self::Vanilla(c) => c.set_action(action),
            Self::Cpg(c) => c.set_action(action),
        }
    }

    pub fn reset(&mut self) {
        match self {
            Self::SpikingSoft(c) => c.reset(),
            Self::Vanilla(c) => c.reset(),
            Self::Cpg(c) => c.reset(),
        }
    }

    /// Membrane potentials for SpikingSoft, empty otherwise.
    pub fn observation_extra(&self) -> Vec<f64> {
        match self {
            Self::SpikingSoft(c) => c.potentials(),
            _ => Vec::new(),
        }
    }

    /// Output for the next physics step. Advances internal state.
    pub fn command(&mut self, snake: &Snake) -> Result<ControllerCommand> {
        match self {
            Self::SpikingSoft(c) => c.command(snake),
            Self::Vanilla(c) => Ok(ControllerCommand {
                torques: c.torques.clone(),
                spikes: None,
            }),
            Self::Cpg(c) => c.command(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalEnd {
    /// All requested steps ran.
    Completed,
    /// The observer asked to stop.
    Stopped,
    /// The rod diverged or left the admissible region.
    Destroyed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub steps: usize,
    pub silence: SilenceCounter,
    pub end: IntervalEnd,
}

/// Runs up to `inner_steps` physics steps: controller output, couples, rod
/// step. After every step `observe` sees the snake and the command that was
/// applied; returning `true` ends the interval early.
pub fn control_interval<F>(
    snake: &mut Snake,
    controller: &mut Controller,
    inner_steps: usize,
    mut observe: F,
) -> Result<IntervalReport>
where
    F: FnMut(&Snake, &ControllerCommand) -> bool,
{
    let m = snake.segment_count();
    if controller.segment_count() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: controller.segment_count(),
        });
    }
    let mut silence = SilenceCounter::default();
    for k in 0..inner_steps {
        let cmd = match controller.command(snake) {
            Ok(cmd) => cmd,
            Err(e) if is_physical_failure(&e) => return Ok(destroyed(k, silence)),
            Err(e) => return Err(e),
        };
        for (i, gamma) in cmd.torques.iter().enumerate() {
            snake.apply_couple(i, *gamma)?;
        }
        silence.record(cmd.silent_outputs() as u64, m as u64);
        match snake.step() {
            Ok(()) => {}
            Err(e) if is_physical_failure(&e) => return Ok(destroyed(k + 1, silence)),
            Err(e) => return Err(e),
        }
        if snake.is_destroyed() {
            return Ok(destroyed(k + 1, silence));
        }
        if observe(snake, &cmd) {
            return Ok(IntervalReport {
                steps: k + 1,
                silence,
                end: IntervalEnd::Stopped,
            });
        }
    }
    Ok(IntervalReport {
        steps: inner_steps,
        silence,
        end: IntervalEnd::Completed,
    })
}

fn is_physical_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Divergence { .. } | Error::NonFinite { .. } | Error::Degenerate(_)
    )
}

fn destroyed(steps: usize, silence: SilenceCounter) -> IntervalReport {
    IntervalReport {
        steps,
        silence,
        end: IntervalEnd::Destroyed,
    }
}

/// SpikingSoft interval with thresholds held fixed.
pub fn spikingsoft_control_interval(
    snake: &mut Snake,
    controller: &mut SpikingSoft,
    inner_steps: usize,
) -> Result<IntervalReport> {
    let mut c = Controller::SpikingSoft(controller.clone());
    let report = control_interval(snake, &mut c, inner_steps, |_, _| false);
    if let Controller::SpikingSoft(inner) = c {
        *controller = inner;
    }
    report
}

/// Constant torques, clamped to the vanilla range, held for the interval.
pub fn vanilla_control_interval(
    snake: &mut Snake,
    torques: &[f64],
    inner_steps: usize,
) -> Result<IntervalReport> {
    let mut v = Vanilla::new(snake.segment_count());
    v.set_action(torques)?;
    control_interval(snake, &mut Controller::Vanilla(v), inner_steps, |_, _| false)
}

pub fn cpg_control_interval(
    snake: &mut Snake,
    cpg: &mut Cpg,
    tonic: &[f64],
    inner_steps: usize,
) -> Result<IntervalReport> {
    cpg.set_action(tonic)?;
    let mut c = Controller::Cpg(cpg.clone());
    let report = control_interval(snake, &mut c, inner_steps, |_, _| false);
    if let Controller::Cpg(inner) = c {
        *cpg = inner;
    }
    report
}

/// Uniform actions over a box, one draw per RL step.
#[derive(Debug, Clone)]
pub struct RandomController {
    rng: ChaCha8Rng,
    low: f64,
    high: f64,
    dim: usize,
}

impl RandomController {
    pub fn new(kind: ControllerKind, m: usize, seed: u64) -> Self {
        let (low, high) = kind.action_bounds();
        Self::with_bounds(low, high, kind.action_dim(m), seed)
    }

    pub fn with_bounds(low: f64, high: f64, dim: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            low,
            high,
            dim,
        }
    }

    pub fn sample(&mut self) -> Vec<f64> {
        (0..self.dim)
            .map(|_| self.rng.gen_range(self.low..=self.high))
            .collect()
    }
}

/// One row of a per-physics-step controller trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlTraceRecord {
    pub t: f64,
    pub segment: usize,
    pub d: f64,
    pub o: i8,
    pub gamma: f64,
}

impl ControlTraceRecord {
    /// Rows for every segment after one step.
    pub fn from_step(snake: &Snake, cmd: &ControllerCommand) -> Result<Vec<Self>> {
        cmd.torques
            .iter()
            .enumerate()
            .map(|(i, gamma)| {
                Ok(Self {
                    t: snake.time(),
                    segment: i,
                    d: snake.deformation(i)?,
                    o: cmd.spikes.as_ref().map_or(0, |s| s[i].as_i8()),
                    gamma: *gamma,
                })
            })
            .collect()
    }
}

pub fn write_control_trace_csv(path: &Path, records: &[ControlTraceRecord]) -> Result<()> {
    crate::io::write_csv_atomic(path, records)
}

fn check_len(action: &[f64], expected: usize) -> Result<()> {
    if action.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: action.len(),
        });
    }
    Ok(())
}

fn clamp_finite(v: f64, lo: f64, hi: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite { context: "action" });
    }
    Ok(v.clamp(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rod::{EnvPhysics, RodMaterial};
    use crate::snake::SnakeConfig;

    fn snake(m: usize) -> Snake {
        Snake::new(
            SnakeConfig::new(m, 3),
            RodMaterial::default(),
            EnvPhysics::default(),
            1e-3,
        )
        .unwrap()
    }

    #[test]
    fn kinds_parse_and_size() {
        assert_eq!("SpikingSoft".parse::<ControllerKind>().unwrap(), ControllerKind::SpikingSoft);
        assert!("pid".parse::<ControllerKind>().is_err());
        assert_eq!(ControllerKind::SpikingSoft.action_dim(3), 6);
        assert_eq!(ControllerKind::Vanilla.action_dim(3), 3);
        assert_eq!(ControllerKind::Cpg.observation_extra(3), 0);
    }

    #[test]
    fn wide_thresholds_stay_silent() {
        let mut s = snake(3);
        let mut c = Controller::new(ControllerKind::SpikingSoft, 3, &ControllerParams::default())
            .unwrap();
        c.set_action(&[0.0, 3.0, 0.0, 3.0, 0.0, 3.0]).unwrap();
        let r = control_interval(&mut s, &mut c, 500, |_, _| false).unwrap();
        assert_eq!(r.end, IntervalEnd::Completed);
        assert_eq!(r.silence.zero_output_steps, 1500);
        assert_eq!(r.silence.rate(), Some(1.0));
    }

    #[test]
    fn actions_are_clamped_and_checked() {
        let mut c = Controller::new(ControllerKind::Vanilla, 2, &ControllerParams::default())
            .unwrap();
        c.set_action(&[80.0, -80.0]).unwrap();
        match &c {
            Controller::Vanilla(v) => assert_eq!(v.torques, vec![50.0, -50.0]),
            _ => unreachable!(),
        }
        assert!(c.set_action(&[1.0]).is_err());
        assert!(c.set_action(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn observer_can_stop_early() {
        let mut s = snake(1);
        let mut c = Controller::new(ControllerKind::Vanilla, 1, &ControllerParams::default())
            .unwrap();
        let mut seen = 0;
        let r = control_interval(&mut s, &mut c, 500, |_, _| {
            seen += 1;
            seen == 7
        })
        .unwrap();
        assert_eq!((r.steps, r.end), (7, IntervalEnd::Stopped));
    }

    #[test]
    fn random_actions_reproducible_and_in_range() {
        let mut a = RandomController::new(ControllerKind::SpikingSoft, 3, 5);
        let mut b = RandomController::new(ControllerKind::SpikingSoft, 3, 5);
        for _ in 0..100 {
            let x = a.sample();
            assert_eq!(x, b.sample());
            assert!(x.iter().all(|v| v.abs() <= SPIKING_ACTION_LIMIT));
        }
    }
}
