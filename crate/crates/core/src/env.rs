//! Target-reaching environment with a gym-style `reset` / `step` API.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{
    control_interval, Controller, ControllerCommand, ControllerKind, ControllerParams, IntervalEnd,
    SilenceCounter,
};
use crate::error::{Error, Result};
use crate::rod::{EnvPhysics, RodMaterial, Vec3};
use crate::snake::{SegmentRecord, Snake, SnakeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSampling {
    /// Area-uniform over the closed disk.
    Disk,
    /// Uniform on the boundary circle.
    Circle,
}

/// Which distance ends an episode as a success.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvMode {
    /// Success when the goal-reward radius is reached.
    Train,
    /// Success when the head touches the target.
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub position: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// `(radius, reward)` tiers, checked in order.
    pub range_tiers: [(f64, f64); 3],
    pub goal_radius: f64,
    pub goal_reward: f64,
    pub destruction_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            range_tiers: [(0.25, 10.0), (0.5, 5.0), (1.0, 1.0)],
            goal_radius: 0.1,
            goal_reward: 250.0,
            destruction_penalty: -5000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub l: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.r1 + self.r2 + self.r3 + self.r4
    }
}

pub fn compute_reward_with(cfg: &RewardConfig, l: f64, destroyed: bool) -> RewardBreakdown {
    let r1 = cfg
        .range_tiers
        .iter()
        .find(|(radius, _)| l < *radius)
        .map_or(0.0, |(_, r)| *r);
    let r2 = if l < cfg.goal_radius { cfg.goal_reward } else { 0.0 };
    let r4 = if destroyed { cfg.destruction_penalty } else { 0.0 };
    RewardBreakdown {
        r1,
        r2,
        r3: -l * l,
        r4,
        l,
    }
}

pub fn compute_reward(l: f64, destroyed: bool) -> RewardBreakdown {
    compute_reward_with(&RewardConfig::default(), l, destroyed)
}

pub fn is_success(l: f64, target_radius: f64) -> bool {
    l < target_radius
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub controller: ControllerKind,
    pub snake: SnakeConfig,
    pub material: RodMaterial,
    pub physics: EnvPhysics,
    pub controller_params: ControllerParams,
    pub reward: RewardConfig,
    pub target_center: [f64; 2],
    pub target_radius_sample: f64,
    pub target_sampling: TargetSampling,
    /// Radius of the target object; reaching it counts as a touch.
    pub touch_radius: f64,
    pub agent_hz: f64,
    pub time_limit_s: f64,
    pub mode: EnvMode,
    /// Keep a per-step JSON-lines log of the episode.
    pub record_log: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::new(ControllerKind::SpikingSoft, 3, 3)
    }
}

impl EnvConfig {
    pub fn new(controller: ControllerKind, m: usize, n: usize) -> Self {
        Self {
            controller,
            snake: SnakeConfig::new(m, n),
            material: RodMaterial::default(),
            physics: EnvPhysics::default(),
            controller_params: ControllerParams::default(),
            reward: RewardConfig::default(),
            target_center: [4.0, 0.0],
            target_radius_sample: 8.0,
            target_sampling: TargetSampling::Disk,
            touch_radius: 0.25,
            agent_hz: 2.0,
            time_limit_s: 50.0,
            mode: EnvMode::Train,
            record_log: false,
        }
    }

    pub fn dt(&self) -> f64 {
        self.controller_params.dts.dt
    }

    /// Physics steps per RL step.
    pub fn inner_steps(&self) -> usize {
        (1.0 / (self.agent_hz * self.dt())).round() as usize
    }

    pub fn max_episode_steps(&self) -> usize {
        (self.time_limit_s * self.agent_hz).round() as usize
    }

    pub fn observation_dim(&self) -> usize {
        2 * self.snake.node_count() + self.controller.observation_extra(self.snake.m)
    }

    pub fn action_dim(&self) -> usize {
        self.controller.action_dim(self.snake.m)
    }

    pub fn action_bounds(&self) -> (f64, f64) {
        self.controller.action_bounds()
    }

    pub fn success_radius(&self) -> f64 {
        match self.mode {
            EnvMode::Train => self.reward.goal_radius,
            EnvMode::Eval => self.touch_radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.snake.validate()?;
        self.material.validate()?;
        self.physics.validate()?;
        self.controller_params.dts.validate()?;
        self.controller_params.cpg.validate()?;
        if !(self.agent_hz > 0.0 && self.time_limit_s > 0.0) {
            return Err(Error::invalid("agent_hz and time_limit_s must be > 0"));
        }
        if self.inner_steps() == 0 || self.max_episode_steps() == 0 {
            return Err(Error::invalid("agent rate too high for the physics step"));
        }
        if !(self.target_radius_sample >= 0.0 && self.touch_radius > 0.0) {
            return Err(Error::invalid("target radii must be positive"));
        }
        if !(self.reward.goal_radius > 0.0) {
            return Err(Error::invalid("goal radius must be > 0"));
        }
        Ok(())
    }

    pub fn sample_target(&self, rng: &mut impl Rng) -> Target {
        let [cx, cy] = self.target_center;
        let r_max = self.target_radius_sample;
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = match self.target_sampling {
            TargetSampling::Disk => r_max * rng.gen::<f64>().sqrt(),
            TargetSampling::Circle => r_max,
        };
        Target {
            position: [cx + r * theta.cos(), cy + r * theta.sin()],
            radius: self.touch_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub reward: RewardBreakdown,
    pub silence: SilenceCounter,
    pub success: bool,
    pub destroyed: bool,
    pub game_time: f64,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Success or destruction.
    pub terminated: bool,
    /// Time limit reached.
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// One JSON-lines row of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLogRecord {
    pub step: usize,
    pub action: Vec<f64>,
    pub l: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub reward: f64,
    pub terminated: bool,
}

#[derive(Debug, Clone)]
pub struct SnakeEnv {
    config: EnvConfig,
    snake: Snake,
    controller: Controller,
    target: Target,
    step_count: usize,
    done: bool,
    last_command: ControllerCommand,
    episode_silence: SilenceCounter,
    log: Vec<EpisodeLogRecord>,
}

impl SnakeEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let snake = Snake::new(
            config.snake,
            config.material,
            config.physics,
            config.dt(),
        )?;
        let controller =
            Controller::new(config.controller, config.snake.m, &config.controller_params)?;
        Ok(Self {
            target: Target {
                position: config.target_center,
                radius: config.touch_radius,
            },
            snake,
            controller,
            step_count: 0,
            done: true,
            last_command: ControllerCommand::default(),
            episode_silence: SilenceCounter::default(),
            log: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn observation_dim(&self) -> usize {
        self.config.observation_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.config.action_dim()
    }

    pub fn action_bounds(&self) -> (f64, f64) {
        self.config.action_bounds()
    }

    pub fn snake(&self) -> &Snake {
        &self.snake
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Silence accumulated since the last reset.
    pub fn episode_silence(&self) -> SilenceCounter {
        self.episode_silence
    }

    pub fn log(&self) -> &[EpisodeLogRecord] {
        &self.log
    }

    pub fn write_log_jsonl(&self, path: &Path) -> Result<()> {
        crate::io::write_jsonl_atomic(path, &self.log)
    }

    /// Starts an episode with a target drawn from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<(Vec<f64>, Target)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = self.config.sample_target(&mut rng);
        self.reset_with_target(target)
    }

    pub fn reset_with_target(&mut self, target: Target) -> Result<(Vec<f64>, Target)> {
        self.snake = Snake::new(
            self.config.snake,
            self.config.material,
            self.config.physics,
            self.config.dt(),
        )?;
        self.controller.reset();
        self.target = target;
        self.step_count = 0;
        self.done = false;
        self.last_command = ControllerCommand::default();
        self.episode_silence = SilenceCounter::default();
        self.log.clear();
        Ok((self.observation(), target))
    }

    /// `x_target - x_i` for every node, then `y_target - y_i`, then the
    /// controller's own entries.
    pub fn observation(&self) -> Vec<f64> {
        observation_of(&self.snake, &self.target, &self.controller)
    }

    pub fn head_distance(&self) -> f64 {
        self.snake.head_distance(self.target.position)
    }

    /// Per-segment deformation and last applied couple.
    pub fn segment_records(&self) -> Result<Vec<SegmentRecord>> {
        (0..self.snake.segment_count())
            .map(|i| {
                Ok(SegmentRecord {
                    t: self.snake.time(),
                    segment: i,
                    d: self.snake.deformation(i)?,
                    gamma: self.last_command.torques.get(i).copied().unwrap_or(0.0),
                })
            })
            .collect()
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.step_observed(action, |_, _| {})
    }

    /// Like [`SnakeEnv::step`], calling `observe` after every physics step.
    pub fn step_observed<F>(&mut self, action: &[f64], mut observe: F) -> Result<StepResult>
    where
        F: FnMut(&Snake, &ControllerCommand),
    {
        if self.done {
            return Err(Error::invalid("step called on a finished episode; call reset"));
        }
        if action.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        self.controller.set_action(action)?;
        let success_radius = self.config.success_radius();
        let target = self.target.position;
        let before = self.snake.clone();
        let mut last_l = self.head_distance();
        let mut last_cmd = None;
        let report = control_interval(
            &mut self.snake,
            &mut self.controller,
            self.config.inner_steps(),
            |snake, cmd| {
                observe(snake, cmd);
                last_l = snake.head_distance(target);
                last_cmd = Some(cmd.clone());
                last_l < success_radius
            },
        )?;
        self.step_count += 1;
        self.episode_silence.merge(report.silence);
        if let Some(cmd) = last_cmd {
            self.last_command = cmd;
        }

        let destroyed = report.end == IntervalEnd::Destroyed;
        let success = report.end == IntervalEnd::Stopped;
        let observation = if destroyed {
            let obs = observation_of(&before, &self.target, &self.controller);
            if obs.iter().all(|v| v.is_finite()) {
                obs
            } else {
                vec![0.0; self.observation_dim()]
            }
        } else {
            self.observation()
        };
        let breakdown = compute_reward_with(&self.config.reward, last_l, destroyed);
        let terminated = destroyed || success;
        let truncated = !terminated && self.step_count >= self.config.max_episode_steps();
        self.done = terminated || truncated;
        let reward = breakdown.total();
        if self.config.record_log {
            self.log.push(EpisodeLogRecord {
                step: self.step_count,
                action: action.to_vec(),
                l: breakdown.l,
                r1: breakdown.r1,
                r2: breakdown.r2,
                r3: breakdown.r3,
                r4: breakdown.r4,
                reward,
                terminated,
            });
        }
        Ok(StepResult {
            observation,
            reward,
            terminated,
            truncated,
            info: StepInfo {
                reward: breakdown,
                silence: report.silence,
                success,
                destroyed,
                game_time: self.snake.time(),
                step: self.step_count,
            },
        })
    }
}

fn observation_of(snake: &Snake, target: &Target, controller: &Controller) -> Vec<f64> {
    let p = &snake.rod.positions;
    let [tx, ty] = target.position;
    let mut obs = Vec::with_capacity(2 * p.len() + controller.segment_count());
    obs.extend(p.iter().map(|x: &Vec3| tx - x.x));
    obs.extend(p.iter().map(|x: &Vec3| ty - x.y));
    obs.extend(controller.observation_extra());
    obs
}
