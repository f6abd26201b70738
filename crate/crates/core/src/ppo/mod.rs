//! Proximal policy optimization over [`SnakeEnv`].

pub mod adam;
pub mod gae;
pub mod mlp;
pub mod policy;

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, SnakeEnv, StepResult};
use crate::error::{Error, Result};
use crate::exec::{self, Workers};

pub use adam::{clip_grad_norm, Adam};
pub use gae::{compute_gae, normalize};
pub use mlp::Mlp;
pub use policy::{LossCoefficients, LossStats, Minibatch, Policy, RunningMeanStd};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub total_steps: u64,
    /// Transitions collected per environment between updates.
    pub horizon: usize,
    pub n_envs: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
    pub normalize_obs: bool,
    pub normalize_reward: bool,
    pub seed: u64,
    pub workers: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            total_steps: 10_000_000,
            horizon: 2048,
            n_envs: 1,
            epochs: 10,
            minibatch_size: 64,
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            log_std_init: 0.0,
            normalize_obs: true,
            normalize_reward: true,
            seed: 0,
            workers: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0 && self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if self.horizon == 0 || self.n_envs == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return bad("horizon, n_envs, epochs and minibatch_size must be >= 1");
        }
        if self.total_steps == 0 {
            return bad("total_steps must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning_rate and max_grad_norm must be > 0");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty and positive");
        }
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.horizon * self.n_envs
    }

    pub fn iterations(&self) -> u64 {
        self.total_steps.div_ceil(self.batch_size() as u64)
    }

    fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            clip: self.clip,
            value: self.value_coef,
            entropy: self.entropy_coef,
        }
    }
}

/// Transitions of one rollout in time-major order (`t * n_envs + env`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub terminals: Vec<bool>,
    /// One bootstrap value per environment.
    pub last_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Fills advantages and returns environment by environment.
    pub fn finish(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let n = self.n_envs;
        let len = self.len();
        if n == 0 || len % n != 0 || self.last_values.len() != n {
            return Err(Error::invalid("rollout buffer is not rectangular"));
        }
        self.advantages = vec![0.0; len];
        self.returns = vec![0.0; len];
        for e in 0..n {
            let idx: Vec<usize> = (e..len).step_by(n).collect();
            let rewards: Vec<f64> = idx.iter().map(|&i| self.rewards[i]).collect();
            let terminals: Vec<bool> = idx.iter().map(|&i| self.terminals[i]).collect();
            let mut values: Vec<f64> = idx.iter().map(|&i| self.values[i]).collect();
            values.push(self.last_values[e]);
            let (adv, ret) = compute_gae(&rewards, &values, &terminals, gamma, lambda)?;
            for (k, &i) in idx.iter().enumerate() {
                self.advantages[i] = adv[k];
                self.returns[i] = ret[k];
            }
        }
        Ok(())
    }

    fn minibatch(&self, indices: &[usize], advantages: &[f64]) -> Minibatch {
        Minibatch {
            obs: indices.iter().map(|&i| self.obs[i].clone()).collect(),
            actions: indices.iter().map(|&i| self.actions[i].clone()).collect(),
            old_log_probs: indices.iter().map(|&i| self.log_probs[i]).collect(),
            advantages: indices.iter().map(|&i| advantages[i]).collect(),
            returns: indices.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

/// Outcome of one finished training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub reward: f64,
    pub length: usize,
    pub success: bool,
    pub destroyed: bool,
    pub game_time: f64,
    pub silence_rate: f64,
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogRecord {
    pub iteration: u64,
    pub env_steps: u64,
    pub episodes: u64,
    /// Mean over the last 100 finished episodes; NaN before the first.
    pub mean_ep_reward: f64,
    pub success_rate: f64,
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub iteration: u64,
    pub env_steps: u64,
    pub policy: Policy,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json_atomic(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config {
                location: path.display().to_string(),
                message: format!(
                    "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                    ck.format_version
                ),
            });
        }
        let env = SnakeEnv::new(ck.env.clone())?;
        if env.observation_dim() != ck.policy.obs_dim() || env.action_dim() != ck.policy.act_dim()
        {
            return Err(Error::DimensionMismatch {
                expected: env.observation_dim(),
                got: ck.policy.obs_dim(),
            });
        }
        Ok(ck)
    }
}

struct Slot {
    env: SnakeEnv,
    obs: Vec<f64>,
    ep_reward: f64,
    ep_len: usize,
    discounted: f64,
}

pub struct Trainer {
    config: PpoConfig,
    env_config: EnvConfig,
    slots: Vec<Slot>,
    policy: Policy,
    adam: Adam,
    rng: ChaCha8Rng,
    reward_stats: Option<RunningMeanStd>,
    recent: VecDeque<EpisodeSummary>,
    episodes: Vec<EpisodeSummary>,
    env_steps: u64,
    iteration: u64,
}

impl Trainer {
    pub fn new(env_config: EnvConfig, config: PpoConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let probe = SnakeEnv::new(env_config.clone())?;
        let policy = Policy::new(
            probe.observation_dim(),
            probe.action_dim(),
            &config.hidden,
            config.log_std_init,
            config.normalize_obs,
            &mut rng,
        )?;
        let mut slots = Vec::with_capacity(config.n_envs);
        for _ in 0..config.n_envs {
            let mut env = probe.clone();
            let (obs, _) = env.reset(rng.gen())?;
            slots.push(Slot {
                env,
                obs,
                ep_reward: 0.0,
                ep_len: 0,
                discounted: 0.0,
            });
        }
        let mut trainer = Self {
            adam: Adam::new(policy.param_count()),
            policy,
            reward_stats: config.normalize_reward.then(|| RunningMeanStd::new(1)),
            config,
            env_config,
            slots,
            rng,
            recent: VecDeque::with_capacity(100),
            episodes: Vec::new(),
            env_steps: 0,
            iteration: 0,
        };
        let first: Vec<Vec<f64>> = trainer.slots.iter().map(|s| s.obs.clone()).collect();
        if let Some(n) = trainer.policy.obs_norm.as_mut() {
            n.update(&first);
        }
        Ok(trainer)
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn episodes(&self) -> &[EpisodeSummary] {
        &self.episodes
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            env: self.env_config.clone(),
            ppo: self.config.clone(),
            iteration: self.iteration,
            env_steps: self.env_steps,
            policy: self.policy.clone(),
        }
    }

    /// Mean reward of the last (up to) `n` finished episodes.
    pub fn recent_mean_reward(&self, n: usize) -> Option<f64> {
        let k = self.episodes.len().min(n);
        (k > 0).then(|| {
            self.episodes[self.episodes.len() - k..]
                .iter()
                .map(|e| e.reward)
                .sum::<f64>()
                / k as f64
        })
    }

    pub fn collect_rollout(&mut self) -> Result<RolloutBuffer> {
        let n = self.slots.len();
        let workers = Workers::new(self.config.workers)?;
        let (low, high) = self.env_config.action_bounds();
        let mut buf = RolloutBuffer {
            n_envs: n,
            ..RolloutBuffer::default()
        };
        for _ in 0..self.config.horizon {
            let mut executed = Vec::with_capacity(n);
            for slot in &self.slots {
                let obs = self.policy.normalize_obs(&slot.obs);
                let (action, lp, value) = self.policy.sample(&obs, &mut self.rng);
                executed.push(action.iter().map(|a| a.clamp(low, high)).collect::<Vec<_>>());
                buf.obs.push(obs);
                buf.actions.push(action);
                buf.log_probs.push(lp);
                buf.values.push(value);
            }
            let mut jobs: Vec<(&mut Slot, Vec<f64>)> =
                self.slots.iter_mut().zip(executed).collect();
            let results: Vec<Result<StepResult>> =
                exec::map_mut(workers, &mut jobs, |(slot, a)| slot.env.step(a));
            drop(jobs);
            let mut next_obs = Vec::with_capacity(n);
            for (slot, res) in self.slots.iter_mut().zip(results) {
                let res = res?;
                self.env_steps += 1;
                slot.ep_reward += res.reward;
                slot.ep_len += 1;
                let mut reward = res.reward;
                if let Some(stats) = self.reward_stats.as_mut() {
                    slot.discounted = slot.discounted * self.config.gamma + res.reward;
                    stats.update_one(&[slot.discounted]);
                    reward = (reward / (stats.var[0] + 1e-8).sqrt()).clamp(-10.0, 10.0);
                }
                buf.rewards.push(reward);
                buf.terminals.push(res.done());
                if res.done() {
                    let summary = EpisodeSummary {
                        reward: slot.ep_reward,
                        length: slot.ep_len,
                        success: res.info.success,
                        destroyed: res.info.destroyed,
                        game_time: res.info.game_time,
                        silence_rate: slot.env.episode_silence().rate().unwrap_or(0.0),
                    };
                    if self.recent.len() == 100 {
                        self.recent.pop_front();
                    }
                    self.recent.push_back(summary);
                    self.episodes.push(summary);
                    let (obs, _) = slot.env.reset(self.rng.gen())?;
                    slot.obs = obs;
                    slot.ep_reward = 0.0;
                    slot.ep_len = 0;
                    slot.discounted = 0.0;
                } else {
                    slot.obs = res.observation;
                }
                next_obs.push(slot.obs.clone());
            }
            if let Some(norm) = self.policy.obs_norm.as_mut() {
                norm.update(&next_obs);
            }
        }
        buf.last_values = self
            .slots
            .iter()
            .map(|s| self.policy.value_of(&self.policy.normalize_obs(&s.obs)))
            .collect();
        buf.finish(self.config.gamma, self.config.lambda)?;
        Ok(buf)
    }

    /// Several epochs of clipped-surrogate minibatch updates.
    pub fn update(&mut self, buf: &RolloutBuffer) -> Result<LossStats> {
        let mut advantages = buf.advantages.clone();
        normalize(&mut advantages);
        let coef = self.config.coefficients();
        let mut indices: Vec<usize> = (0..buf.len()).collect();
        let mut params = self.policy.flat_params();
        let mut mean = LossStats::default();
        let mut count = 0.0;
        for _ in 0..self.config.epochs {
            indices.shuffle(&mut self.rng);
            for chunk in indices.chunks(self.config.minibatch_size) {
                let batch = buf.minibatch(chunk, &advantages);
                let (stats, mut grad) = self.policy.loss_and_grad(&batch, &coef)?;
                clip_grad_norm(&mut grad, self.config.max_grad_norm);
                self.adam.step(&mut params, &grad, self.config.learning_rate);
                self.policy.set_flat_params(&params)?;
                mean.total += stats.total;
                mean.policy += stats.policy;
                mean.value += stats.value;
                mean.entropy += stats.entropy;
                mean.approx_kl += stats.approx_kl;
                mean.clip_fraction += stats.clip_fraction;
                count += 1.0;
            }
        }
        for v in [
            &mut mean.total,
            &mut mean.policy,
            &mut mean.value,
            &mut mean.entropy,
            &mut mean.approx_kl,
            &mut mean.clip_fraction,
        ] {
            *v /= count;
        }
        Ok(mean)
    }

    /// Collect, update, and report one iteration.
    pub fn iterate(&mut self) -> Result<TrainingLogRecord> {
        let buf = self.collect_rollout()?;
        let stats = self.update(&buf)?;
        self.iteration += 1;
        let recent = self.recent.len() as f64;
        let (mean_ep_reward, success_rate) = if self.recent.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                self.recent.iter().map(|e| e.reward).sum::<f64>() / recent,
                self.recent.iter().filter(|e| e.success).count() as f64 / recent,
            )
        };
        Ok(TrainingLogRecord {
            iteration: self.iteration,
            env_steps: self.env_steps,
            episodes: self.episodes.len() as u64,
            mean_ep_reward,
            success_rate,
            loss: stats.total,
            policy_loss: stats.policy,
            value_loss: stats.value,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
        })
    }

    /// Runs every iteration, handing each log row to `on_iteration`.
    pub fn run<F>(&mut self, mut on_iteration: F) -> Result<Vec<TrainingLogRecord>>
    where
        F: FnMut(&Trainer, &TrainingLogRecord) -> Result<()>,
    {
        let mut log = Vec::new();
        while self.iteration < self.config.iterations() {
            let rec = self.iterate()?;
            on_iteration(self, &rec)?;
            log.push(rec);
        }
        Ok(log)
    }
}

pub struct TrainOutcome {
    pub policy: Policy,
    pub log: Vec<TrainingLogRecord>,
    pub episodes: Vec<EpisodeSummary>,
    pub checkpoint: Checkpoint,
}

pub fn train(env_config: EnvConfig, config: PpoConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(env_config, config)?;
    let log = trainer.run(|_, _| Ok(()))?;
    Ok(TrainOutcome {
        policy: trainer.policy.clone(),
        checkpoint: trainer.checkpoint(),
        episodes: trainer.episodes.clone(),
        log,
    })
}

pub fn write_training_log_csv(path: &Path, log: &[TrainingLogRecord]) -> Result<()> {
    crate::io::write_csv_atomic(path, log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::ControllerKind;

    fn small() -> (EnvConfig, PpoConfig) {
        let env = EnvConfig::new(ControllerKind::SpikingSoft, 1, 3);
        let ppo = PpoConfig {
            total_steps: 64,
            horizon: 32,
            n_envs: 2,
            epochs: 2,
            minibatch_size: 16,
            hidden: vec![8, 8],
            ..PpoConfig::default()
        };
        (env, ppo)
    }

    #[test]
    fn one_update_when_total_equals_batch() {
        let (env, mut ppo) = small();
        ppo.total_steps = 64;
        assert_eq!(ppo.iterations(), 1);
        let out = train(env, ppo).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].env_steps, 64);
    }

    #[test]
    fn reproducible_across_worker_counts() {
        let (env, ppo) = small();
        let a = train(env.clone(), ppo.clone()).unwrap();
        let b = train(env.clone(), PpoConfig { workers: 2, ..ppo }).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(
            format!("{:?}", a.log),
            format!("{:?}", b.log),
        );
    }

    #[test]
    fn buffer_gae_per_env() {
        let mut buf = RolloutBuffer {
            n_envs: 2,
            obs: vec![vec![]; 4],
            rewards: vec![1.0, 0.0, 1.0, 0.0],
            values: vec![0.0; 4],
            terminals: vec![false; 4],
            last_values: vec![0.0, 0.0],
            ..RolloutBuffer::default()
        };
        buf.finish(0.99, 0.95).unwrap();
        assert!((buf.advantages[0] - 1.9405).abs() < 1e-12);
        assert!((buf.advantages[2] - 1.0).abs() < 1e-12);
        assert_eq!(buf.advantages[1], 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = PpoConfig::default();
        assert!(c.validate().is_ok());
        c.gamma = 0.0;
        assert!(c.validate().is_err());
        let c = PpoConfig {
            clip: 1.0,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let (env, ppo) = small();
        let out = train(env, ppo).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        out.checkpoint.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.policy, out.policy);
        let mut bad = out.checkpoint.clone();
        bad.format_version = 99;
        bad.save(&path).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
