//! Episode evaluation and mean ± std reporting.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerKind, RandomController};
use crate::env::{EnvConfig, EnvMode, SnakeEnv};
use crate::error::{Error, Result};
use crate::exec::{self, Workers};
use crate::neuron::Spike;
use crate::ppo::Policy;

/// Anything that picks actions from raw observations.
#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    /// Mean action of a trained policy.
    Policy(Box<Policy>),
    /// Uniform draws over the action box.
    Random,
    /// The same action every step.
    Constant(Vec<f64>),
}

impl Agent {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Policy(_) => "policy",
            Self::Random => "random",
            Self::Constant(_) => "constant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub target_x: f64,
    pub target_y: f64,
    pub success: bool,
    /// Simulated seconds until success, or the time limit otherwise.
    pub game_time: f64,
    pub total_reward: f64,
    pub silence_rate: f64,
    pub destroyed: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSet {
    pub success_rate: MeanStd,
    pub game_time: MeanStd,
    pub total_reward: MeanStd,
    pub silence_rate: MeanStd,
}

impl MetricSet {
    pub fn over_episodes(results: &[EpisodeResult]) -> Result<Self> {
        let col = |f: fn(&EpisodeResult) -> f64| {
            MeanStd::of(&results.iter().map(f).collect::<Vec<_>>()).ok_or(Error::Empty("episodes"))
        };
        Ok(Self {
            success_rate: col(|r| if r.success { 1.0 } else { 0.0 })?,
            game_time: col(|r| r.game_time)?,
            total_reward: col(|r| r.total_reward)?,
            silence_rate: col(|r| r.silence_rate)?,
        })
    }

    /// Mean and std of per-group means.
    pub fn over_groups(groups: &[Vec<EpisodeResult>]) -> Result<Self> {
        let per: Vec<MetricSet> = groups
            .iter()
            .map(|g| Self::over_episodes(g))
            .collect::<Result<_>>()?;
        let col = |f: fn(&MetricSet) -> f64| {
            MeanStd::of(&per.iter().map(f).collect::<Vec<_>>()).ok_or(Error::Empty("groups"))
        };
        Ok(Self {
            success_rate: col(|m| m.success_rate.mean)?,
            game_time: col(|m| m.game_time.mean)?,
            total_reward: col(|m| m.total_reward.mean)?,
            silence_rate: col(|m| m.silence_rate.mean)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub method: String,
    pub configuration: String,
    pub episodes: usize,
    pub groups: usize,
    /// Statistics pooled over every episode.
    pub over_episodes: MetricSet,
    /// Statistics of per-group (per training seed) means.
    pub over_groups: MetricSet,
}

impl AggregateReport {
    pub fn new(
        method: impl Into<String>,
        configuration: impl Into<String>,
        groups: &[Vec<EpisodeResult>],
    ) -> Result<Self> {
        let all: Vec<EpisodeResult> = groups.iter().flatten().cloned().collect();
        Ok(Self {
            method: method.into(),
            configuration: configuration.into(),
            episodes: all.len(),
            groups: groups.len(),
            over_episodes: MetricSet::over_episodes(&all)?,
            over_groups: MetricSet::over_groups(groups)?,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::io::write_json_atomic(path, self)
    }
}

/// Text table with one row per report and both groupings.
pub fn format_table(reports: &[AggregateReport]) -> String {
    let pct = |m: MeanStd| format!("{:.2}% ± {:.2}%", 100.0 * m.mean, 100.0 * m.std);
    let num = |m: MeanStd| format!("{:.2} ± {:.2}", m.mean, m.std);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<16} {:<8} {:>20} {:>16} {:>22} {:>20}",
        "Method", "Config", "Over", "Success Rate", "Game Time (s)", "Total Reward", "Silence Rate"
    );
    for r in reports {
        for (label, m) in [("episodes", &r.over_episodes), ("seeds", &r.over_groups)] {
            let _ = writeln!(
                out,
                "{:<16} {:<16} {:<8} {:>20} {:>16} {:>22} {:>20}",
                r.method,
                r.configuration,
                label,
                pct(m.success_rate),
                num(m.game_time),
                num(m.total_reward),
                pct(m.silence_rate)
            );
        }
    }
    out
}

/// Fraction of zero entries in a spike trace, pooled over all neurons.
pub fn silence_rate(trace: &[Spike]) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::Empty("spike trace"));
    }
    Ok(trace.iter().filter(|s| s.is_silent()).count() as f64 / trace.len() as f64)
}

/// Per-episode target seeds derived from one evaluation seed.
pub fn episode_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

/// Plays one episode to the end under `env_config` as given.
pub fn run_episode(agent: &Agent, env_config: &EnvConfig, seed: u64) -> Result<EpisodeResult> {
    let mut env = SnakeEnv::new(env_config.clone())?;
    let (mut obs, target) = env.reset(seed)?;
    let (low, high) = env.action_bounds();
    let mut random = RandomController::with_bounds(low, high, env.action_dim(), seed ^ 0x5eed);
    let mut total = 0.0;
    loop {
        let action = match agent {
            Agent::Policy(p) => {
                p.validate_obs(&obs)?;
                p.mean_action(&p.normalize_obs(&obs))
                    .into_iter()
                    .map(|a| a.clamp(low, high))
                    .collect()
            }
            Agent::Random => random.sample(),
            Agent::Constant(a) => a.clone(),
        };
        let r = env.step(&action)?;
        total += r.reward;
        obs = r.observation.clone();
        if r.done() {
            let time_limit = env.config().time_limit_s;
            return Ok(EpisodeResult {
                seed,
                target_x: target.position[0],
                target_y: target.position[1],
                success: r.info.success,
                game_time: if r.info.success {
                    r.info.game_time
                } else {
                    time_limit
                },
                total_reward: total,
                silence_rate: env.episode_silence().rate().unwrap_or(0.0),
                destroyed: r.info.destroyed,
                steps: env.step_count(),
            });
        }
    }
}

/// Runs `n_episodes` under the evaluation protocol (success on touch);
/// episodes are independent and spread over `workers`.
pub fn evaluate(
    agent: &Agent,
    env_config: &EnvConfig,
    n_episodes: usize,
    seed: u64,
    workers: Workers,
) -> Result<Vec<EpisodeResult>> {
    if n_episodes == 0 {
        return Err(Error::invalid("n_episodes must be >= 1"));
    }
    let mut config = env_config.clone();
    config.mode = EnvMode::Eval;
    let seeds = episode_seeds(seed, n_episodes);
    exec::map(workers, &seeds, |s| run_episode(agent, &config, *s))
        .into_iter()
        .collect()
}

pub fn configuration_label(kind: ControllerKind, m: usize, n: usize) -> String {
    format!("{kind}-{m}x{n}")
}

pub fn write_episodes_csv(path: &Path, results: &[EpisodeResult]) -> Result<()> {
    crate::io::write_csv_atomic(path, results)
}
