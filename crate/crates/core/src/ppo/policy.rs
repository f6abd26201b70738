//! Diagonal-Gaussian policy: a mean network, a separate value network and a
//! state-independent log standard deviation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpCache};
use crate::error::{Error, Result};

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Running mean and variance with the parallel-merge update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 1e-4,
        }
    }

    pub fn update(&mut self, batch: &[Vec<f64>]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        for j in 0..self.mean.len() {
            let bm = batch.iter().map(|x| x[j]).sum::<f64>() / n;
            let bv = batch.iter().map(|x| (x[j] - bm).powi(2)).sum::<f64>() / n;
            let delta = bm - self.mean[j];
            let total = self.count + n;
            let m2 = self.var[j] * self.count + bv * n + delta * delta * self.count * n / total;
            self.mean[j] += delta * n / total;
            self.var[j] = m2 / total;
        }
        self.count += n;
    }

    pub fn update_one(&mut self, x: &[f64]) {
        self.update(std::slice::from_ref(&x.to_vec()));
    }

    pub fn normalize(&self, x: &[f64], clip: f64) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(v, (m, s2))| ((v - m) / (s2 + 1e-8).sqrt()).clamp(-clip, clip))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub mean: Mlp,
    pub value: Mlp,
    pub log_std: Vec<f64>,
    /// Observation statistics, `None` to feed raw observations.
    pub obs_norm: Option<RunningMeanStd>,
    pub obs_clip: f64,
}

/// Samples for one loss evaluation. Observations are already normalized.
#[derive(Debug, Clone, Default)]
pub struct Minibatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefficients {
    pub clip: f64,
    pub value: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl Policy {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        log_std_init: f64,
        normalize_obs: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let mut mean_sizes = sizes.clone();
        mean_sizes.push(act_dim);
        sizes.push(1);
        let gain = std::f64::consts::SQRT_2;
        Ok(Self {
            mean: Mlp::init(&mean_sizes, gain, 0.01, rng)?,
            value: Mlp::init(&sizes, gain, 1.0, rng)?,
            log_std: vec![log_std_init; act_dim],
            obs_norm: normalize_obs.then(|| RunningMeanStd::new(obs_dim)),
            obs_clip: 10.0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn param_count(&self) -> usize {
        self.mean.param_count() + self.value.param_count() + self.log_std.len()
    }

    /// `[mean params, value params, log_std]`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.mean.params);
        p.extend_from_slice(&self.value.params);
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: p.len(),
            });
        }
        let (a, rest) = p.split_at(self.mean.param_count());
        let (b, c) = rest.split_at(self.value.param_count());
        self.mean.params.copy_from_slice(a);
        self.value.params.copy_from_slice(b);
        self.log_std.copy_from_slice(c);
        Ok(())
    }

    pub fn normalize_obs(&self, raw: &[f64]) -> Vec<f64> {
        match &self.obs_norm {
            Some(n) => n.normalize(raw, self.obs_clip),
            None => raw.to_vec(),
        }
    }

    pub fn validate_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.obs_dim(),
                got: obs.len(),
            });
        }
        Ok(())
    }

    /// Mean action for a normalized observation.
    pub fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
        self.mean.forward(obs)
    }

    pub fn value_of(&self, obs: &[f64]) -> f64 {
        self.value.forward(obs)[0]
    }

    pub fn log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        mean.iter()
            .zip(action)
            .zip(&self.log_std)
            .map(|((m, a), ls)| {
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * LOG_2PI
            })
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (LOG_2PI + 1.0)).sum()
    }

    /// Draws an unclamped action for a normalized observation; returns
    /// `(action, log_prob, value)`.
    pub fn sample(&self, obs: &[f64], rng: &mut impl Rng) -> (Vec<f64>, f64, f64) {
        let mean = self.mean_action(obs);
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let e: f64 = rng.sample(StandardNormal);
                m + ls.exp() * e
            })
            .collect();
        let lp = self.log_prob(&mean, &action);
        (action, lp, self.value_of(obs))
    }

    /// PPO loss of a minibatch and its gradient in the
    /// [`Policy::flat_params`] layout:
    ///
    /// ```text
    /// L = -mean(min(r A, clip(r, 1-e, 1+e) A)) + c_v mean((V - R)^2) - c_e H
    /// ```
    pub fn loss_and_grad(
        &self,
        batch: &Minibatch,
        coef: &LossCoefficients,
    ) -> Result<(LossStats, Vec<f64>)> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::Empty("minibatch"));
        }
        let (np, nv) = (self.mean.param_count(), self.value.param_count());
        let mut grad = vec![0.0; self.param_count()];
        let (g_mean, rest) = grad.split_at_mut(np);
        let (g_value, g_log_std) = rest.split_at_mut(nv);
        let inv_b = 1.0 / b as f64;
        let std: Vec<f64> = self.log_std.iter().map(|ls| ls.exp()).collect();

        let mut stats = LossStats::default();
        let mut cache = MlpCache::default();
        let mut clipped = 0usize;
        for i in 0..b {
            let obs = &batch.obs[i];
            let action = &batch.actions[i];
            let adv = batch.advantages[i];

            self.mean.forward_cached(obs, &mut cache);
            let mu = cache.output().to_vec();
            let lp = self.log_prob(&mu, action);
            let log_ratio = lp - batch.old_log_probs[i];
            let ratio = log_ratio.exp();
            let clipped_ratio = ratio.clamp(1.0 - coef.clip, 1.0 + coef.clip);
            let unclipped_term = ratio * adv;
            let clipped_term = clipped_ratio * adv;
            let (surrogate, d_ratio) = if unclipped_term <= clipped_term {
                (unclipped_term, adv)
            } else {
                (clipped_term, 0.0)
            };
            if (ratio - 1.0).abs() > coef.clip {
                clipped += 1;
            }
            stats.policy -= surrogate * inv_b;
            stats.approx_kl += (ratio - 1.0 - log_ratio) * inv_b;

            // d L / d log_prob
            let d_lp = -inv_b * d_ratio * ratio;
            if d_lp != 0.0 {
                let mut d_mu = vec![0.0; mu.len()];
                for j in 0..mu.len() {
                    let z = (action[j] - mu[j]) / std[j];
                    d_mu[j] = d_lp * z / std[j];
                    g_log_std[j] += d_lp * (z * z - 1.0);
                }
                self.mean.backward(&cache, &d_mu, g_mean);
            }

            self.value.forward_cached(obs, &mut cache);
            let v = cache.output()[0];
            let err = v - batch.returns[i];
            stats.value += err * err * inv_b;
            self.value
                .backward(&cache, &[coef.value * 2.0 * err * inv_b], g_value);
        }
        stats.entropy = self.entropy();
        for g in g_log_std.iter_mut() {
            *g -= coef.entropy;
        }
        stats.clip_fraction = clipped as f64 * inv_b;
        stats.total = stats.policy + coef.value * stats.value - coef.entropy * stats.entropy;
        if !stats.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "PPO loss or gradient",
            });
        }
        Ok((stats, grad))
    }
}
