//! Proximal policy optimization with GAE, clipped surrogate, entropy bonus,
//! per-minibatch advantage normalization and a linearly decaying learning rate.
//!
//! ```text
//! repeat until total_steps environment steps:
//!   roll out every environment in lock-step for `rollout_steps`
//!   advantages/returns via GAE(γ, λ) per environment stream
//!   for `epochs` passes over shuffled minibatches of `batch_size`:
//!     one Adam step on  −min(rA, clip(r)A) + c_v·(V − R)² − c_e·H
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, EpisodeSummary};
use crate::episode::{EpisodeStatus, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::policy::{Checkpoint, PolicyNet, ValueNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Linear,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Aggregate environment steps across all environments.
    pub total_steps: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub clip_eps: f64,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub gae_lambda: f64,
    pub advantage_normalization: bool,
    pub lr_schedule: LrSchedule,
    pub n_envs: usize,
    /// Steps collected per environment between updates.
    pub rollout_steps: usize,
    pub vf_coef: f64,
    /// Global gradient-norm clip; 0 disables.
    pub max_grad_norm: f64,
    /// Multiplier applied to rewards before they enter the buffer.
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            total_steps: 50_000,
            batch_size: 64,
            epochs: 10,
            lr: 3e-4,
            clip_eps: 0.2,
            gamma: 0.99,
            entropy_coef: 5e-4,
            gae_lambda: 0.95,
            advantage_normalization: true,
            lr_schedule: LrSchedule::Linear,
            n_envs: 9,
            rollout_steps: 128,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
            hidden: vec![64, 64],
            init_log_std: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return fail("clip_eps must be positive");
        }
        if self.batch_size == 0 || (self.advantage_normalization && self.batch_size < 2) {
            return fail("batch_size must be at least 2 when normalizing advantages");
        }
        if self.epochs == 0 || self.n_envs == 0 || self.rollout_steps == 0 {
            return fail("epochs, n_envs and rollout_steps must be positive");
        }
        if !(self.lr >= 0.0) || !(self.vf_coef >= 0.0) || !(self.entropy_coef >= 0.0) || !(self.max_grad_norm >= 0.0) {
            return fail("lr and loss coefficients must be non-negative");
        }
        if !(self.reward_scale > 0.0) || self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("reward_scale must be positive and hidden layers non-empty");
        }
        Ok(())
    }
}

/// `lr0 · (1 − step / total_steps)`.
pub fn lr_at(step: u64, total_steps: u64, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    lr0 * (1.0 - (step.min(total_steps) as f64) / total_steps as f64)
}

/// Generalized advantage estimation over one environment stream.
///
/// `values` holds `V(s_0) … V(s_{n−1})` followed by the bootstrap value of
/// the state after the last step. Returns `(advantages, returns)`.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(Error::Input(format!(
            "gae expects n rewards, n dones and n+1 values; got {}, {}, {}",
            n,
            dones.len(),
            values.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// One stored transition, ready for optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub obs: [f64; OBS_DIM],
    /// Unclamped action as sampled.
    pub action: [f64; ACT_DIM],
    pub log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Per-environment rollout storage.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    streams: Vec<Stream>,
}

#[derive(Debug, Clone, Default)]
struct Stream {
    obs: Vec<[f64; OBS_DIM]>,
    actions: Vec<[f64; ACT_DIM]>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize) -> Self {
        Self { streams: vec![Stream::default(); n_envs] }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        env: usize,
        obs: [f64; OBS_DIM],
        action: [f64; ACT_DIM],
        log_prob: f64,
        reward: f64,
        value: f64,
        done: bool,
    ) {
        let s = &mut self.streams[env];
        s.obs.push(obs);
        s.actions.push(action);
        s.log_probs.push(log_prob);
        s.rewards.push(reward);
        s.values.push(value);
        s.dones.push(done);
    }

    pub fn len(&self) -> usize {
        self.streams.iter().map(|s| s.obs.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Runs GAE per stream and flattens into samples, env-major.
    pub fn finish(&self, last_values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<Sample>> {
        if last_values.len() != self.streams.len() {
            return Err(Error::Input("one bootstrap value per environment required".into()));
        }
        let mut out = Vec::with_capacity(self.len());
        for (s, &last) in self.streams.iter().zip(last_values) {
            let mut values = s.values.clone();
            values.push(last);
            let (adv, ret) = gae(&s.rewards, &values, &s.dones, gamma, lambda)?;
            for t in 0..s.obs.len() {
                out.push(Sample {
                    obs: s.obs[t],
                    action: s.actions[t],
                    log_prob: s.log_probs[t],
                    advantage: adv[t],
                    ret: ret[t],
                });
            }
        }
        Ok(out)
    }
}

/// Weights of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Gradients w.r.t. the flat policy vector θ (weights then log-std) and value weights φ.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub policy: Vec<f64>,
    pub value: Vec<f64>,
}

/// Standardizes to mean 0 and population standard deviation 1.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
}

/// Mean-reduced PPO loss over `batch` and, when `with_grad`, its exact gradient.
/// Advantages are used as given; normalize them beforehand if desired.
pub fn loss_and_gradients(
    policy: &PolicyNet,
    value: &ValueNet,
    batch: &[Sample],
    clip_eps: f64,
    weights: LossWeights,
    with_grad: bool,
) -> Result<(LossStats, Option<Gradients>)> {
    if batch.is_empty() {
        return Err(Error::Input("empty minibatch".into()));
    }
    let n = batch.len() as f64;
    let n_mean = policy.mean.params().len();
    let mut g_policy = vec![0.0; if with_grad { policy.param_count() } else { 0 }];
    let mut g_value = vec![0.0; if with_grad { value.net.params().len() } else { 0 }];
    let inv_std = policy.log_std.map(|s| (-s).exp());
    let mut stats = LossStats::default();
    let mut clipped = 0usize;

    for s in batch {
        let trace = policy.mean.forward(&s.obs);
        let mean = trace.output();
        let mut z = [0.0; ACT_DIM];
        let mut log_prob = 0.0;
        for i in 0..ACT_DIM {
            z[i] = (s.action[i] - mean[i]) * inv_std[i];
            log_prob += -0.5 * z[i] * z[i] - policy.log_std[i] - crate::policy::HALF_LN_2PI;
        }
        let log_ratio = log_prob - s.log_prob;
        let ratio = log_ratio.exp();
        let clipped_ratio = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        let unclipped_obj = ratio * s.advantage;
        let clipped_obj = clipped_ratio * s.advantage;
        stats.policy_loss -= unclipped_obj.min(clipped_obj) / n;
        stats.approx_kl += ((ratio - 1.0) - log_ratio) / n;
        if (ratio - 1.0).abs() > clip_eps {
            clipped += 1;
        }

        let v_trace = value.net.forward(&s.obs);
        let v = v_trace.output()[0];
        let err = v - s.ret;
        stats.value_loss += err * err / n;

        if with_grad {
            // The min selects the unclipped branch unless clipping makes it smaller.
            let d_logp = if unclipped_obj <= clipped_obj { -weights.policy * ratio * s.advantage / n } else { 0.0 };
            if d_logp != 0.0 {
                let mut d_mean = [0.0; ACT_DIM];
                for i in 0..ACT_DIM {
                    d_mean[i] = d_logp * z[i] * inv_std[i];
                    g_policy[n_mean + i] += d_logp * (z[i] * z[i] - 1.0);
                }
                policy.mean.backward(&trace, &d_mean, &mut g_policy[..n_mean]);
            }
            let d_v = weights.value * 2.0 * err / n;
            if d_v != 0.0 {
                value.net.backward(&v_trace, &[d_v], &mut g_value);
            }
        }
    }
    stats.entropy = policy.entropy();
    stats.clip_fraction = clipped as f64 / n;
    stats.total =
        weights.policy * stats.policy_loss + weights.value * stats.value_loss - weights.entropy * stats.entropy;
    if with_grad {
        for i in 0..ACT_DIM {
            g_policy[n_mean + i] -= weights.entropy;
        }
    }
    if !stats.total.is_finite() {
        return Err(Error::Numerical(format!("non-finite PPO loss: {stats:?}")));
    }
    Ok((stats, with_grad.then_some(Gradients { policy: g_policy, value: g_value })))
}

/// Adam optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1, beta2, eps }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Optimizer state for both networks.
#[derive(Debug, Clone)]
pub struct Optimizers {
    pub policy: Adam,
    pub value: Adam,
}

impl Optimizers {
    pub fn new(policy: &PolicyNet, value: &ValueNet, config: &PpoConfig) -> Self {
        Self {
            policy: Adam::new(policy.param_count(), config.adam_beta1, config.adam_beta2, config.adam_eps),
            value: Adam::new(value.net.params().len(), config.adam_beta1, config.adam_beta2, config.adam_eps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub minibatches: usize,
}

/// `epochs` passes of minibatch Adam steps over `samples`.
///
/// On a non-finite loss the networks are restored to their state at entry
/// and the error is returned.
pub fn ppo_update<R: rand::Rng + ?Sized>(
    policy: &mut PolicyNet,
    value: &mut ValueNet,
    opt: &mut Optimizers,
    samples: &[Sample],
    config: &PpoConfig,
    lr: f64,
    rng: &mut R,
) -> Result<UpdateStats> {
    if samples.is_empty() {
        return Err(Error::Input("empty rollout buffer".into()));
    }
    let snapshot = (policy.clone(), value.clone(), opt.clone());
    let weights = LossWeights { policy: 1.0, value: config.vf_coef, entropy: config.entropy_coef };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stats = UpdateStats::default();
    let mut theta = policy.params();
    let mut batch = Vec::with_capacity(config.batch_size);

    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            if config.advantage_normalization && chunk.len() < 2 {
                continue;
            }
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));
            if config.advantage_normalization {
                let mut adv: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
                normalize_advantages(&mut adv);
                batch.iter_mut().zip(adv).for_each(|(s, a)| s.advantage = a);
            }
            let result = loss_and_gradients(policy, value, &batch, config.clip_eps, weights, true);
            let (ls, grads) = match result {
                Ok((ls, Some(g))) => (ls, g),
                Ok((_, None)) => unreachable!("gradients requested"),
                Err(e) => {
                    (*policy, *value, *opt) = snapshot;
                    return Err(e);
                }
            };
            let Gradients { policy: mut gp, value: mut gv } = grads;
            if config.max_grad_norm > 0.0 {
                let norm = gp.iter().chain(&gv).map(|g| g * g).sum::<f64>().sqrt();
                if norm > config.max_grad_norm {
                    let s = config.max_grad_norm / norm;
                    gp.iter_mut().chain(gv.iter_mut()).for_each(|g| *g *= s);
                }
            }
            opt.policy.step(&mut theta, &gp, lr);
            policy.set_params(&theta)?;
            opt.value.step(value.net.params_mut(), &gv, lr);

            stats.policy_loss += ls.policy_loss;
            stats.value_loss += ls.value_loss;
            stats.entropy += ls.entropy;
            stats.clip_fraction += ls.clip_fraction;
            stats.approx_kl += ls.approx_kl;
            stats.minibatches += 1;
        }
    }
    if theta.iter().chain(value.net.params()).any(|p| !p.is_finite()) {
        (*policy, *value, *opt) = snapshot;
        return Err(Error::Numerical("non-finite parameters after update".into()));
    }
    if stats.minibatches > 0 {
        let m = stats.minibatches as f64;
        stats.policy_loss /= m;
        stats.value_loss /= m;
        stats.entropy /= m;
        stats.clip_fraction /= m;
        stats.approx_kl /= m;
    }
    Ok(stats)
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub env_steps: u64,
    /// Mean total reward of episodes finished during the rollout (NaN if none).
    pub mean_reward: f64,
    pub success_rate: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<IterationLog>,
    pub episodes: Vec<EpisodeSummary>,
}

/// Derives an independent seed for a named sub-stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs rollout/update cycles until `config.total_steps` aggregate steps.
///
/// Environments step in lock-step on the calling thread, so a fixed seed
/// reproduces the log exactly. `on_iteration` sees every log row together
/// with the current parameters (for periodic checkpoints).
pub fn train<E, F, H>(
    config: &PpoConfig,
    mut env_factory: F,
    initial: Option<Checkpoint>,
    stage: &str,
    seed: u64,
    mut on_iteration: H,
) -> Result<TrainOutcome>
where
    E: Environment,
    F: FnMut(usize) -> Result<E>,
    H: FnMut(&IterationLog, &Checkpoint) -> Result<()>,
{
    config.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let (mut policy, mut value) = match initial {
        Some(ck) => {
            if ck.hidden() != config.hidden {
                return Err(Error::Config(format!(
                    "checkpoint hidden layers {:?} differ from configured {:?}",
                    ck.hidden(),
                    config.hidden
                )));
            }
            (ck.policy, ck.value)
        }
        None => (
            PolicyNet::new(&config.hidden, config.init_log_std, &mut init_rng),
            ValueNet::new(&config.hidden, &mut init_rng),
        ),
    };
    let make_checkpoint = |p: &PolicyNet, v: &ValueNet, steps: u64| Checkpoint {
        policy: p.clone(),
        value: v.clone(),
        stage: stage.to_string(),
        env_steps: steps,
    };
    if config.total_steps == 0 {
        return Ok(TrainOutcome {
            checkpoint: make_checkpoint(&policy, &value, 0),
            log: Vec::new(),
            episodes: Vec::new(),
        });
    }

    let mut envs = (0..config.n_envs)
        .map(|i| env_factory(i).map_err(|e| Error::Config(format!("environment {i} failed to start: {e}"))))
        .collect::<Result<Vec<E>>>()?;
    let mut act_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let mut opt = Optimizers::new(&policy, &value, config);
    let mut obs: Vec<[f64; OBS_DIM]> = envs.iter().map(|e| e.observe()).collect();
    let mut env_steps = 0u64;
    let mut log = Vec::new();
    let mut episodes = Vec::new();
    let n_envs = config.n_envs as u64;

    while env_steps < config.total_steps {
        let remaining = config.total_steps - env_steps;
        let len = (config.rollout_steps as u64).min(remaining.div_ceil(n_envs)) as usize;
        let lr = match config.lr_schedule {
            LrSchedule::Linear => lr_at(env_steps, config.total_steps, config.lr),
            LrSchedule::Constant => config.lr,
        };
        let mut buffer = RolloutBuffer::new(config.n_envs);
        let mut finished = Vec::new();
        for _ in 0..len {
            for (i, env) in envs.iter_mut().enumerate() {
                let (action, log_prob) = policy.act(&obs[i], &mut act_rng)?;
                let v = value.value(&obs[i])?;
                let tr = env.step(action)?;
                buffer.push(i, obs[i], action, log_prob, tr.reward * config.reward_scale, v, tr.done);
                obs[i] = tr.observation;
                if let Some(s) = tr.summary {
                    finished.push(s);
                }
            }
        }
        env_steps += len as u64 * n_envs;
        let last_values = obs.iter().map(|o| value.value(o)).collect::<Result<Vec<_>>>()?;
        let samples = buffer.finish(&last_values, config.gamma, config.gae_lambda)?;
        let stats = ppo_update(&mut policy, &mut value, &mut opt, &samples, config, lr, &mut shuffle_rng)?;

        let (mean_reward, success_rate) = if finished.is_empty() {
            (f64::NAN, 0.0)
        } else {
            let n = finished.len() as f64;
            (
                finished.iter().map(|s| s.total_reward).sum::<f64>() / n,
                finished.iter().filter(|s| s.status == EpisodeStatus::Reached).count() as f64 / n,
            )
        };
        let row = IterationLog {
            iteration: log.len(),
            env_steps,
            mean_reward,
            success_rate,
            clip_fraction: stats.clip_fraction,
            entropy: stats.entropy,
            lr,
        };
        on_iteration(&row, &make_checkpoint(&policy, &value, env_steps))?;
        log.push(row);
        episodes.extend(finished);
    }
    Ok(TrainOutcome { checkpoint: make_checkpoint(&policy, &value, env_steps), log, episodes })
}

pub fn write_training_log(path: &std::path::Path, log: &[IterationLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "env_steps", "mean_reward", "success_rate", "clip_fraction", "entropy", "lr"])?;
    for r in log {
        w.write_record([
            r.iteration.to_string(),
            r.env_steps.to_string(),
            r.mean_reward.to_string(),
            r.success_rate.to_string(),
            r.clip_fraction.to_string(),
            r.entropy.to_string(),
            r.lr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    #[test]
    fn lr_schedule_points() {
        assert_eq!(lr_at(0, 1000, 3e-4), 3e-4);
        assert_eq!(lr_at(1000, 1000, 3e-4), 0.0);
        assert!((lr_at(500, 1000, 3e-4) - 1.5e-4).abs() < 1e-18);
    }

    /// Direct evaluation of the n-step GAE definition, independent of the
    /// backward recursion: A_t = Σ_l (γλ)^l δ_{t+l}, truncated at episode end.
    fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
        let n = r.len();
        let delta: Vec<f64> = (0..n).map(|t| r[t] + gamma * v[t + 1] * if d[t] { 0.0 } else { 1.0 } - v[t]).collect();
        (0..n)
            .map(|t| {
                let mut sum = 0.0;
                let mut w = 1.0;
                for l in t..n {
                    sum += w * delta[l];
                    if d[l] {
                        break;
                    }
                    w *= gamma * lambda;
                }
                sum
            })
            .collect()
    }

    #[test]
    fn gae_three_step_example() {
        let r = [1.0, 0.0, 1.0];
        let v = [0.5, 0.5, 0.5, 0.0];
        let d = [false, false, false];
        let (adv, ret) = gae(&r, &v, &d, 0.99, 0.95).unwrap();
        let oracle = gae_oracle(&r, &v, &d, 0.99, 0.95);
        // Frozen from the oracle: δ = (0.995, −0.005, 0.5), γλ = 0.9405.
        let frozen = [1.432_567_625, 0.465_25, 0.5];
        for t in 0..3 {
            assert!((adv[t] - oracle[t]).abs() < 1e-12);
            assert!((adv[t] - frozen[t]).abs() < 1e-9, "{t}: {}", adv[t]);
            assert!((ret[t] - adv[t] - v[t]).abs() < 1e-15);
        }
    }

    #[test]
    fn gae_lambda_zero_is_td() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let r: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..21).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d: Vec<bool> = (0..20).map(|_| rng.random_bool(0.2)).collect();
            let (adv, _) = gae(&r, &v, &d, 0.97, 0.0).unwrap();
            for t in 0..20 {
                let td = r[t] + 0.97 * v[t + 1] * if d[t] { 0.0 } else { 1.0 } - v[t];
                assert_eq!(adv[t], td);
            }
            let (adv, _) = gae(&r, &v, &d, 0.97, 0.9).unwrap();
            let oracle = gae_oracle(&r, &v, &d, 0.97, 0.9);
            for t in 0..20 {
                assert!((adv[t] - oracle[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gae_monte_carlo_limit() {
        let r = [1.0, 2.0, 3.0, 4.0, 5.0];
        let v = [0.0; 6];
        let d = [false, true, false, false, true];
        let (adv, _) = gae(&r, &v, &d, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![3.0, 2.0, 12.0, 9.0, 5.0]);
    }

    #[test]
    fn gae_length_mismatch() {
        assert!(matches!(gae(&[1.0], &[0.0], &[false], 0.9, 0.9), Err(Error::Input(_))));
    }

    fn nets(seed: u64) -> (PolicyNet, ValueNet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (PolicyNet::new(&[16, 16], -0.2, &mut rng), ValueNet::new(&[16, 16], &mut rng))
    }

    fn random_batch(policy: &PolicyNet, n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut obs = [0.0; OBS_DIM];
                obs.iter_mut().for_each(|o| *o = rng.random_range(-1.0..1.0));
                let (action, lp) = policy.act(&obs, &mut rng).unwrap();
                Sample {
                    obs,
                    action,
                    log_prob: lp + rng.random_range(-0.1..0.1),
                    advantage: rng.random_range(-2.0..2.0),
                    ret: rng.random_range(-1.0..1.0),
                }
            })
            .collect()
    }

    const W: LossWeights = LossWeights { policy: 1.0, value: 0.5, entropy: 5e-4 };

    #[test]
    fn identical_params_give_unit_ratios() {
        let (p, v) = nets(1);
        let mut batch = random_batch(&p, 32, 2);
        for s in &mut batch {
            s.log_prob = p.log_prob(&s.obs, &s.action).unwrap();
        }
        let (stats, _) = loss_and_gradients(&p, &v, &batch, 0.2, W, false).unwrap();
        assert_eq!(stats.clip_fraction, 0.0);
        assert!(stats.approx_kl.abs() < 1e-15);
    }

    #[test]
    fn clipped_sample_has_no_policy_gradient() {
        let (p, v) = nets(3);
        let mut batch = random_batch(&p, 1, 4);
        let s = &mut batch[0];
        s.advantage = 1.5;
        // r = 1 + 2ε = 1.4.
        s.log_prob = p.log_prob(&s.obs, &s.action).unwrap() - 1.4f64.ln();
        let w = LossWeights { policy: 1.0, value: 0.0, entropy: 0.0 };
        let (stats, g) = loss_and_gradients(&p, &v, &batch, 0.2, w, true).unwrap();
        assert_eq!(stats.clip_fraction, 1.0);
        assert!(g.unwrap().policy.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_weights_zero_gradient() {
        let (p, v) = nets(5);
        let batch = random_batch(&p, 10, 6);
        let w = LossWeights { policy: 0.0, value: 0.0, entropy: 0.0 };
        let g = loss_and_gradients(&p, &v, &batch, 0.2, w, true).unwrap().1.unwrap();
        assert!(g.policy.iter().chain(&g.value).all(|&x| x == 0.0));
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let (p, v) = nets(7);
        let batch = random_batch(&p, 10, 8);
        let doubled: Vec<Sample> = batch.iter().chain(&batch).copied().collect();
        let g1 = loss_and_gradients(&p, &v, &batch, 0.2, W, true).unwrap().1.unwrap();
        let g2 = loss_and_gradients(&p, &v, &doubled, 0.2, W, true).unwrap().1.unwrap();
        for (a, b) in g1.policy.iter().chain(&g1.value).zip(g2.policy.iter().chain(&g2.value)) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn two_sample_normalization() {
        let mut a = [3.0, 7.5];
        normalize_advantages(&mut a);
        assert!((a[0] + 1.0).abs() < 1e-8 && (a[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn entropy_matches_log_std() {
        let (mut p, v) = nets(9);
        p.log_std = [0.3, -1.1];
        let batch = random_batch(&p, 4, 10);
        let (stats, _) = loss_and_gradients(&p, &v, &batch, 0.2, W, false).unwrap();
        let c = (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0;
        assert!((stats.entropy - (0.3 - 1.1 + 2.0 * c)).abs() < 1e-12);
    }

    #[test]
    fn clip_fraction_in_unit_interval() {
        let (p, v) = nets(11);
        for seed in 0..20 {
            let batch = random_batch(&p, 16, seed);
            let (s, _) = loss_and_gradients(&p, &v, &batch, 0.05, W, false).unwrap();
            assert!((0.0..=1.0).contains(&s.clip_fraction));
        }
    }

    #[test]
    fn update_moves_mean_along_score() {
        // Toy: single-layer policy whose only free input is a constant 1 in the
        // first observation slot. With equal positive advantages and no value or
        // entropy terms, the mean must move toward the sampled action.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut policy = PolicyNet::new(&[1], 0.0, &mut rng);
        policy.mean.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let mut value = ValueNet::new(&[1], &mut rng);
        let mut obs = [0.0; OBS_DIM];
        obs[0] = 1.0;
        let action = [1.0, -1.0];
        let lp = policy.log_prob(&obs, &action).unwrap();
        let samples = vec![Sample { obs, action, log_prob: lp, advantage: 1.0, ret: 0.0 }; 8];
        let config = PpoConfig {
            epochs: 1,
            batch_size: 8,
            advantage_normalization: false,
            vf_coef: 0.0,
            entropy_coef: 0.0,
            max_grad_norm: 0.0,
            hidden: vec![1],
            ..PpoConfig::default()
        };
        let mut opt = Optimizers::new(&policy, &value, &config);
        let before = policy.action_mean(&obs).unwrap();
        ppo_update(&mut policy, &mut value, &mut opt, &samples, &config, 1e-2, &mut rng).unwrap();
        let after = policy.action_mean(&obs).unwrap();
        assert!(after[0] > before[0]);
        assert!(after[1] < before[1]);
    }

    #[test]
    fn nan_loss_aborts_and_restores() {
        let (mut p, mut v) = nets(13);
        let mut batch = random_batch(&p, 8, 14);
        batch[3].ret = f64::NAN;
        let config = PpoConfig { hidden: vec![16, 16], batch_size: 8, ..PpoConfig::default() };
        let mut opt = Optimizers::new(&p, &v, &config);
        let (p0, v0) = (p.clone(), v.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = ppo_update(&mut p, &mut v, &mut opt, &batch, &config, 3e-4, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert_eq!((p, v), (p0, v0));
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut adam = Adam::new(2, 0.9, 0.999, 1e-8);
        let mut x = [1.0, -1.0];
        adam.step(&mut x, &[0.5, -3.0], 0.1);
        assert!((x[0] - 0.9).abs() < 1e-6 && (x[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { gamma: 0.0, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { gae_lambda: 1.2, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { batch_size: 1, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { clip_eps: 0.0, ..PpoConfig::default() }.validate().is_err());
    }
}
