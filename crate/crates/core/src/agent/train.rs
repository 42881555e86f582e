//! Entropy-regularized actor-critic training on delivery episodes.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::mlp::Activations;
use super::{sample_action, sigmoid, softplus, Moments, PolicyParams};
use crate::env::DeliveryEnv;
use crate::error::{Error, Result};
use crate::sampler::InstanceSampler;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Environment steps per training iteration.
    pub batch_steps: usize,
    pub entropy_coef: f64,
    pub lr0: f64,
    pub lr_decay: f64,
    /// Iterations between learning-rate decays.
    pub lr_decay_every: usize,
    pub gamma: f64,
    pub episode_cap: usize,
    pub value_loss_coef: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            batch_steps: 500,
            entropy_coef: 0.05,
            lr0: 5e-3,
            lr_decay: 0.9,
            lr_decay_every: 100,
            gamma: 0.99,
            episode_cap: crate::env::DEFAULT_EPISODE_CAP,
            value_loss_coef: 0.5,
            optimizer: Optimizer::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.batch_steps == 0 {
            return bad("batch_steps must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return bad("entropy_coef must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be at least 1");
        }
        if self.episode_cap == 0 {
            return bad("episode_cap must be at least 1");
        }
        if !(self.value_loss_coef >= 0.0 && self.value_loss_coef.is_finite()) {
            return bad("value_loss_coef must be non-negative");
        }
        Ok(())
    }
}

/// `lr0 * decay^floor(iteration / every)`, rounded once to the nearest
/// double when both constants are short decimals such as 5e-3 and 0.9.
pub fn lr_schedule(config: &TrainConfig, iteration: usize) -> f64 {
    let n = (iteration / config.lr_decay_every).min(i32::MAX as usize) as u32;
    decimal_power(config.lr0, config.lr_decay, n).unwrap_or_else(|| config.lr0 * config.lr_decay.powi(n as i32))
}

/// `x = mantissa * 10^exponent` from the shortest round-trip representation.
fn decimal_parts(x: f64) -> Option<(u128, i32)> {
    let text = format!("{x:e}");
    let (digits, exp) = text.split_once('e')?;
    let exp: i32 = exp.parse().ok()?;
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let mantissa: u128 = format!("{int}{frac}").parse().ok()?;
    Some((mantissa, exp - frac.len() as i32))
}

/// `a * b^n` as one correctly rounded division of exact integers, if the
/// operands are small enough for that to be exact.
fn decimal_power(a: f64, b: f64, n: u32) -> Option<f64> {
    const EXACT: u128 = 1 << 53;
    let (ma, ea) = decimal_parts(a)?;
    let (mb, eb) = decimal_parts(b)?;
    let num = ma.checked_mul(mb.checked_pow(n)?)?;
    let exp = ea.checked_add(eb.checked_mul(n as i32)?)?;
    if num > EXACT || !(-22..=0).contains(&exp) {
        return None;
    }
    Some(num as f64 / 10f64.powi(-exp))
}

/// Consecutive environment steps, possibly spanning several episodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryBatch {
    obs_len: usize,
    act_len: usize,
    observations: Vec<f64>,
    actions: Vec<f64>,
    pub rewards: Vec<f64>,
    /// The step closes its trajectory (episode finished or batch ended).
    pub ends_episode: Vec<bool>,
}

impl TrajectoryBatch {
    pub fn new(obs_len: usize, act_len: usize) -> Self {
        Self {
            obs_len,
            act_len,
            ..Default::default()
        }
    }

    pub fn push(&mut self, observation: &[f64], action: &[bool], reward: f64, ends_episode: bool) {
        assert_eq!(observation.len(), self.obs_len);
        assert_eq!(action.len(), self.act_len);
        self.observations.extend_from_slice(observation);
        self.actions.extend(action.iter().map(|&a| a as u8 as f64));
        self.rewards.push(reward);
        self.ends_episode.push(ends_episode);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        &self.observations[t * self.obs_len..(t + 1) * self.obs_len]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t * self.act_len..(t + 1) * self.act_len]
    }

    /// Closes the trailing trajectory.
    pub fn close(&mut self) {
        if let Some(last) = self.ends_episode.last_mut() {
            *last = true;
        }
    }
}

/// Discounted returns and advantages, held constant during differentiation.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// `return_t = sum_{s>=t} gamma^{s-t} r_s` inside each trajectory and
/// `advantage_t = return_t - V(o_t)`.
pub fn compute_returns_and_advantages(batch: &TrajectoryBatch, params: &PolicyParams, gamma: f64) -> Targets {
    let n = batch.len();
    let mut returns = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        if batch.ends_episode[t] {
            acc = 0.0;
        }
        acc = batch.rewards[t] + gamma * acc;
        returns[t] = acc;
    }
    let advantages = (0..n)
        .map(|t| returns[t] - params.critic.forward(batch.observation(t))[0])
        .collect();
    Targets { returns, advantages }
}

/// Batch-averaged loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// `-(1/T) sum_t log pi(a_t | o_t) A_t`.
    pub policy: f64,
    /// `(1/T) sum_t (R_t - V(o_t))^2`, before weighting.
    pub value: f64,
    /// `(1/T) sum_t H(pi(. | o_t))`, summed over bits, before weighting.
    pub entropy: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

impl Gradients {
    pub fn zeros(params: &PolicyParams) -> Self {
        Self {
            actor: vec![0.0; params.actor.params().len()],
            critic: vec![0.0; params.critic.params().len()],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.actor.iter().chain(&self.critic).all(|g| g.is_finite())
    }
}

/// Loss and its exact gradient with respect to every actor and critic
/// parameter.
///
/// `total = policy + value_loss_coef * value - entropy_coef * entropy`
pub fn loss_and_gradients(
    params: &PolicyParams,
    batch: &TrajectoryBatch,
    targets: &Targets,
    config: &TrainConfig,
) -> Result<(LossBreakdown, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty trajectory batch".into()));
    }
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros(params);
    let mut acts = Activations::default();
    let mut d_logits = vec![0.0; params.actor.output_len()];
    let (mut policy, mut value, mut entropy) = (0.0, 0.0, 0.0);

    for t in 0..batch.len() {
        let obs = batch.observation(t);
        let action = batch.action(t);
        let adv = targets.advantages[t];

        params.actor.forward_cached(obs, &mut acts);
        let mut log_prob = 0.0;
        for ((d, &z), &a) in d_logits.iter_mut().zip(acts.output()).zip(action) {
            let p = sigmoid(z);
            let log_p = -softplus(-z);
            let log_q = -softplus(z);
            log_prob += a * log_p + (1.0 - a) * log_q;
            entropy += -(p * log_p + (1.0 - p) * log_q);
            // d/dz [a log p + (1-a) log(1-p)] = a - p; dH/dz = -z p (1-p).
            *d = (-adv * (a - p) + config.entropy_coef * z * p * (1.0 - p)) / n;
        }
        policy -= log_prob * adv;
        params.actor.backward(&acts, &d_logits, &mut grads.actor);

        params.critic.forward_cached(obs, &mut acts);
        let err = targets.returns[t] - acts.output()[0];
        value += err * err;
        params
            .critic
            .backward(&acts, &[-2.0 * config.value_loss_coef * err / n], &mut grads.critic);
    }

    let breakdown = LossBreakdown {
        policy: policy / n,
        value: value / n,
        entropy: entropy / n,
        total: (policy + config.value_loss_coef * value - config.entropy_coef * entropy) / n,
    };
    if !breakdown.total.is_finite() || !grads.all_finite() {
        return Err(Error::Divergence {
            iteration: params.iteration,
            detail: format!("non-finite loss or gradient: {breakdown:?}"),
        });
    }
    Ok((breakdown, grads))
}

fn apply(params: &mut [f64], grad: &[f64], moments: &mut Moments, step: usize, lr: f64, optimizer: Optimizer) {
    match optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, epsilon } => {
            let c1 = 1.0 - beta1.powi(step as i32);
            let c2 = 1.0 - beta2.powi(step as i32);
            for (((p, &g), m), v) in params
                .iter_mut()
                .zip(grad)
                .zip(&mut moments.first)
                .zip(&mut moments.second)
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
            }
        }
    }
}

/// One optimizer step with step size `lr`.
pub fn update(params: &mut PolicyParams, grads: &Gradients, lr: f64, optimizer: Optimizer) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::Divergence {
            iteration: params.iteration,
            detail: "non-finite gradient".into(),
        });
    }
    let mut next = params.clone();
    next.optimizer_steps += 1;
    let step = next.optimizer_steps;
    apply(
        next.actor.params_mut(),
        &grads.actor,
        &mut next.actor_moments,
        step,
        lr,
        optimizer,
    );
    apply(
        next.critic.params_mut(),
        &grads.critic,
        &mut next.critic_moments,
        step,
        lr,
        optimizer,
    );
    if !next.all_finite() {
        return Err(Error::Divergence {
            iteration: params.iteration,
            detail: "update produced non-finite parameters".into(),
        });
    }
    *params = next;
    Ok(())
}

/// Per-iteration training statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub iteration: usize,
    /// Mean normalized delay of the episodes that ended in this batch.
    pub mean_delay: f64,
    pub mean_reward: f64,
    pub mean_entropy: f64,
    pub lr: f64,
}

/// Rollout statistics besides the batch itself.
#[derive(Debug, Clone, Default)]
pub struct RolloutStats {
    pub episode_delays: Vec<f64>,
}

const MAX_EMPTY_PROBLEMS: usize = 10_000;

/// Collects exactly `config.batch_steps` steps with the stochastic policy,
/// resetting with a fresh problem whenever an episode ends.
pub fn rollout(
    params: &PolicyParams,
    sampler: &mut dyn InstanceSampler,
    config: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<(TrajectoryBatch, RolloutStats)> {
    let inst = sampler.pruned_instance();
    let mut batch = TrajectoryBatch::new(inst.observation_len(), inst.action_len());
    let mut stats = RolloutStats::default();
    let mut obs = vec![0.0; inst.observation_len()];
    let mut env: Option<DeliveryEnv> = None;
    let mut empty_in_a_row = 0;

    while batch.len() < config.batch_steps {
        let current = match env.as_mut() {
            Some(e) => e,
            None => {
                let fresh = DeliveryEnv::reset(sampler.sample(rng)?, config.episode_cap, rng)?;
                if fresh.is_done() {
                    // Nothing to deliver; costs no steps.
                    stats.episode_delays.push(fresh.normalized_delay()?.value);
                    empty_in_a_row += 1;
                    if empty_in_a_row == MAX_EMPTY_PROBLEMS {
                        return Err(Error::Precondition(format!(
                            "{MAX_EMPTY_PROBLEMS} sampled problems in a row had nothing to deliver"
                        )));
                    }
                    continue;
                }
                empty_in_a_row = 0;
                env.insert(fresh)
            }
        };
        current.observe_into(&mut obs);
        let probs = params.forward_actor(&obs)?;
        let action = sample_action(&probs, rng);
        let outcome = current.step(&action, rng)?;
        batch.push(&obs, &action.to_mask(inst.action_len()), outcome.reward, outcome.done);
        if outcome.done {
            stats.episode_delays.push(current.normalized_delay()?.value);
            env = None;
        }
    }
    if let Some(e) = env {
        // Truncated episode: report the delay it would have with uncoded completion.
        if stats.episode_delays.is_empty() {
            let f = e.problem().instance.file_bits() as f64;
            stats
                .episode_delays
                .push((e.steps() + e.requests().outstanding_pairs()) as f64 / f);
        }
    }
    batch.close();
    Ok((batch, stats))
}

/// Trains fresh parameters.
pub fn train(
    sampler: &mut dyn InstanceSampler,
    config: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<(PolicyParams, Vec<CurveRecord>)> {
    let mut params = PolicyParams::init(&sampler.pruned_instance(), rng);
    let curve = train_with(&mut params, sampler, config, rng, |_, _| {})?;
    Ok((params, curve))
}

/// Continues training `params`, reporting each record and the updated
/// parameters to `on_record`.
pub fn train_with(
    params: &mut PolicyParams,
    sampler: &mut dyn InstanceSampler,
    config: &TrainConfig,
    rng: &mut dyn RngCore,
    mut on_record: impl FnMut(&CurveRecord, &PolicyParams),
) -> Result<Vec<CurveRecord>> {
    config.validate()?;
    if params.instance() != &sampler.pruned_instance() {
        return Err(Error::Dimension(format!(
            "parameters built for {}, sampler produces {}",
            params.instance(),
            sampler.pruned_instance()
        )));
    }
    let mut curve = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let iteration = params.iteration;
        let lr = lr_schedule(config, iteration);
        let (batch, stats) = rollout(params, sampler, config, rng)?;
        let targets = compute_returns_and_advantages(&batch, params, config.gamma);
        let (loss, grads) = loss_and_gradients(params, &batch, &targets, config)?;
        update(params, &grads, lr, config.optimizer)?;
        params.iteration += 1;

        let record = CurveRecord {
            iteration,
            mean_delay: stats.episode_delays.iter().sum::<f64>() / stats.episode_delays.len() as f64,
            mean_reward: batch.rewards.iter().sum::<f64>() / batch.len() as f64,
            mean_entropy: loss.entropy,
            lr,
        };
        on_record(&record, params);
        curve.push(record);
    }
    Ok(curve)
}
