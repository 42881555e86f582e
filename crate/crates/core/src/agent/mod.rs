//! Actor-critic delivery agent.
//!
//! The actor maps the `3 N K F` observation to one selection probability per
//! library bit (independent Bernoulli heads); the critic maps it to a scalar
//! value. Both are separate tanh networks with two hidden layers.

mod checkpoint;
mod eval;
mod mlp;
mod train;

use rand::Rng;

use crate::env::Action;
use crate::error::{Error, Result};
use crate::model::{BitId, ProblemInstance};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use eval::{evaluate, run_episode, ActionMode, Evaluation};
pub use mlp::{Activations, Mlp};
pub use train::{
    compute_returns_and_advantages, loss_and_gradients, lr_schedule, rollout, train, train_with, update, CurveRecord,
    Gradients, LossBreakdown, Optimizer, Targets, TrainConfig, TrajectoryBatch,
};

pub const HIDDEN_UNITS: usize = 32;

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Adaptive-moment state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl Moments {
    fn zeros(len: usize) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }
}

/// Actor and critic weights plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    instance: ProblemInstance,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_moments: Moments,
    pub critic_moments: Moments,
    /// Completed training iterations.
    pub iteration: usize,
    pub optimizer_steps: usize,
}

impl PolicyParams {
    /// Random initialization for a pruned instance.
    pub fn init<R: Rng + ?Sized>(instance: &ProblemInstance, rng: &mut R) -> Self {
        let (obs, act) = (instance.observation_len(), instance.action_len());
        let actor = Mlp::init(&[obs, HIDDEN_UNITS, HIDDEN_UNITS, act], rng);
        let critic = Mlp::init(&[obs, HIDDEN_UNITS, HIDDEN_UNITS, 1], rng);
        Self::from_networks(*instance, actor, critic)
    }

    /// All weights and biases zero.
    pub fn zeros(instance: &ProblemInstance) -> Self {
        let (obs, act) = (instance.observation_len(), instance.action_len());
        let actor = Mlp::zeros(&[obs, HIDDEN_UNITS, HIDDEN_UNITS, act]);
        let critic = Mlp::zeros(&[obs, HIDDEN_UNITS, HIDDEN_UNITS, 1]);
        Self::from_networks(*instance, actor, critic)
    }

    pub fn from_networks(instance: ProblemInstance, actor: Mlp, critic: Mlp) -> Self {
        let actor_moments = Moments::zeros(actor.params().len());
        let critic_moments = Moments::zeros(critic.params().len());
        Self {
            instance,
            actor,
            critic,
            actor_moments,
            critic_moments,
            iteration: 0,
            optimizer_steps: 0,
        }
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    fn check_observation(&self, observation: &[f64]) -> Result<()> {
        if observation.len() != self.actor.input_len() {
            return Err(Error::Dimension(format!(
                "observation has length {}, network expects {}",
                observation.len(),
                self.actor.input_len()
            )));
        }
        Ok(())
    }

    /// Per-bit logits of the actor.
    pub fn actor_logits(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.check_observation(observation)?;
        Ok(self.actor.forward(observation))
    }

    /// Selection probability of every library bit.
    pub fn forward_actor(&self, observation: &[f64]) -> Result<Vec<f64>> {
        Ok(self.actor_logits(observation)?.into_iter().map(sigmoid).collect())
    }

    pub fn forward_critic(&self, observation: &[f64]) -> Result<f64> {
        self.check_observation(observation)?;
        Ok(self.critic.forward(observation)[0])
    }

    pub fn all_finite(&self) -> bool {
        self.actor
            .params()
            .iter()
            .chain(self.critic.params())
            .all(|p| p.is_finite())
    }
}

pub fn init_params<R: Rng + ?Sized>(instance: &ProblemInstance, rng: &mut R) -> PolicyParams {
    PolicyParams::init(instance, rng)
}

/// Selects each bit independently with its probability.
pub fn sample_action<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> Action {
    Action::new(
        probabilities
            .iter()
            .enumerate()
            .filter(|(_, &p)| rng.gen::<f64>() < p)
            .map(|(b, _)| BitId(b)),
    )
}

/// Selects bit b iff `p_b > 0.5`.
pub fn greedy_action(probabilities: &[f64]) -> Action {
    Action::new(
        probabilities
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.5)
            .map(|(b, _)| BitId(b)),
    )
}
