use rand::RngCore;

use super::{greedy_action, sample_action, PolicyParams};
use crate::env::{Delay, DeliveryEnv, StepOutcome};
use crate::error::{Error, Result};
use crate::model::DeliveryProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    /// Select bit b iff `p_b > 0.5`.
    Greedy,
    /// Draw every bit from its Bernoulli.
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_delay: f64,
    pub delays: Vec<Delay>,
}

impl Evaluation {
    pub fn capped_fraction(&self) -> f64 {
        if self.delays.is_empty() {
            return 0.0;
        }
        self.delays.iter().filter(|d| d.capped).count() as f64 / self.delays.len() as f64
    }

    pub fn std_delay(&self) -> f64 {
        let values: Vec<f64> = self.delays.iter().map(|d| d.value).collect();
        crate::experiment::std_dev(&values)
    }
}

/// Plays one episode to completion or to the cap, reporting every step.
pub fn run_episode(
    params: &PolicyParams,
    problem: DeliveryProblem,
    mode: ActionMode,
    episode_cap: usize,
    rng: &mut dyn RngCore,
    mut on_step: impl FnMut(usize, &StepOutcome),
) -> Result<(Delay, DeliveryEnv)> {
    if &problem.instance != params.instance() {
        return Err(Error::Dimension(format!(
            "agent built for {}, problem is {}",
            params.instance(),
            problem.instance
        )));
    }
    let mut env = DeliveryEnv::reset(problem, episode_cap, rng)?;
    let mut obs = vec![0.0; params.instance().observation_len()];
    while !env.is_done() {
        env.observe_into(&mut obs);
        let probs = params.forward_actor(&obs)?;
        let action = match mode {
            ActionMode::Greedy => greedy_action(&probs),
            ActionMode::Sample => sample_action(&probs, rng),
        };
        let outcome = env.step(&action, rng)?;
        on_step(env.steps(), &outcome);
    }
    Ok((env.normalized_delay()?, env))
}

/// Runs one episode per problem.
pub fn evaluate(
    params: &PolicyParams,
    problems: &[DeliveryProblem],
    mode: ActionMode,
    episode_cap: usize,
    rng: &mut dyn RngCore,
) -> Result<Evaluation> {
    let delays = problems
        .iter()
        .map(|p| run_episode(params, p.clone(), mode, episode_cap, rng, |_, _| {}).map(|(d, _)| d))
        .collect::<Result<Vec<_>>>()?;
    let mean_delay = if delays.is_empty() {
        0.0
    } else {
        delays.iter().map(|d| d.value).sum::<f64>() / delays.len() as f64
    };
    Ok(Evaluation { mean_delay, delays })
}
