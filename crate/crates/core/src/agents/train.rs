use thiserror::Error;

use crate::nn::NnError;
use crate::pomdp::{EnvError, Environment};
use crate::rng::{child_seed, streams, RngStream};

use super::learner::QAgent;
use super::replay::{ReplayBuffer, Transition};
use super::schedule::EpsilonSchedule;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub env_steps: u64,
    pub gradient_steps: u64,
    /// Undiscounted return of every completed training episode.
    pub episode_returns: Vec<f64>,
    pub final_loss: Option<f64>,
}

/// Collect-then-update loop: `step_per_collect` environment steps with the
/// decaying exploration rate, then `ceil(update_per_step * collected)`
/// gradient steps once the buffer holds a batch.
pub fn train(agent: &mut QAgent, env: &mut dyn Environment, steps: u64, seed: u64) -> Result<TrainReport, TrainError> {
    let config = agent.config().clone();
    let components = env.observation_components().to_vec();
    let mut act_rng = RngStream::new(seed, streams::POLICY);
    let mut replay_rng = RngStream::new(seed, streams::REPLAY);
    let mut train_rng = RngStream::new(seed, streams::TRAINING);
    let schedule = EpsilonSchedule::new(
        config.epsilon_start,
        config.epsilon_end,
        (steps as f64 * config.exploration_fraction) as u64,
        config.epsilon_test,
    );
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut report = TrainReport::default();
    let mut episode = 0u64;
    let mut obs = env.reset(child_seed(seed, episode)).features(&components);
    let mut episode_return = 0.0;

    while report.env_steps < steps {
        let mut collected = 0;
        while collected < config.step_per_collect && report.env_steps < steps {
            let action = agent.act(&obs, schedule.value(report.env_steps), &mut act_rng);
            let r = env.step(action)?;
            let next = r.observation.features(&components);
            episode_return += r.reward;
            buffer.push(Transition {
                obs: std::mem::take(&mut obs),
                action,
                reward: r.reward,
                next_obs: next.clone(),
                terminated: r.terminated,
                truncated: r.truncated,
            });
            collected += 1;
            report.env_steps += 1;
            if r.done() {
                report.episode_returns.push(episode_return);
                episode_return = 0.0;
                episode += 1;
                obs = env.reset(child_seed(seed, episode)).features(&components);
            } else {
                obs = next;
            }
        }
        if buffer.len() >= config.batch_size {
            let updates = (config.update_per_step * collected as f64).ceil() as usize;
            for _ in 0..updates {
                let batch = buffer
                    .sample(config.batch_size, &mut replay_rng)
                    .expect("buffer holds a batch");
                report.final_loss = Some(agent.update(&batch, &mut train_rng)?);
            }
        }
    }
    report.gradient_steps = agent.gradient_steps();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentConfig, Algorithm};
    use crate::envs::make_env;

    fn quick() -> AgentConfig {
        AgentConfig {
            hidden: vec![16],
            batch_size: 32,
            step_per_collect: 10,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn step_and_update_accounting() {
        let mut env = make_env("sepsis").unwrap();
        let dim = 2 * env.spec().observation_dim;
        let mut rng = RngStream::new(0, streams::INIT);
        let mut agent = QAgent::new(Algorithm::Dqn, dim, 8, quick(), &mut rng).unwrap();
        let report = train(&mut agent, env.as_mut(), 500, 1).unwrap();
        assert_eq!(report.env_steps, 500);
        // Updates start once 32 transitions are stored (after the 4th collect).
        assert_eq!(report.gradient_steps, 47 * 5);
        assert!(!report.episode_returns.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut env = make_env("ahn").unwrap();
            let dim = 2 * env.spec().observation_dim;
            let mut rng = RngStream::new(0, streams::INIT);
            let mut agent = QAgent::new(Algorithm::C51, dim, 5, quick(), &mut rng).unwrap();
            let report = train(&mut agent, env.as_mut(), 400, 2).unwrap();
            (report, agent.network().params().to_vec())
        };
        assert_eq!(run(), run());
    }
}
