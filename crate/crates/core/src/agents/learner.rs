use crate::nn::{clip_grad_norm, Adam, Mlp, NnError};
use crate::rng::RngStream;

use super::config::{AgentConfig, Algorithm};
use super::replay::Transition;
use super::targets::{argmax, c51_project, ddqn_target, dqn_target, dueling_combine, epsilon_greedy, softmax, Support};
use super::Policy;

/// Online and target networks of one DQN-family learner.
///
/// Network outputs per input row: `action_count` Q-values (DQN, DDQN), one
/// state value followed by `action_count` advantages (dueling), or
/// `action_count x atoms` logits (C51).
#[derive(Clone, Debug)]
pub struct QAgent {
    algorithm: Algorithm,
    action_count: usize,
    config: AgentConfig,
    online: Mlp,
    target: Mlp,
    adam: Adam,
    support: Support,
    gradient_steps: u64,
}

fn output_size(algorithm: Algorithm, actions: usize, atoms: usize) -> usize {
    match algorithm {
        Algorithm::Dqn | Algorithm::Ddqn => actions,
        Algorithm::DdqnDueling => actions + 1,
        Algorithm::C51 => actions * atoms,
    }
}

impl QAgent {
    pub fn new(
        algorithm: Algorithm,
        input_dim: usize,
        action_count: usize,
        config: AgentConfig,
        rng: &mut RngStream,
    ) -> Result<Self, NnError> {
        let mut sizes = vec![input_dim];
        sizes.extend(&config.hidden);
        sizes.push(output_size(algorithm, action_count, config.atoms));
        let online = Mlp::new(&sizes, config.batch_norm, config.dropout, rng)?;
        Self::from_network(algorithm, action_count, config, online)
    }

    /// Rebuilds an agent around a trained network, e.g. from a checkpoint.
    pub fn from_network(algorithm: Algorithm, action_count: usize, config: AgentConfig, online: Mlp) -> Result<Self, NnError> {
        config.validate().map_err(NnError::Invalid)?;
        let expected = output_size(algorithm, action_count, config.atoms);
        if online.output_size() != expected {
            return Err(NnError::Shape {
                expected,
                got: online.output_size(),
            });
        }
        Ok(Self {
            algorithm,
            action_count,
            support: Support::new(config.v_min, config.v_max, config.atoms),
            adam: Adam::new(online.param_count(), config.learning_rate),
            target: online.clone(),
            online,
            config,
            gradient_steps: 0,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn network(&self) -> &Mlp {
        &self.online
    }

    pub fn target_network(&self) -> &Mlp {
        &self.target
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    /// Q-values of every row of a raw network output (C51: expected return).
    fn q_rows(&self, output: &[f64]) -> Vec<f64> {
        let per_row = output_size(self.algorithm, self.action_count, self.config.atoms);
        let mut q = Vec::with_capacity(output.len() / per_row * self.action_count);
        for row in output.chunks(per_row) {
            match self.algorithm {
                Algorithm::Dqn | Algorithm::Ddqn => q.extend_from_slice(row),
                Algorithm::DdqnDueling => q.extend(dueling_combine(row[0], &row[1..])),
                Algorithm::C51 => {
                    for logits in row.chunks(self.config.atoms) {
                        q.push(self.support.expectation(&softmax(logits)));
                    }
                }
            }
        }
        q
    }

    pub fn q_values(&self, features: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.q_rows(&self.online.forward(features)?))
    }

    pub fn act(&self, features: &[f64], epsilon: f64, rng: &mut RngStream) -> usize {
        let q = self.q_values(features).expect("feature length matches the network");
        epsilon_greedy(&q, epsilon, rng)
    }

    /// One gradient step on `batch`; returns the mean loss.
    pub fn update(&mut self, batch: &[&Transition], rng: &mut RngStream) -> Result<f64, NnError> {
        let b = batch.len();
        let a_count = self.action_count;
        let obs: Vec<f64> = batch.iter().flat_map(|t| t.obs.iter().copied()).collect();
        let next: Vec<f64> = batch.iter().flat_map(|t| t.next_obs.iter().copied()).collect();
        let (out, tape) = self.online.forward_train(&obs, b, rng)?;
        let next_target = self.target.forward_batch(&next, b)?;
        let per_row = out.len() / b;
        let mut d_out = vec![0.0; out.len()];
        let mut total = 0.0;

        if self.algorithm.is_distributional() {
            let atoms = self.config.atoms;
            for (i, t) in batch.iter().enumerate() {
                let next_row = &next_target[i * per_row..(i + 1) * per_row];
                let next_dists: Vec<Vec<f64>> = next_row.chunks(atoms).map(softmax).collect();
                let q_next: Vec<f64> = next_dists.iter().map(|p| self.support.expectation(p)).collect();
                let discount = if t.terminated { 0.0 } else { self.config.gamma };
                let m = c51_project(&next_dists[argmax(&q_next)], t.reward, discount, &self.support);
                let offset = i * per_row + t.action * atoms;
                let p = softmax(&out[offset..offset + atoms]);
                for j in 0..atoms {
                    total -= m[j] * p[j].max(1e-300).ln();
                    d_out[offset + j] = (p[j] - m[j]) / b as f64;
                }
            }
        } else {
            let q = self.q_rows(&out);
            let q_next_target = self.q_rows(&next_target);
            let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
            let terminated: Vec<bool> = batch.iter().map(|t| t.terminated).collect();
            let y = match self.algorithm {
                Algorithm::Dqn => dqn_target(&rewards, &terminated, &q_next_target, self.config.gamma),
                _ => {
                    let q_next_online = self.q_rows(&self.online.forward_batch(&next, b)?);
                    ddqn_target(&rewards, &terminated, &q_next_online, &q_next_target, self.config.gamma)
                }
            };
            for (i, t) in batch.iter().enumerate() {
                let (loss, grad) = self.config.loss.value_and_grad(q[i * a_count + t.action], y[i]);
                total += loss;
                let g = grad / b as f64;
                let row = &mut d_out[i * per_row..(i + 1) * per_row];
                if self.algorithm == Algorithm::DdqnDueling {
                    row[0] = g;
                    for (k, d) in row[1..].iter_mut().enumerate() {
                        *d = if k == t.action { g } else { 0.0 } - g / a_count as f64;
                    }
                } else {
                    row[t.action] = g;
                }
            }
        }

        let mut grads = self.online.backward(&tape, &d_out)?;
        clip_grad_norm(&mut grads, self.config.grad_clip);
        self.adam.step(self.online.params_mut(), &grads)?;
        self.gradient_steps += 1;
        if self.config.target_update_freq == 1 {
            self.target.polyak_update(&self.online, self.config.tau)?;
        } else if self.gradient_steps % self.config.target_update_freq as u64 == 0 {
            self.target.polyak_update(&self.online, 1.0)?;
        }
        Ok(total / b as f64)
    }
}

/// Acts greedily with the configured test-time exploration rate.
impl Policy for QAgent {
    fn name(&self) -> String {
        self.algorithm.name().to_string()
    }

    fn act(&self, features: &[f64], rng: &mut RngStream) -> usize {
        QAgent::act(self, features, self.config.epsilon_test, rng)
    }
}
