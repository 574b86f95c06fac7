//! Tabular Q-learning over a discrete observation key.

use serde::{Deserialize, Serialize};

use crate::pomdp::{Environment, DISCOUNT};
use crate::rng::{child_seed, streams, RngStream};

use super::schedule::EpsilonSchedule;
use super::targets::epsilon_greedy;
use super::Policy;

/// Maps agent features to a table row.
pub type KeyFn = fn(&[f64]) -> usize;

#[derive(Clone, Debug, PartialEq)]
pub struct TabularQ {
    keys: usize,
    actions: usize,
    values: Vec<f64>,
}

impl TabularQ {
    pub fn new(keys: usize, actions: usize) -> Self {
        Self {
            keys,
            actions,
            values: vec![0.0; keys * actions],
        }
    }

    pub fn keys(&self) -> usize {
        self.keys
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn row(&self, key: usize) -> &[f64] {
        &self.values[key * self.actions..(key + 1) * self.actions]
    }

    pub fn get(&self, key: usize, action: usize) -> f64 {
        self.values[key * self.actions + action]
    }

    /// `Q(s,a) += alpha [r + gamma max_a' Q(s',a') (1 - terminated) - Q(s,a)]`.
    pub fn update(&mut self, key: usize, action: usize, reward: f64, next_key: usize, terminated: bool, alpha: f64, gamma: f64) {
        let next = if terminated {
            0.0
        } else {
            self.row(next_key).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        let q = &mut self.values[key * self.actions + action];
        *q += alpha * (reward + gamma * next - *q);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularConfig {
    pub steps: u64,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub exploration_fraction: f64,
    pub epsilon_test: f64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            steps: 1_000_000,
            alpha: 0.05,
            gamma: DISCOUNT,
            epsilon_start: 1.0,
            epsilon_end: 0.005,
            exploration_fraction: 0.5,
            epsilon_test: 0.005,
        }
    }
}

/// Epsilon-greedy Q-learning for `config.steps` environment steps. Episode
/// `i` is reset with `child_seed(seed, i)`.
pub fn train_tabular(env: &mut dyn Environment, keys: usize, key: KeyFn, config: &TabularConfig, seed: u64) -> TabularQ {
    let components = env.observation_components().to_vec();
    let actions = env.spec().action_count;
    let mut table = TabularQ::new(keys, actions);
    let mut rng = RngStream::new(seed, streams::TRAINING);
    let schedule = EpsilonSchedule::new(
        config.epsilon_start,
        config.epsilon_end,
        (config.steps as f64 * config.exploration_fraction) as u64,
        config.epsilon_test,
    );
    let mut step = 0u64;
    let mut episode = 0u64;
    while step < config.steps {
        let mut s = key(&env.reset(child_seed(seed, episode)).features(&components));
        episode += 1;
        loop {
            let a = epsilon_greedy(table.row(s), schedule.value(step), &mut rng);
            let r = env.step(a).expect("valid action on a live episode");
            step += 1;
            let next = key(&r.observation.features(&components));
            table.update(s, a, r.reward, next, r.terminated, config.alpha, config.gamma);
            s = next;
            if r.done() || step >= config.steps {
                break;
            }
        }
    }
    table
}

#[derive(Clone, Debug)]
pub struct TabularPolicy {
    pub table: TabularQ,
    pub key: KeyFn,
    pub epsilon: f64,
}

impl Policy for TabularPolicy {
    fn name(&self) -> String {
        "tabular-q".to_string()
    }

    fn act(&self, features: &[f64], rng: &mut RngStream) -> usize {
        epsilon_greedy(self.table.row((self.key)(features)), self.epsilon, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_update_sets_reward() {
        let mut q = TabularQ::new(2, 2);
        q.update(0, 1, 1.0, 1, true, 1.0, 0.95);
        assert_eq!(q.get(0, 1), 1.0);
    }

    #[test]
    fn zero_step_size_is_a_no_op() {
        let mut q = TabularQ::new(2, 2);
        q.update(0, 0, 5.0, 1, false, 0.0, 0.95);
        assert_eq!(q.get(0, 0), 0.0);
    }

    #[test]
    fn two_state_chain_converges_to_closed_form() {
        // State 0 --a0--> state 1 (r = 0); state 1 --a0--> end (r = 1);
        // action 1 always ends with r = 0.2. Optimal: Q(1,0) = 1,
        // Q(0,0) = gamma, Q(*,1) = 0.2.
        let gamma = 0.9;
        let mut q = TabularQ::new(2, 2);
        for _ in 0..2000 {
            q.update(1, 0, 1.0, 0, true, 0.1, gamma);
            q.update(0, 0, 0.0, 1, false, 0.1, gamma);
            q.update(0, 1, 0.2, 0, true, 0.1, gamma);
            q.update(1, 1, 0.2, 0, true, 0.1, gamma);
        }
        let expect = [[gamma, 0.2], [1.0, 0.2]];
        for s in 0..2 {
            for a in 0..2 {
                assert!((q.get(s, a) - expect[s][a]).abs() < 1e-9);
            }
        }
    }
}
