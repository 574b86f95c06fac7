//! Bootstrapped regression targets, the dueling aggregation, the
//! categorical projection and action selection.

use rand::Rng;

use crate::rng::RngStream;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Uniform action with probability `epsilon`, otherwise greedy.
pub fn epsilon_greedy(q: &[f64], epsilon: f64, rng: &mut RngStream) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}

fn bootstrap(reward: f64, terminated: bool, gamma: f64, next: f64) -> f64 {
    if terminated {
        reward
    } else {
        reward + gamma * next
    }
}

/// `r + gamma * max_a' Q_target(s', a')`, without the bootstrap term when the
/// transition terminated. Truncated transitions still bootstrap.
/// `next_target_q` holds one row of `action_count` values per transition.
pub fn dqn_target(rewards: &[f64], terminated: &[bool], next_target_q: &[f64], gamma: f64) -> Vec<f64> {
    let actions = next_target_q.len() / rewards.len();
    rewards
        .iter()
        .zip(terminated)
        .zip(next_target_q.chunks(actions))
        .map(|((&r, &done), row)| bootstrap(r, done, gamma, row[argmax(row)]))
        .collect()
}

/// The online network picks the next action, the target network values it.
pub fn ddqn_target(
    rewards: &[f64],
    terminated: &[bool],
    next_online_q: &[f64],
    next_target_q: &[f64],
    gamma: f64,
) -> Vec<f64> {
    let actions = next_target_q.len() / rewards.len();
    rewards
        .iter()
        .zip(terminated)
        .zip(next_online_q.chunks(actions).zip(next_target_q.chunks(actions)))
        .map(|((&r, &done), (online, target))| bootstrap(r, done, gamma, target[argmax(online)]))
        .collect()
}

/// `Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a')`.
pub fn dueling_combine(value: f64, advantages: &[f64]) -> Vec<f64> {
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| value + (a - mean)).collect()
}

/// Evenly spaced return atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    pub v_min: f64,
    pub v_max: f64,
    atoms: Vec<f64>,
}

impl Support {
    pub fn new(v_min: f64, v_max: f64, atoms: usize) -> Self {
        assert!(v_max > v_min && atoms >= 2, "support needs v_max > v_min and two atoms");
        let delta = (v_max - v_min) / (atoms - 1) as f64;
        Self {
            v_min,
            v_max,
            atoms: (0..atoms).map(|i| v_min + i as f64 * delta).collect(),
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn delta(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms.len() - 1) as f64
    }

    pub fn expectation(&self, probs: &[f64]) -> f64 {
        probs.iter().zip(&self.atoms).map(|(p, z)| p * z).sum()
    }
}

/// Projects the distribution of `r + discount * Z` back onto the support,
/// splitting each atom's mass linearly between its two neighbours.
/// Pass `discount = 0` for terminated transitions.
pub fn c51_project(next_probs: &[f64], reward: f64, discount: f64, support: &Support) -> Vec<f64> {
    let n = support.len();
    let delta = support.delta();
    let mut out = vec![0.0; n];
    for (&p, &z) in next_probs.iter().zip(support.atoms()) {
        if p == 0.0 {
            continue;
        }
        let tz = (reward + discount * z).clamp(support.v_min, support.v_max);
        let mut b = (tz - support.v_min) / delta;
        let nearest = b.round();
        if (b - nearest).abs() < 1e-9 {
            b = nearest;
        }
        let b = b.clamp(0.0, (n - 1) as f64);
        let lo = b.floor() as usize;
        let hi = b.ceil() as usize;
        if lo == hi {
            out[lo] += p;
        } else {
            out[lo] += p * (hi as f64 - b);
            out[hi] += p * (b - lo as f64);
        }
    }
    out
}

/// Numerically stable softmax of one row.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.9]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.5]), 0);
        assert_eq!(argmax(&[-1.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn dqn_target_cases() {
        assert_eq!(dqn_target(&[-1.0], &[true], &[5.0, 7.0], 0.95), vec![-1.0]);
        let y = dqn_target(&[0.0], &[false], &[2.0, 1.0], 0.95);
        assert!((y[0] - 1.9).abs() < 1e-12);
        assert_eq!(dqn_target(&[0.3, -0.2], &[false, false], &[0.0; 4], 0.95), vec![0.3, -0.2]);
    }

    #[test]
    fn ddqn_decouples_selection() {
        let online = [1.0, 0.0];
        let target = [1.0, 3.0];
        let dqn = dqn_target(&[0.0], &[false], &target, 0.9)[0];
        let ddqn = ddqn_target(&[0.0], &[false], &online, &target, 0.9)[0];
        assert!(ddqn <= dqn);
        assert!((ddqn - 0.9).abs() < 1e-12);
        assert_eq!(ddqn_target(&[1.0], &[false], &target, &target, 0.9), dqn_target(&[1.0], &[false], &target, 0.9));
        assert_eq!(ddqn_target(&[2.0], &[true], &online, &target, 0.9), vec![2.0]);
    }

    #[test]
    fn dueling_cases() {
        assert_eq!(dueling_combine(1.0, &[1.0, 3.0]), vec![0.0, 2.0]);
        assert_eq!(dueling_combine(0.7, &[4.0, 4.0, 4.0]), vec![0.7, 0.7, 0.7]);
    }

    #[test]
    fn projection_identity_and_shift() {
        let s = Support::new(-10.0, 10.0, 51);
        let p: Vec<f64> = (0..51).map(|i| (i + 1) as f64).collect();
        let total: f64 = p.iter().sum();
        let p: Vec<f64> = p.iter().map(|v| v / total).collect();
        let same = c51_project(&p, 0.0, 1.0, &s);
        for (a, b) in same.iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut unit = vec![0.0; 51];
        unit[25] = 1.0;
        let shifted = c51_project(&unit, 3.0 * s.delta(), 1.0, &s);
        assert!((shifted[28] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_terminal_splits_reward() {
        let s = Support::new(0.0, 1.0, 3);
        let out = c51_project(&[0.2, 0.3, 0.5], 0.25, 0.0, &s);
        assert!((out[0] - 0.5).abs() < 1e-12 && (out[1] - 0.5).abs() < 1e-12 && out[2] == 0.0);
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1000.0, 1000.0, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.5).abs() < 1e-12);
    }
}
