use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Loss, DEFAULT_HIDDEN, GRADIENT_CLIP};
use crate::pomdp::DISCOUNT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dqn,
    Ddqn,
    DdqnDueling,
    C51,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Dqn, Algorithm::Ddqn, Algorithm::DdqnDueling, Algorithm::C51];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ddqn => "ddqn",
            Algorithm::DdqnDueling => "ddqn-dueling",
            Algorithm::C51 => "c51",
        }
    }

    pub fn is_distributional(self) -> bool {
        self == Algorithm::C51
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown name {0:?}")]
pub struct UnknownName(pub String);

impl FromStr for Algorithm {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dqn" => Ok(Algorithm::Dqn),
            "ddqn" | "double-dqn" => Ok(Algorithm::Ddqn),
            "ddqn-dueling" | "dueling" | "dueling-ddqn" => Ok(Algorithm::DdqnDueling),
            "c51" => Ok(Algorithm::C51),
            _ => Err(UnknownName(s.to_string())),
        }
    }
}

/// Hyperparameters of the value-based learners.
///
/// `target_update_freq` of 1 means a soft update with `tau` after every
/// gradient step; larger values copy the online network every that many
/// gradient steps. `exploration_noise` belongs to the continuous-control
/// part of the search space and is carried but unused here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub batch_norm: bool,
    pub dropout: f64,
    pub target_update_freq: usize,
    pub update_per_step: f64,
    pub step_per_collect: usize,
    pub exploration_noise: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub atoms: usize,
    pub epsilon_test: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the training steps over which exploration decays.
    pub exploration_fraction: f64,
    pub gamma: f64,
    pub tau: f64,
    pub hidden: Vec<usize>,
    pub loss: Loss,
    pub buffer_capacity: usize,
    pub training_steps: u64,
    pub grad_clip: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            batch_norm: false,
            dropout: 0.0,
            target_update_freq: 1000,
            update_per_step: 0.5,
            step_per_collect: 50,
            exploration_noise: 0.1,
            v_min: -10.0,
            v_max: 10.0,
            atoms: 51,
            epsilon_test: 0.005,
            epsilon_start: 1.0,
            epsilon_end: 0.005,
            exploration_fraction: 0.5,
            gamma: DISCOUNT,
            tau: 0.001,
            hidden: DEFAULT_HIDDEN.to_vec(),
            loss: Loss::Huber,
            buffer_capacity: 100_000,
            training_steps: 1_000_000,
            grad_clip: GRADIENT_CLIP,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("update_per_step", self.update_per_step),
            ("tau", self.tau),
            ("grad_clip", self.grad_clip),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.batch_size == 0 || self.step_per_collect == 0 || self.target_update_freq == 0 {
            return Err("batch_size, step_per_collect and target_update_freq must be at least 1".into());
        }
        if self.buffer_capacity < self.batch_size {
            return Err("buffer_capacity must hold at least one batch".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.v_max > self.v_min) || self.atoms < 2 {
            return Err("categorical support needs v_max > v_min and at least two atoms".into());
        }
        for e in [self.epsilon_test, self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(format!("epsilon {e} outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.hidden.contains(&0) {
            return Err("hidden layer widths must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("Dueling".parse::<Algorithm>().unwrap(), Algorithm::DdqnDueling);
        assert!("sac".parse::<Algorithm>().is_err());
    }

    #[test]
    fn default_is_valid() {
        AgentConfig::default().validate().unwrap();
        let bad = AgentConfig {
            dropout: 1.0,
            ..AgentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
