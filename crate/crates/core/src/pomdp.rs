//! The environment contract shared by every simulator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::OdeError;

/// Discount factor used by every learner and return computation.
pub const DISCOUNT: f64 = 0.95;

pub fn discount() -> f64 {
    DISCOUNT
}

/// `sum_t gamma^t r_t` with the first reward undiscounted.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards
        .iter()
        .rev()
        .fold(0.0, |acc, &r| r + gamma * acc)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action {action} out of range (environment has {count} actions)")]
    InvalidAction { action: usize, count: usize },
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Integration(#[from] OdeError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub observation_dim: usize,
    pub action_count: usize,
    pub max_steps: usize,
    /// Time between decisions, in the environment's own time unit.
    pub step_interval: f64,
}

impl EnvSpec {
    pub fn new(
        name: impl Into<String>,
        observation_dim: usize,
        action_count: usize,
        max_steps: usize,
        step_interval: f64,
    ) -> Result<Self, EnvError> {
        if observation_dim < 1 {
            return Err(EnvError::InvalidSpec("observation_dim must be >= 1".into()));
        }
        if action_count < 2 {
            return Err(EnvError::InvalidSpec("action_count must be >= 2".into()));
        }
        if max_steps < 1 {
            return Err(EnvError::InvalidSpec("max_steps must be >= 1".into()));
        }
        if !(step_interval > 0.0) {
            return Err(EnvError::InvalidSpec("step_interval must be > 0".into()));
        }
        Ok(Self {
            name: name.into(),
            observation_dim,
            action_count,
            max_steps,
            step_interval,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ComponentKind {
    Continuous,
    /// Ordinal level encoded as `level / (levels - 1)`.
    Categorical { levels: usize },
}

/// Declared range and encoding of one observation component.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationComponent {
    pub name: &'static str,
    pub low: f64,
    pub high: f64,
    pub kind: ComponentKind,
    /// Spans many orders of magnitude; agents and noise work on `log10(1 + x)`.
    pub log_scale: bool,
    /// Population default used to fill missing values before anything was observed.
    pub default: f64,
}

impl ObservationComponent {
    pub const fn continuous(name: &'static str, low: f64, high: f64, default: f64) -> Self {
        Self {
            name,
            low,
            high,
            kind: ComponentKind::Continuous,
            log_scale: false,
            default,
        }
    }

    pub const fn logarithmic(name: &'static str, high: f64, default: f64) -> Self {
        Self {
            name,
            low: 0.0,
            high,
            kind: ComponentKind::Continuous,
            log_scale: true,
            default,
        }
    }

    pub const fn categorical(name: &'static str, levels: usize, default: f64) -> Self {
        Self {
            name,
            low: 0.0,
            high: 1.0,
            kind: ComponentKind::Categorical { levels },
            log_scale: false,
            default,
        }
    }

    pub fn clip(&self, value: f64) -> f64 {
        value.clamp(self.low, self.high)
    }

    /// Maps a raw value into roughly `[0, 1]` for function approximators.
    pub fn normalize(&self, value: f64) -> f64 {
        if self.log_scale {
            (1.0 + value.max(0.0)).log10() / (1.0 + self.high).log10()
        } else {
            (value - self.low) / (self.high - self.low)
        }
    }
}

/// What the agent sees: values plus one presence flag per component.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
    pub present: Vec<bool>,
}

impl Observation {
    pub fn fully_observed(values: Vec<f64>) -> Self {
        let present = vec![true; values.len()];
        Self { values, present }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Normalized values followed by the presence flags as 0/1.
    pub fn features(&self, components: &[ObservationComponent]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.values.len());
        out.extend(
            self.values
                .iter()
                .zip(components)
                .map(|(&v, c)| c.normalize(v)),
        );
        out.extend(self.present.iter().map(|&p| if p { 1.0 } else { 0.0 }));
        out
    }
}

/// Diagnostics attached to each step. `state` is the full hidden state in
/// the order of [`Environment::state_names`]; it must never reach an agent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Info {
    pub state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: Info,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    fn observation_components(&self) -> &[ObservationComponent];

    fn state_names(&self) -> &'static [&'static str];

    /// Names of the raw (physical) action values an index maps to.
    fn action_names(&self) -> &'static [&'static str];

    fn action_values(&self, action: usize) -> Result<Vec<f64>, EnvError>;

    fn reset(&mut self, seed: u64) -> Observation;

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError>;

    /// Current hidden state, ordered like [`Environment::state_names`].
    fn state(&self) -> Vec<f64>;

    /// Noise-free, unmasked observation of the current state.
    fn clean_observation(&self) -> Observation;

    /// Index of the no-treatment action.
    fn zero_action(&self) -> usize {
        0
    }

    /// Index of the maximal-treatment action.
    fn max_action(&self) -> usize {
        self.spec().action_count - 1
    }

    /// Draw a patient around the nominal parameters. Takes effect at the next reset.
    fn sample_patient(&mut self, spread: f64, rng: &mut crate::rng::RngStream);

    /// Return to the nominal patient. Takes effect at the next reset.
    fn nominal_patient(&mut self);
}

/// Step bookkeeping shared by the simulators.
#[derive(Clone, Debug)]
pub struct EpisodeClock {
    step: usize,
    max_steps: usize,
    finished: bool,
}

impl EpisodeClock {
    pub fn new(max_steps: usize) -> Self {
        Self {
            step: 0,
            max_steps,
            finished: false,
        }
    }

    pub fn reset(&mut self) {
        self.step = 0;
        self.finished = false;
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn check(&self, action: usize, action_count: usize) -> Result<(), EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        if action >= action_count {
            return Err(EnvError::InvalidAction {
                action,
                count: action_count,
            });
        }
        Ok(())
    }

    /// Advances one step and returns `truncated`.
    pub fn advance(&mut self, terminated: bool) -> bool {
        self.step += 1;
        let truncated = !terminated && self.step >= self.max_steps;
        self.finished = terminated || truncated;
        truncated
    }
}

/// One recorded decision: what the agent saw at `time`, what it did, the
/// reward that followed, and the hidden state it acted on.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub time: f64,
    pub observation: Vec<f64>,
    pub present: Vec<bool>,
    pub action: usize,
    pub action_values: Vec<f64>,
    pub reward: f64,
    pub state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub episode: u64,
    pub observation_names: Vec<String>,
    pub action_names: Vec<String>,
    pub state_names: Vec<String>,
    pub steps: Vec<TrajectoryStep>,
    pub terminated: bool,
}

impl Trajectory {
    pub fn new(episode: u64, env: &dyn Environment) -> Self {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            episode,
            observation_names: env.observation_components().iter().map(|c| c.name.to_string()).collect(),
            action_names: names(env.action_names()),
            state_names: names(env.state_names()),
            steps: Vec::new(),
            terminated: false,
        }
    }

    pub fn total_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Uniform grid over `[low, high]`.
pub fn binned_value(index: usize, bins: usize, low: f64, high: f64) -> Result<f64, EnvError> {
    if index >= bins {
        return Err(EnvError::InvalidAction {
            action: index,
            count: bins,
        });
    }
    Ok(low + (high - low) * index as f64 / (bins - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discount_is_095() {
        assert_eq!(discount(), 0.95);
    }

    #[test]
    fn single_step_return_is_reward() {
        assert_eq!(discounted_return(&[3.5], DISCOUNT), 3.5);
    }

    #[test]
    fn two_step_discounted_return() {
        assert!((discounted_return(&[1.0, 1.0], DISCOUNT) - 1.95).abs() < 1e-12);
    }

    #[test]
    fn spec_invariants() {
        assert!(EnvSpec::new("x", 0, 2, 1, 1.0).is_err());
        assert!(EnvSpec::new("x", 1, 1, 1, 1.0).is_err());
        assert!(EnvSpec::new("x", 1, 2, 0, 1.0).is_err());
        assert!(EnvSpec::new("x", 1, 2, 1, 1.0).is_ok());
    }

    #[test]
    fn clock_truncates_at_cap() {
        let mut clock = EpisodeClock::new(2);
        assert!(!clock.advance(false));
        assert!(clock.advance(false));
        assert_eq!(clock.check(0, 2), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn clock_never_truncates_a_terminal_step() {
        let mut clock = EpisodeClock::new(1);
        assert!(!clock.advance(true));
        assert_eq!(clock.check(0, 2), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn binning() {
        assert_eq!(binned_value(0, 5, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(binned_value(4, 5, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(binned_value(2, 5, 0.0, 1.0).unwrap(), 0.5);
        assert!(binned_value(5, 5, 0.0, 1.0).is_err());
    }
}
