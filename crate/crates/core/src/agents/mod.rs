//! Value-based learners, exploration, replay and reference policies.

mod baseline;
mod config;
mod learner;
mod replay;
mod schedule;
mod tabular;
mod targets;
mod train;

pub use baseline::{Baseline, BaselinePolicy};
pub use config::{AgentConfig, Algorithm, UnknownName};
pub use learner::QAgent;
pub use replay::{ReplayBuffer, Transition};
pub use schedule::EpsilonSchedule;
pub use tabular::{train_tabular, TabularConfig, TabularPolicy, TabularQ};
pub use targets::{
    argmax, c51_project, ddqn_target, dqn_target, dueling_combine, epsilon_greedy, Support,
};
pub use train::{train, TrainError, TrainReport};

use crate::rng::RngStream;

/// Maps agent features (see [`crate::pomdp::Observation::features`]) to an
/// action index.
pub trait Policy {
    fn name(&self) -> String;
    fn act(&self, features: &[f64], rng: &mut RngStream) -> usize;
}
