//! Tuning, multi-seed evaluation and the benchmark matrix.

mod benchmark;
mod evaluate;
mod search;
mod tune;

use thiserror::Error;

use crate::agents::TrainError;
use crate::nn::NnError;
use crate::pomdp::EnvError;

pub use benchmark::{flag_ranks, run_benchmark, train_and_evaluate, train_seeds, BenchmarkRow, Entry, MatrixSpec, BEST_BASELINE};
pub use evaluate::{build_env, episode_seed, evaluate, evaluate_baselines, evaluate_per_seed, run_episode, EpisodeSummary, EvalReport, Stats};
pub use search::{tpe_suggest, Assignment, Dimension, GridValue, SearchSpace, TpeConfig};
pub use tune::{training_seed, tune_agent, tune_grid, TrialResult, TrialStatus, TuneOutcome, TuneSettings};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{0}")]
    Invalid(String),
}

/// Seed used only for tuning.
pub const TUNING_SEED: u64 = 0;
/// Seeds used for final evaluation.
pub const EVAL_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
