use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::agents::{train, AgentConfig, Algorithm, QAgent};
use crate::pomdp::Environment;
use crate::realism::RealismConfig;
use crate::rng::{child_seed, streams, RngStream};

use super::evaluate::{build_env, run_episode, Stats};
use super::search::{tpe_suggest, Assignment, GridValue, SearchSpace, TpeConfig};
use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Complete,
    Pruned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub number: usize,
    pub assignment: Assignment,
    pub params: BTreeMap<String, GridValue>,
    pub stats: Stats,
    pub status: TrialStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub trials: Vec<TrialResult>,
    /// Index into `trials` of the highest mean among completed trials.
    pub best: usize,
}

impl TuneOutcome {
    pub fn best_trial(&self) -> &TrialResult {
        &self.trials[self.best]
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Random trials followed by TPE-guided trials. The objective receives the
/// assignment and the median mean of completed trials so far (its pruning
/// threshold). Stops early once every grid point has been tried.
pub fn tune_grid<E>(
    space: &SearchSpace,
    config: &TpeConfig,
    seed: u64,
    objective: &mut dyn FnMut(&Assignment, Option<f64>) -> Result<(Stats, TrialStatus), E>,
) -> Result<TuneOutcome, E> {
    let mut rng = RngStream::new(seed, streams::TUNER);
    let budget = config.random_trials + config.guided_trials;
    let size = space.size();
    let mut seen: HashSet<Assignment> = HashSet::new();
    let mut trials: Vec<TrialResult> = Vec::new();
    while trials.len() < budget && (seen.len() as u128) < size {
        let assignment = if trials.len() < config.random_trials {
            let mut a = space.random(&mut rng);
            for _ in 0..1000 {
                if !seen.contains(&a) {
                    break;
                }
                a = space.random(&mut rng);
            }
            a
        } else {
            let history: Vec<(Assignment, f64)> = trials.iter().map(|t| (t.assignment.clone(), t.stats.mean)).collect();
            tpe_suggest(space, &history, config, &mut rng)
        };
        let mut completed: Vec<f64> = trials
            .iter()
            .filter(|t| t.status == TrialStatus::Complete)
            .map(|t| t.stats.mean)
            .collect();
        let threshold = median(&mut completed);
        let (stats, status) = objective(&assignment, threshold)?;
        seen.insert(assignment.clone());
        trials.push(TrialResult {
            number: trials.len(),
            params: space.describe(&assignment),
            assignment,
            stats,
            status,
        });
    }
    let best = pick_best(&trials);
    Ok(TuneOutcome { trials, best })
}

fn pick_best(trials: &[TrialResult]) -> usize {
    let any_complete = trials.iter().any(|t| t.status == TrialStatus::Complete);
    let mut best: Option<usize> = None;
    for (i, t) in trials.iter().enumerate() {
        if any_complete && t.status != TrialStatus::Complete {
            continue;
        }
        if best.is_none_or(|b| t.stats.mean > trials[b].stats.mean) {
            best = Some(i);
        }
    }
    best.unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneSettings {
    pub algorithm: Algorithm,
    pub env: String,
    pub realism: RealismConfig,
    pub base: AgentConfig,
    pub tuning_seed: u64,
    pub training_steps: u64,
    /// Evaluation episodes per trial.
    pub episodes: usize,
    /// Episodes after which a trial may be pruned.
    pub interim_episodes: usize,
    pub tpe: TpeConfig,
}

/// Tunes one learner on one environment with the single tuning seed.
/// A trial whose interim mean falls below the median of completed trials
/// is pruned.
pub fn tune_agent(settings: &TuneSettings) -> Result<(TuneOutcome, AgentConfig), HarnessError> {
    let space = SearchSpace::for_algorithm(settings.algorithm);
    let mut env = build_env(&settings.env, &settings.realism)?;
    let dim = 2 * env.spec().observation_dim;
    let actions = env.spec().action_count;
    let seed = settings.tuning_seed;
    let mut objective = |a: &Assignment, threshold: Option<f64>| -> Result<(Stats, TrialStatus), HarnessError> {
        let config = space.apply(&settings.base, a).map_err(HarnessError::Invalid)?;
        let mut init = RngStream::new(seed, streams::INIT);
        let mut agent = QAgent::new(settings.algorithm, dim, actions, config, &mut init)?;
        train(&mut agent, &mut env, settings.training_steps, training_seed(seed))?;
        let mut returns = Vec::with_capacity(settings.episodes);
        for ep in 0..settings.episodes as u64 {
            if ep as usize == settings.interim_episodes {
                if let Some(t) = threshold {
                    let interim = Stats::of(&returns);
                    if interim.mean < t {
                        return Ok((interim, TrialStatus::Pruned));
                    }
                }
            }
            returns.push(run_episode(&agent, &mut env, seed, ep, false)?.0.total_return);
        }
        Ok((Stats::of(&returns), TrialStatus::Complete))
    };
    let outcome = tune_grid(&space, &settings.tpe, seed, &mut objective)?;
    let best = space
        .apply(&settings.base, &outcome.best_trial().assignment)
        .map_err(HarnessError::Invalid)?;
    Ok((outcome, best))
}

/// Seed used for training episodes, kept apart from the evaluation episodes
/// of the same seed.
pub fn training_seed(seed: u64) -> u64 {
    child_seed(seed, u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::search::Dimension;

    fn toy_space(dims: usize, levels: usize) -> SearchSpace {
        SearchSpace::new(
            (0..dims)
                .map(|d| Dimension {
                    name: format!("d{d}"),
                    values: (0..levels).map(GridValue::Count).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_point_space_takes_one_trial() {
        let space = toy_space(3, 1);
        let mut calls = 0;
        let out = tune_grid::<()>(&space, &TpeConfig::default(), 0, &mut |_, _| {
            calls += 1;
            Ok((Stats::of(&[1.0]), TrialStatus::Complete))
        })
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(out.trials.len(), 1);
        assert_eq!(out.best_trial().assignment, vec![0, 0, 0]);
    }

    #[test]
    fn budget_is_respected_and_best_is_complete() {
        let space = toy_space(4, 4);
        let config = TpeConfig {
            random_trials: 5,
            guided_trials: 5,
            ..TpeConfig::default()
        };
        let out = tune_grid::<()>(&space, &config, 1, &mut |a, threshold| {
            let score = a.iter().sum::<usize>() as f64;
            let status = match threshold {
                Some(t) if score < t => TrialStatus::Pruned,
                _ => TrialStatus::Complete,
            };
            Ok((Stats::of(&[score]), status))
        })
        .unwrap();
        assert_eq!(out.trials.len(), 10);
        assert_eq!(out.best_trial().status, TrialStatus::Complete);
        let best = out.best_trial().stats.mean;
        assert!(out
            .trials
            .iter()
            .filter(|t| t.status == TrialStatus::Complete)
            .all(|t| t.stats.mean <= best));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut []), None);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
