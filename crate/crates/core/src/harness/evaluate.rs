use serde::{Deserialize, Serialize};

use crate::agents::{Baseline, BaselinePolicy, Policy};
use crate::envs::make_env;
use crate::pomdp::{EnvError, Environment, Trajectory, TrajectoryStep};
use crate::realism::{RealismConfig, RealismEnv, Setting};
use crate::rng::{child_seed, streams, RngStream};

/// Environment `name` wrapped for `realism`.
pub fn build_env(name: &str, realism: &RealismConfig) -> Result<RealismEnv, EnvError> {
    RealismEnv::new(make_env(name)?, realism.clone()).map_err(EnvError::InvalidSpec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub episode: u64,
    pub total_return: f64,
    pub length: usize,
    pub terminated: bool,
}

/// Seed of episode `episode` under evaluation seed `seed`. Patient, noise,
/// mask and policy streams all derive from it, so episodes can run in any
/// order.
pub fn episode_seed(seed: u64, episode: u64) -> u64 {
    child_seed(seed, episode)
}

/// Runs one episode; records the trajectory when asked.
pub fn run_episode(
    policy: &dyn Policy,
    env: &mut dyn Environment,
    seed: u64,
    episode: u64,
    record: bool,
) -> Result<(EpisodeSummary, Option<Trajectory>), EnvError> {
    let ep_seed = episode_seed(seed, episode);
    let mut rng = RngStream::new(ep_seed, streams::POLICY);
    let components = env.observation_components().to_vec();
    let interval = env.spec().step_interval;
    let mut trajectory = record.then(|| Trajectory::new(episode, env));
    let mut obs = env.reset(ep_seed);
    let mut total = 0.0;
    let mut length = 0;
    loop {
        let action = policy.act(&obs.features(&components), &mut rng);
        let state = env.state();
        let r = env.step(action)?;
        total += r.reward;
        if let Some(t) = trajectory.as_mut() {
            t.steps.push(TrajectoryStep {
                time: length as f64 * interval,
                observation: obs.values.clone(),
                present: obs.present.clone(),
                action,
                action_values: env.action_values(action)?,
                reward: r.reward,
                state,
            });
            t.terminated = r.terminated;
        }
        length += 1;
        if r.done() {
            let summary = EpisodeSummary {
                seed,
                episode,
                total_return: total,
                length,
                terminated: r.terminated,
            };
            return Ok((summary, trajectory));
        }
        obs = r.observation;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stats {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: 0.0,
                std: 0.0,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Self {
            mean,
            std: var.sqrt(),
            count,
        }
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std / (self.count as f64).sqrt()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env: String,
    pub setting: Setting,
    pub policy: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Stats>,
    pub pooled: Stats,
    /// Mean squared observation error in normalized units, when any
    /// observation was perturbed.
    pub observation_mse: Option<f64>,
    pub episodes: Vec<EpisodeSummary>,
}

/// Episodes `0..episodes_per_seed` for every seed, pooled.
pub fn evaluate(policy: &dyn Policy, env: &mut RealismEnv, seeds: &[u64], episodes_per_seed: usize) -> Result<EvalReport, EnvError> {
    evaluate_per_seed(&mut |_| Ok(policy), env, seeds, episodes_per_seed)
}

/// Like [`evaluate`] with a separate policy for each seed, as when one
/// agent is trained per seed.
pub fn evaluate_per_seed<'p>(
    policy_for: &mut dyn FnMut(usize) -> Result<&'p dyn Policy, EnvError>,
    env: &mut RealismEnv,
    seeds: &[u64],
    episodes_per_seed: usize,
) -> Result<EvalReport, EnvError> {
    let mut unique = seeds.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        return Err(EnvError::InvalidSpec("evaluation seeds must be distinct".into()));
    }
    env.clear_observation_error();
    let mut episodes = Vec::with_capacity(seeds.len() * episodes_per_seed);
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut name = String::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let policy = policy_for(i)?;
        name = policy.name();
        let mut returns = Vec::with_capacity(episodes_per_seed);
        for ep in 0..episodes_per_seed as u64 {
            let (summary, _) = run_episode(policy, env, seed, ep, false)?;
            returns.push(summary.total_return);
            episodes.push(summary);
        }
        per_seed.push(Stats::of(&returns));
    }
    let pooled: Vec<f64> = episodes.iter().map(|e| e.total_return).collect();
    Ok(EvalReport {
        env: env.spec().name.clone(),
        setting: env.config().setting,
        policy: name,
        seeds: seeds.to_vec(),
        per_seed,
        pooled: Stats::of(&pooled),
        observation_mse: env.observation_mse(),
        episodes,
    })
}

/// The three baselines evaluated identically, and the index of the best
/// (highest pooled mean; ties to the earlier one).
pub fn evaluate_baselines(env: &mut RealismEnv, seeds: &[u64], episodes_per_seed: usize) -> Result<(Vec<EvalReport>, usize), EnvError> {
    let mut reports = Vec::new();
    for kind in Baseline::ALL {
        let policy = BaselinePolicy::new(kind, &*env);
        reports.push(evaluate(&policy, env, seeds, episodes_per_seed)?);
    }
    let best = best_index(&reports);
    Ok((reports, best))
}

pub(crate) fn best_index(reports: &[EvalReport]) -> usize {
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.pooled.mean > reports[best].pooled.mean {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Baseline;

    #[test]
    fn stats_of_constant_pool() {
        let s = Stats::of(&[2.0, 2.0, 2.0]);
        assert_eq!((s.mean, s.std, s.count), (2.0, 0.0, 3));
        let e = Stats::of(&[]);
        assert_eq!((e.mean, e.std), (0.0, 0.0));
    }

    #[test]
    fn deterministic_policy_on_deterministic_env_has_zero_spread() {
        let mut env = build_env("ahn", &RealismConfig::default()).unwrap();
        let policy = BaselinePolicy::new(Baseline::ZeroDrug, &env);
        let report = evaluate(&policy, &mut env, &[1, 2], 5).unwrap();
        assert_eq!(report.pooled.count, 10);
        let first = report.episodes[0].total_return;
        assert!(report.episodes.iter().all(|e| e.total_return == first));
        assert!(report.per_seed[0].std < 1e-12);
        assert!(report.pooled.std < 1e-12);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let mut env = build_env("sepsis", &RealismConfig::default()).unwrap();
        let policy = BaselinePolicy::new(Baseline::Random, &env);
        assert!(evaluate(&policy, &mut env, &[3, 3], 1).is_err());
    }

    #[test]
    fn episode_order_does_not_matter() {
        let mut env = build_env("sepsis", &RealismConfig::for_setting(Setting::Missing)).unwrap();
        let policy = BaselinePolicy::new(Baseline::Random, &env);
        let forward: Vec<f64> = (0..20)
            .map(|e| run_episode(&policy, &mut env, 9, e, false).unwrap().0.total_return)
            .collect();
        let mut backward: Vec<f64> = (0..20)
            .rev()
            .map(|e| run_episode(&policy, &mut env, 9, e, false).unwrap().0.total_return)
            .collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn recorded_trajectory_matches_summary() {
        let mut env = build_env("ahn", &RealismConfig::default()).unwrap();
        let policy = BaselinePolicy::new(Baseline::MaxDrug, &env);
        let (summary, traj) = run_episode(&policy, &mut env, 1, 0, true).unwrap();
        let traj = traj.unwrap();
        assert_eq!(traj.len(), summary.length);
        assert_eq!(traj.total_return(), summary.total_return);
        assert_eq!(traj.steps[0].observation, vec![0.25, 0.15, 0.0]);
        assert_eq!(traj.steps[0].action_values, vec![1.0]);
    }
}
