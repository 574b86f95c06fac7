use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::{train, AgentConfig, Algorithm, Baseline, BaselinePolicy, Policy, QAgent, TrainReport};
use crate::pomdp::{EnvError, Environment};
use crate::realism::{RealismConfig, RealismEnv, Setting};
use crate::rng::{streams, RngStream};

use super::evaluate::{best_index, build_env, evaluate, evaluate_per_seed, EvalReport, Stats};
use super::tune::training_seed;
use super::HarnessError;

/// Something that occupies a row of the benchmark table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Entry {
    Agent(Algorithm),
    /// The three baselines and their best, `pi_b`.
    Baselines,
}

pub const BEST_BASELINE: &str = "pi_b";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub entries: Vec<Entry>,
    pub envs: Vec<String>,
    pub settings: Vec<Setting>,
    /// Template for the realism parameters; the setting is overridden.
    pub realism: RealismConfig,
    pub seeds: Vec<u64>,
    pub episodes_per_seed: usize,
    pub training_steps: u64,
    /// Hyperparameters per learner; missing ones use the defaults.
    pub configs: BTreeMap<Algorithm, AgentConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub policy: String,
    pub env: String,
    pub setting: Setting,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    /// 1 for the best and 2 for the second best mean in its column.
    pub rank: Option<u8>,
}

impl BenchmarkRow {
    pub fn stats(&self) -> Option<Stats> {
        self.report.as_ref().map(|r| r.pooled)
    }
}

/// One learner per seed: weights drawn from the seed's init stream, trained
/// on episodes derived from [`training_seed`].
pub fn train_seeds(
    algorithm: Algorithm,
    config: &AgentConfig,
    env: &mut RealismEnv,
    seeds: &[u64],
    training_steps: u64,
) -> Result<Vec<(QAgent, TrainReport)>, HarnessError> {
    let dim = 2 * env.spec().observation_dim;
    let actions = env.spec().action_count;
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut init = RngStream::new(seed, streams::INIT);
        let mut agent = QAgent::new(algorithm, dim, actions, config.clone(), &mut init)?;
        let report = train(&mut agent, env, training_steps, training_seed(seed))?;
        out.push((agent, report));
    }
    Ok(out)
}

/// Trains one learner per seed and evaluates it on that seed.
pub fn train_and_evaluate(
    algorithm: Algorithm,
    config: &AgentConfig,
    env_name: &str,
    realism: &RealismConfig,
    seeds: &[u64],
    episodes_per_seed: usize,
    training_steps: u64,
) -> Result<(EvalReport, Vec<QAgent>), HarnessError> {
    let mut env = build_env(env_name, realism)?;
    let agents: Vec<QAgent> = train_seeds(algorithm, config, &mut env, seeds, training_steps)?
        .into_iter()
        .map(|(a, _)| a)
        .collect();
    let report = evaluate_per_seed(
        &mut |i| Ok::<&dyn Policy, EnvError>(&agents[i]),
        &mut env,
        seeds,
        episodes_per_seed,
    )?;
    Ok((report, agents))
}

fn run_cell(spec: &MatrixSpec, entry: Entry, env: &str, realism: &RealismConfig) -> Result<Vec<EvalReport>, HarnessError> {
    match entry {
        Entry::Agent(alg) => {
            let config = spec.configs.get(&alg).cloned().unwrap_or_default();
            let (report, _) = train_and_evaluate(alg, &config, env, realism, &spec.seeds, spec.episodes_per_seed, spec.training_steps)?;
            Ok(vec![report])
        }
        Entry::Baselines => {
            let mut e = build_env(env, realism)?;
            let mut reports = Vec::new();
            for kind in Baseline::ALL {
                let policy = BaselinePolicy::new(kind, &e);
                reports.push(evaluate(&policy, &mut e, &spec.seeds, spec.episodes_per_seed)?);
            }
            let mut best = reports[best_index(&reports)].clone();
            best.policy = BEST_BASELINE.to_string();
            reports.push(best);
            Ok(reports)
        }
    }
}

fn entry_names(entry: Entry) -> Vec<String> {
    match entry {
        Entry::Agent(a) => vec![a.name().to_string()],
        Entry::Baselines => Baseline::ALL
            .iter()
            .map(|b| b.name().to_string())
            .chain([BEST_BASELINE.to_string()])
            .collect(),
    }
}

/// Every entry on every (environment, setting) pair. A failing cell is
/// recorded with its error and the rest of the matrix still runs.
pub fn run_benchmark(spec: &MatrixSpec) -> Vec<BenchmarkRow> {
    let mut rows = Vec::new();
    for env in &spec.envs {
        for &setting in &spec.settings {
            let realism = RealismConfig {
                setting,
                ..spec.realism.clone()
            };
            let start = rows.len();
            for &entry in &spec.entries {
                match run_cell(spec, entry, env, &realism) {
                    Ok(reports) => rows.extend(reports.into_iter().map(|r| BenchmarkRow {
                        policy: r.policy.clone(),
                        env: r.env.clone(),
                        setting,
                        report: Some(r),
                        error: None,
                        rank: None,
                    })),
                    Err(e) => rows.extend(entry_names(entry).into_iter().map(|policy| BenchmarkRow {
                        policy,
                        env: env.clone(),
                        setting,
                        report: None,
                        error: Some(e.to_string()),
                        rank: None,
                    })),
                }
            }
            flag_ranks(&mut rows[start..]);
        }
    }
    rows
}

/// Marks best and second-best means of one column. The `pi_b` row repeats
/// a baseline and does not take a rank of its own.
pub fn flag_ranks(column: &mut [BenchmarkRow]) {
    let mut order: Vec<(usize, f64)> = column
        .iter()
        .enumerate()
        .filter(|(_, r)| r.policy != BEST_BASELINE)
        .filter_map(|(i, r)| r.stats().map(|s| (i, s.mean)))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (rank, (i, _)) in order.into_iter().take(2).enumerate() {
        column[i].rank = Some(rank as u8 + 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(entries: Vec<Entry>, envs: &[&str]) -> MatrixSpec {
        MatrixSpec {
            entries,
            envs: envs.iter().map(|s| s.to_string()).collect(),
            settings: vec![Setting::Base],
            realism: RealismConfig::default(),
            seeds: vec![1, 2],
            episodes_per_seed: 3,
            training_steps: 300,
            configs: BTreeMap::new(),
        }
    }

    #[test]
    fn baselines_on_every_env() {
        let rows = run_benchmark(&spec(vec![Entry::Baselines], &["ahn", "ghaffari", "sepsis", "glucose"]));
        assert_eq!(rows.len(), 16);
        for chunk in rows.chunks(4) {
            let best = chunk[..3]
                .iter()
                .map(|r| r.stats().unwrap().mean)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(chunk[3].policy, BEST_BASELINE);
            assert_eq!(chunk[3].stats().unwrap().mean, best);
            assert_eq!(chunk.iter().filter(|r| r.rank == Some(1)).count(), 1);
        }
    }

    #[test]
    fn single_cell_matrix_and_reproducibility() {
        let s = MatrixSpec {
            configs: BTreeMap::from([(
                Algorithm::Dqn,
                AgentConfig {
                    hidden: vec![8],
                    batch_size: 16,
                    ..AgentConfig::default()
                },
            )]),
            ..spec(vec![Entry::Agent(Algorithm::Dqn)], &["ahn"])
        };
        let a = run_benchmark(&s);
        assert_eq!(a.len(), 1);
        assert!(a[0].error.is_none());
        assert_eq!(a, run_benchmark(&s));
    }

    #[test]
    fn failures_are_recorded() {
        let rows = run_benchmark(&spec(vec![Entry::Baselines], &["pong"]));
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.error.is_some() && r.rank.is_none()));
    }
}
