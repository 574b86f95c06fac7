use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, Algorithm, Baseline};
use crate::envs::canonical_name;
use crate::harness::{TpeConfig, EVAL_SEEDS, TUNING_SEED};
use crate::realism::{RealismConfig, Setting};

use super::IoError;

/// A learner or one of the fixed baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyName {
    Agent(Algorithm),
    Baseline(Baseline),
}

impl PolicyName {
    pub fn all() -> Vec<PolicyName> {
        Algorithm::ALL
            .into_iter()
            .map(PolicyName::Agent)
            .chain(Baseline::ALL.into_iter().map(PolicyName::Baseline))
            .collect()
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyName::Agent(a) => a.fmt(f),
            PolicyName::Baseline(b) => b.fmt(f),
        }
    }
}

impl FromStr for PolicyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(a) = s.parse::<Algorithm>() {
            return Ok(PolicyName::Agent(a));
        }
        s.parse::<Baseline>()
            .map(PolicyName::Baseline)
            .map_err(|_| format!("unknown policy {s:?}"))
    }
}

impl TryFrom<String> for PolicyName {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PolicyName> for String {
    fn from(p: PolicyName) -> String {
        p.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub algorithms: Vec<Algorithm>,
    pub baselines: bool,
    pub envs: Vec<String>,
    pub settings: Vec<Setting>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            baselines: true,
            envs: vec!["ahn".into(), "ghaffari".into(), "sepsis".into(), "glucose".into()],
            settings: Setting::ALL.to_vec(),
        }
    }
}

/// Everything a command needs. Written next to every artifact so a run can
/// be repeated exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    pub policy: PolicyName,
    /// Tune before training instead of using `agent` as given.
    pub tune: bool,
    pub seeds: Vec<u64>,
    pub tuning_seed: u64,
    pub episodes_per_seed: usize,
    pub training_steps: u64,
    /// Evaluation episodes per tuning trial, and the point at which a trial
    /// may be pruned.
    pub tune_episodes: usize,
    pub tune_interim_episodes: usize,
    /// Episodes per seed whose full trajectory is written out.
    pub record_episodes: usize,
    /// Divides episode counts and training steps by ten.
    pub desk_scale: bool,
    pub out: PathBuf,
    /// Directory holding trained checkpoints, for `evaluate`.
    pub checkpoints: Option<PathBuf>,
    pub realism: RealismConfig,
    pub agent: AgentConfig,
    pub tpe: TpeConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: "ahn".into(),
            policy: PolicyName::Agent(Algorithm::Dqn),
            tune: false,
            seeds: EVAL_SEEDS.to_vec(),
            tuning_seed: TUNING_SEED,
            episodes_per_seed: 5000,
            training_steps: 1_000_000,
            tune_episodes: 100,
            tune_interim_episodes: 50,
            record_episodes: 10,
            desk_scale: false,
            out: PathBuf::from("runs"),
            checkpoints: None,
            realism: RealismConfig::default(),
            agent: AgentConfig::default(),
            tpe: TpeConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

fn scale(n: u64, desk: bool) -> u64 {
    if desk {
        (n / 10).max(1)
    } else {
        n
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::at(path, e))?;
        Self::parse(&text).map_err(|e| IoError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        std::fs::write(path, self.to_toml()).map_err(|e| IoError::at(path, e))
    }

    /// Applies `key=value` overrides. Keys are dotted paths into the
    /// config (`agent.learning_rate`, `realism.setting`); values are read as
    /// TOML and fall back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, String> {
        let mut root = toml::Table::try_from(self).map_err(|e| e.to_string())?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| format!("override {item:?} is not key=value"))?;
            let value = parse_value(raw.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = path.split_last().expect("split yields one part");
            let mut table = &mut root;
            for p in parents {
                table = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| format!("{key}: {p} is not a table"))?;
            }
            table.insert(last.to_string(), value);
        }
        root.try_into().map_err(|e: toml::de::Error| e.to_string())
    }

    pub fn validate(&self) -> Result<(), String> {
        if canonical_name(&self.env).is_none() {
            return Err(format!("unknown environment {:?}", self.env));
        }
        for env in &self.benchmark.envs {
            if canonical_name(env).is_none() {
                return Err(format!("unknown environment {env:?} in benchmark"));
            }
        }
        if self.seeds.is_empty() {
            return Err("at least one evaluation seed is required".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err("evaluation seeds must be distinct".into());
        }
        if self.seeds.contains(&self.tuning_seed) {
            return Err(format!("tuning seed {} is also an evaluation seed", self.tuning_seed));
        }
        if self.episodes_per_seed == 0 {
            return Err("episodes_per_seed must be positive".into());
        }
        if self.tune_interim_episodes > self.tune_episodes {
            return Err("tune_interim_episodes exceeds tune_episodes".into());
        }
        self.realism.validate()?;
        self.agent.validate()
    }

    pub fn effective_episodes(&self) -> usize {
        scale(self.episodes_per_seed as u64, self.desk_scale) as usize
    }

    pub fn effective_training_steps(&self) -> u64 {
        scale(self.training_steps, self.desk_scale)
    }

    pub fn effective_tune_episodes(&self) -> (usize, usize) {
        (
            scale(self.tune_episodes as u64, self.desk_scale) as usize,
            scale(self.tune_interim_episodes as u64, self.desk_scale) as usize,
        )
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v was just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
