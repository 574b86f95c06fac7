use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::AgentConfig;
use crate::realism::Setting;

use super::config::RunConfig;
use super::IoError;

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Enough to repeat a run: what was run, on what, with which seeds and
/// hyperparameters, and by which build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    pub env: String,
    pub setting: Setting,
    pub policy: String,
    pub seeds: Vec<u64>,
    pub tuning_seed: u64,
    pub episodes_per_seed: usize,
    pub training_steps: u64,
    /// Hyperparameters the learner actually used (after tuning, if any).
    pub agent: AgentConfig,
    pub artifacts: Vec<String>,
    pub run: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, run: &RunConfig, agent: &AgentConfig) -> Self {
        Self {
            command: command.into(),
            code_version: code_version(),
            env: run.env.clone(),
            setting: run.realism.setting,
            policy: run.policy.to_string(),
            seeds: run.seeds.clone(),
            tuning_seed: run.tuning_seed,
            episodes_per_seed: run.effective_episodes(),
            training_steps: run.effective_training_steps(),
            agent: agent.clone(),
            artifacts: Vec::new(),
            run: run.clone(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), IoError> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| IoError::Format(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| IoError::at(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self, IoError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| IoError::at(&path, e))?;
        toml::from_str(&text).map_err(|e| IoError::Format(format!("{}: {e}", path.display())))
    }
}

pub fn code_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunConfig::default();
        let mut m = Manifest::new("train", &run, &run.agent);
        m.artifacts.push("checkpoints/seed_1.dtrmlp".into());
        m.save(dir.path()).unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
    }
}
