use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pomdp::Environment;
use crate::rng::RngStream;

use super::config::UnknownName;
use super::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Random,
    ZeroDrug,
    MaxDrug,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Random, Baseline::ZeroDrug, Baseline::MaxDrug];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Random => "random",
            Baseline::ZeroDrug => "zero-drug",
            Baseline::MaxDrug => "max-drug",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s) || b.name().replace('-', "_").eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownName(s.to_string()))
    }
}

/// A baseline bound to one environment's action indexing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselinePolicy {
    pub kind: Baseline,
    action_count: usize,
    zero: usize,
    max: usize,
}

impl BaselinePolicy {
    pub fn new(kind: Baseline, env: &dyn Environment) -> Self {
        Self {
            kind,
            action_count: env.spec().action_count,
            zero: env.zero_action(),
            max: env.max_action(),
        }
    }
}

impl Policy for BaselinePolicy {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn act(&self, _features: &[f64], rng: &mut RngStream) -> usize {
        match self.kind {
            Baseline::Random => rng.random_range(0..self.action_count),
            Baseline::ZeroDrug => self.zero,
            Baseline::MaxDrug => self.max,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;

    #[test]
    fn fixed_baselines_map_to_dose_extremes() {
        let ahn = make_env("ahn").unwrap();
        let zero = BaselinePolicy::new(Baseline::ZeroDrug, ahn.as_ref());
        let mut rng = RngStream::new(0, 0);
        assert_eq!(ahn.action_values(zero.act(&[], &mut rng)).unwrap(), vec![0.0]);

        let ghaffari = make_env("ghaffari").unwrap();
        let max = BaselinePolicy::new(Baseline::MaxDrug, ghaffari.as_ref());
        assert_eq!(ghaffari.action_values(max.act(&[], &mut rng)).unwrap(), vec![10.0, 8.0]);

        let sepsis = make_env("sepsis").unwrap();
        let all_on = BaselinePolicy::new(Baseline::MaxDrug, sepsis.as_ref());
        assert_eq!(sepsis.action_values(all_on.act(&[], &mut rng)).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn random_baseline_is_uniform() {
        let env = make_env("sepsis").unwrap();
        let policy = BaselinePolicy::new(Baseline::Random, env.as_ref());
        let mut rng = RngStream::new(1, 4);
        let n = 100_000;
        let mut counts = [0usize; 8];
        for _ in 0..n {
            counts[policy.act(&[], &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.125).abs() < 0.01);
        }
    }

    #[test]
    fn names_parse() {
        for b in Baseline::ALL {
            assert_eq!(b.name().parse::<Baseline>().unwrap(), b);
        }
        assert_eq!("zero_drug".parse::<Baseline>().unwrap(), Baseline::ZeroDrug);
    }
}
