//! Categorical search grid and a tree-structured Parzen estimator over it.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, Algorithm};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    Flag(bool),
    Count(usize),
    Real(f64),
}

impl std::fmt::Display for GridValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridValue::Flag(b) => write!(f, "{b}"),
            GridValue::Count(n) => write!(f, "{n}"),
            GridValue::Real(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<GridValue>,
}

/// Index of the chosen value in each dimension.
pub type Assignment = Vec<usize>;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub dimensions: Vec<Dimension>,
}

fn reals(name: &str, v: &[f64]) -> Dimension {
    Dimension {
        name: name.into(),
        values: v.iter().map(|&x| GridValue::Real(x)).collect(),
    }
}

fn counts(name: &str, v: &[usize]) -> Dimension {
    Dimension {
        name: name.into(),
        values: v.iter().map(|&x| GridValue::Count(x)).collect(),
    }
}

impl SearchSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self, String> {
        if dimensions.is_empty() || dimensions.iter().any(|d| d.values.is_empty()) {
            return Err("search space has an empty dimension".into());
        }
        Ok(Self { dimensions })
    }

    /// The common grid plus the categorical support bounds for C51.
    /// Stack number and actor frequency only concern recurrent or
    /// actor-critic agents and are left out.
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        let mut dims = vec![
            reals("learning_rate", &[1e-3, 1e-4, 1e-5, 1e-6]),
            counts("batch_size", &[128, 256, 512, 1024]),
            Dimension {
                name: "batch_norm".into(),
                values: vec![GridValue::Flag(true), GridValue::Flag(false)],
            },
            reals("dropout", &[0.0, 0.25, 0.5]),
            counts("target_update_freq", &[1, 1000, 5000]),
            reals("update_per_step", &[0.1, 0.5]),
            counts("step_per_collect", &[50, 100]),
            reals("exploration_noise", &[0.1, 0.2, 0.5]),
        ];
        if algorithm.is_distributional() {
            dims.push(reals("v_min", &[-20.0, -10.0, -5.0]));
            dims.push(reals("v_max", &[5.0, 10.0, 20.0]));
        }
        Self { dimensions: dims }
    }

    pub fn size(&self) -> u128 {
        self.dimensions.iter().map(|d| d.values.len() as u128).product()
    }

    pub fn random(&self, rng: &mut RngStream) -> Assignment {
        self.dimensions.iter().map(|d| rng.random_range(0..d.values.len())).collect()
    }

    pub fn describe(&self, assignment: &[usize]) -> BTreeMap<String, GridValue> {
        self.dimensions
            .iter()
            .zip(assignment)
            .map(|(d, &i)| (d.name.clone(), d.values[i]))
            .collect()
    }

    /// Copies the grid values of `assignment` onto `base`.
    pub fn apply(&self, base: &AgentConfig, assignment: &[usize]) -> Result<AgentConfig, String> {
        let mut c = base.clone();
        for (d, &i) in self.dimensions.iter().zip(assignment) {
            let v = d.values[i];
            match (d.name.as_str(), v) {
                ("learning_rate", GridValue::Real(x)) => c.learning_rate = x,
                ("batch_size", GridValue::Count(n)) => c.batch_size = n,
                ("batch_norm", GridValue::Flag(b)) => c.batch_norm = b,
                ("dropout", GridValue::Real(x)) => c.dropout = x,
                ("target_update_freq", GridValue::Count(n)) => c.target_update_freq = n,
                ("update_per_step", GridValue::Real(x)) => c.update_per_step = x,
                ("step_per_collect", GridValue::Count(n)) => c.step_per_collect = n,
                ("exploration_noise", GridValue::Real(x)) => c.exploration_noise = x,
                ("v_min", GridValue::Real(x)) => c.v_min = x,
                ("v_max", GridValue::Real(x)) => c.v_max = x,
                (name, v) => return Err(format!("cannot apply {name} = {v}")),
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeConfig {
    pub random_trials: usize,
    pub guided_trials: usize,
    /// Share of observed trials treated as good.
    pub gamma: f64,
    pub candidates: usize,
    /// Pseudo-count added to every category.
    pub prior_weight: f64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            random_trials: 50,
            guided_trials: 50,
            gamma: 0.25,
            candidates: 24,
            prior_weight: 1.0,
        }
    }
}

fn category_weights(space: &SearchSpace, members: &[&(Assignment, f64)], prior: f64) -> Vec<Vec<f64>> {
    space
        .dimensions
        .iter()
        .enumerate()
        .map(|(d, dim)| {
            let mut w = vec![prior; dim.values.len()];
            for (a, _) in members {
                w[a[d]] += 1.0;
            }
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

fn draw(weights: &[f64], rng: &mut RngStream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Proposes the next assignment from scored history (higher is better).
/// Candidates are drawn from the good-set estimator and ranked by the
/// good/bad likelihood ratio; previously evaluated points are skipped when
/// any candidate is new.
pub fn tpe_suggest(space: &SearchSpace, history: &[(Assignment, f64)], config: &TpeConfig, rng: &mut RngStream) -> Assignment {
    if history.is_empty() {
        return space.random(rng);
    }
    let mut sorted: Vec<&(Assignment, f64)> = history.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    let n_good = ((config.gamma * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let (good, bad) = sorted.split_at(n_good);
    let l = category_weights(space, good, config.prior_weight);
    let g = category_weights(space, bad, config.prior_weight);
    let seen: HashSet<&Assignment> = history.iter().map(|(a, _)| a).collect();

    let mut best: Option<(bool, f64, Assignment)> = None;
    for _ in 0..config.candidates.max(1) {
        let cand: Assignment = l.iter().map(|w| draw(w, rng)).collect();
        let score: f64 = cand
            .iter()
            .enumerate()
            .map(|(d, &i)| l[d][i].ln() - g[d][i].ln())
            .sum();
        let fresh = !seen.contains(&cand);
        let better = match &best {
            None => true,
            Some((bf, bs, _)) => (fresh, score) > (*bf, *bs),
        };
        if better {
            best = Some((fresh, score, cand));
        }
    }
    best.expect("at least one candidate").2
}
