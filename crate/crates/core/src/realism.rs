//! The four benchmark settings: original dynamics, per-episode patient
//! variation, observation noise, and missing values. Settings are cumulative.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::pomdp::{
    ComponentKind, EnvError, EnvSpec, Environment, Observation, ObservationComponent, StepResult,
};
use crate::rng::{streams, RngStream};

/// Parameter sets that can be perturbed element-wise.
pub trait ParameterVector: Sized {
    fn to_vector(&self) -> Vec<f64>;
    fn from_vector(values: &[f64]) -> Self;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Original dynamics.
    Base,
    /// + per-episode PK/PD variation.
    PkPd,
    /// + observation noise.
    Noise,
    /// + missing values.
    Missing,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Base, Setting::PkPd, Setting::Noise, Setting::Missing];

    pub fn varies_patients(self) -> bool {
        self >= Setting::PkPd
    }

    pub fn adds_noise(self) -> bool {
        self >= Setting::Noise
    }

    pub fn masks(self) -> bool {
        self >= Setting::Missing
    }

    /// Short column label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Setting::Base => "p",
            Setting::PkPd => "p1",
            Setting::Noise => "p2",
            Setting::Missing => "p3",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Base => "base",
            Setting::PkPd => "pkpd",
            Setting::Noise => "noise",
            Setting::Missing => "missing",
        })
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" | "p" | "p0" => Ok(Setting::Base),
            "pkpd" | "p1" => Ok(Setting::PkPd),
            "noise" | "p2" => Ok(Setting::Noise),
            "missing" | "p3" => Ok(Setting::Missing),
            other => Err(format!("unknown setting '{other}' (expected base, pkpd, noise or missing)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillPolicy {
    /// Last observation carried forward, population default before the first one.
    Locf,
    PopulationDefault,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RealismConfig {
    pub setting: Setting,
    pub pkpd_spread: f64,
    /// Noise standard deviation as a fraction of each component's range.
    pub noise_scale: f64,
    pub flip_probability: f64,
    pub missing_ratio: f64,
    pub fill: FillPolicy,
}

impl Default for RealismConfig {
    fn default() -> Self {
        Self {
            setting: Setting::Base,
            pkpd_spread: 0.2,
            noise_scale: 0.05,
            flip_probability: 0.05,
            missing_ratio: 0.2,
            fill: FillPolicy::Locf,
        }
    }
}

impl RealismConfig {
    pub fn for_setting(setting: Setting) -> Self {
        Self {
            setting,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.pkpd_spread) {
            return Err(format!("pkpd_spread {} not in [0, 1)", self.pkpd_spread));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(format!("noise_scale {} must be >= 0", self.noise_scale));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(format!("flip_probability {} not in [0, 1]", self.flip_probability));
        }
        if !(0.0..1.0).contains(&self.missing_ratio) {
            return Err(format!("missing_ratio {} not in [0, 1)", self.missing_ratio));
        }
        Ok(())
    }
}

/// Draws each parameter uniformly from `[(1 - spread) p, (1 + spread) p]`.
pub fn sample_pkpd(params: &[f64], spread: f64, rng: &mut RngStream) -> Vec<f64> {
    params
        .iter()
        .map(|&p| {
            let a = (1.0 - spread) * p;
            let b = (1.0 + spread) * p;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            lo + rng.random::<f64>() * (hi - lo)
        })
        .collect()
}

/// Adds range-scaled Gaussian noise to continuous components and random
/// one-level shifts to categorical ones. Results stay inside declared ranges.
pub fn apply_noise(
    obs: &mut Observation,
    components: &[ObservationComponent],
    noise_scale: f64,
    flip_probability: f64,
    rng: &mut RngStream,
) {
    for (value, c) in obs.values.iter_mut().zip(components) {
        match c.kind {
            ComponentKind::Categorical { levels } => {
                if flip_probability <= 0.0 {
                    continue;
                }
                let top = (levels - 1) as f64;
                let level = (*value * top).round();
                let u: f64 = rng.random();
                let shifted = if u < 0.5 * flip_probability {
                    level - 1.0
                } else if u < flip_probability {
                    level + 1.0
                } else {
                    level
                };
                *value = shifted.clamp(0.0, top) / top;
            }
            ComponentKind::Continuous => {
                if noise_scale <= 0.0 {
                    continue;
                }
                if c.log_scale {
                    let top = (1.0 + c.high).log10();
                    let z = (1.0 + value.max(0.0)).log10() + gaussian(rng, noise_scale * top);
                    *value = c.clip(10f64.powf(z.clamp(0.0, top)) - 1.0);
                } else {
                    *value = c.clip(*value + gaussian(rng, noise_scale * (c.high - c.low)));
                }
            }
        }
    }
}

fn gaussian(rng: &mut RngStream, std: f64) -> f64 {
    Normal::new(0.0, std).map(|n| n.sample(rng)).unwrap_or(0.0)
}

/// Masks each component independently with probability `missing_ratio`.
///
/// `last_seen` holds the most recent observed value per component and is
/// updated in place.
pub fn apply_mask(
    obs: &mut Observation,
    components: &[ObservationComponent],
    missing_ratio: f64,
    fill: FillPolicy,
    last_seen: &mut [Option<f64>],
    rng: &mut RngStream,
) {
    for (i, c) in components.iter().enumerate() {
        let masked = missing_ratio > 0.0 && rng.random::<f64>() < missing_ratio;
        if masked {
            obs.present[i] = false;
            obs.values[i] = match fill {
                FillPolicy::Locf => last_seen[i].unwrap_or(c.default),
                FillPolicy::PopulationDefault => c.default,
            };
        } else {
            obs.present[i] = true;
            last_seen[i] = Some(obs.values[i]);
        }
    }
}

/// Any environment under one of the four benchmark settings.
pub struct RealismEnv {
    inner: Box<dyn Environment>,
    config: RealismConfig,
    noise_rng: RngStream,
    mask_rng: RngStream,
    last_seen: Vec<Option<f64>>,
    squared_error: f64,
    error_count: usize,
}

impl RealismEnv {
    pub fn new(inner: Box<dyn Environment>, config: RealismConfig) -> Result<Self, String> {
        config.validate()?;
        let dim = inner.spec().observation_dim;
        Ok(Self {
            inner,
            config,
            noise_rng: RngStream::new(0, streams::NOISE),
            mask_rng: RngStream::new(0, streams::MASK),
            last_seen: vec![None; dim],
            squared_error: 0.0,
            error_count: 0,
        })
    }

    pub fn config(&self) -> &RealismConfig {
        &self.config
    }

    pub fn inner(&self) -> &dyn Environment {
        self.inner.as_ref()
    }

    /// Mean squared difference between emitted and true observations, in
    /// normalized units, accumulated since construction or the last clear.
    pub fn observation_mse(&self) -> Option<f64> {
        (self.error_count > 0).then(|| self.squared_error / self.error_count as f64)
    }

    pub fn observation_error_totals(&self) -> (f64, usize) {
        (self.squared_error, self.error_count)
    }

    pub fn clear_observation_error(&mut self) {
        self.squared_error = 0.0;
        self.error_count = 0;
    }

    fn process(&mut self, mut obs: Observation) -> Observation {
        let components = self.inner.observation_components();
        let clean = obs.values.clone();
        let setting = self.config.setting;
        if setting.adds_noise() {
            apply_noise(
                &mut obs,
                components,
                self.config.noise_scale,
                self.config.flip_probability,
                &mut self.noise_rng,
            );
        }
        if setting.masks() {
            apply_mask(
                &mut obs,
                components,
                self.config.missing_ratio,
                self.config.fill,
                &mut self.last_seen,
                &mut self.mask_rng,
            );
        }
        for ((seen, clean), c) in obs.values.iter().zip(&clean).zip(components) {
            let d = c.normalize(*seen) - c.normalize(*clean);
            self.squared_error += d * d;
        }
        self.error_count += clean.len();
        obs
    }
}

impl Environment for RealismEnv {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    fn observation_components(&self) -> &[ObservationComponent] {
        self.inner.observation_components()
    }

    fn state_names(&self) -> &'static [&'static str] {
        self.inner.state_names()
    }

    fn action_names(&self) -> &'static [&'static str] {
        self.inner.action_names()
    }

    fn action_values(&self, action: usize) -> Result<Vec<f64>, EnvError> {
        self.inner.action_values(action)
    }

    fn reset(&mut self, seed: u64) -> Observation {
        if self.config.setting.varies_patients() {
            let mut rng = RngStream::new(seed, streams::PATIENT);
            self.inner.sample_patient(self.config.pkpd_spread, &mut rng);
        } else {
            self.inner.nominal_patient();
        }
        self.noise_rng = RngStream::new(seed, streams::NOISE);
        self.mask_rng = RngStream::new(seed, streams::MASK);
        self.last_seen.iter_mut().for_each(|v| *v = None);
        let obs = self.inner.reset(seed);
        self.process(obs)
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        let mut result = self.inner.step(action)?;
        result.observation = self.process(result.observation);
        Ok(result)
    }

    fn state(&self) -> Vec<f64> {
        self.inner.state()
    }

    fn clean_observation(&self) -> Observation {
        self.inner.clean_observation()
    }

    fn zero_action(&self) -> usize {
        self.inner.zero_action()
    }

    fn max_action(&self) -> usize {
        self.inner.max_action()
    }

    fn sample_patient(&mut self, spread: f64, rng: &mut RngStream) {
        self.inner.sample_patient(spread, rng)
    }

    fn nominal_patient(&mut self) {
        self.inner.nominal_patient()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp() -> [ObservationComponent; 1] {
        [ObservationComponent::continuous("Gp", 10.0, 600.0, 140.0)]
    }

    #[test]
    fn zero_spread_is_identity() {
        let mut rng = RngStream::new(1, 1);
        let p = vec![1.5, 0.3, 1e-9, 42.0];
        assert_eq!(sample_pkpd(&p, 0.0, &mut rng), p);
    }

    #[test]
    fn pkpd_draws_stay_within_bounds_and_reach_them() {
        let mut rng = RngStream::new(9, 1);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_pkpd(&[1.0], 0.2, &mut rng)[0]).collect();
        let min = draws.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min >= 0.8 && max <= 1.2);
        assert!(min < 0.8 + 1e-3 && max > 1.2 - 1e-3);
    }

    #[test]
    fn same_seed_same_patient() {
        let p = vec![3.0, 4.0];
        let a = sample_pkpd(&p, 0.2, &mut RngStream::new(5, 1));
        let b = sample_pkpd(&p, 0.2, &mut RngStream::new(5, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_noise_is_identity() {
        let mut obs = Observation::fully_observed(vec![123.4]);
        apply_noise(&mut obs, &gp(), 0.0, 0.0, &mut RngStream::new(1, 2));
        assert_eq!(obs.values, vec![123.4]);
    }

    #[test]
    fn noise_std_matches_range_fraction() {
        // Mid-range value so clipping is negligible at 0.05 * 590 = 29.5.
        let mut rng = RngStream::new(3, 2);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let mut obs = Observation::fully_observed(vec![305.0]);
            apply_noise(&mut obs, &gp(), 0.05, 0.0, &mut rng);
            let d = obs.values[0] - 305.0;
            sum += d;
            sq += d * d;
        }
        let mean = sum / n as f64;
        let std = (sq / n as f64 - mean * mean).sqrt();
        assert!((std - 29.5).abs() < 0.5, "std {std}");
    }

    #[test]
    fn noise_respects_range() {
        let mut rng = RngStream::new(3, 2);
        for v in [10.0, 11.0, 599.0, 600.0] {
            for _ in 0..1000 {
                let mut obs = Observation::fully_observed(vec![v]);
                apply_noise(&mut obs, &gp(), 0.5, 0.0, &mut rng);
                assert!((10.0..=600.0).contains(&obs.values[0]));
            }
        }
    }

    #[test]
    fn categorical_flip_shifts_one_level() {
        let comps = [ObservationComponent::categorical("hr", 3, 0.5)];
        let mut rng = RngStream::new(4, 2);
        let mut changed = 0;
        for _ in 0..20_000 {
            let mut obs = Observation::fully_observed(vec![0.5]);
            apply_noise(&mut obs, &comps, 0.0, 0.05, &mut rng);
            let v = obs.values[0];
            assert!(v == 0.0 || v == 0.5 || v == 1.0);
            if v != 0.5 {
                changed += 1;
            }
        }
        let freq = changed as f64 / 20_000.0;
        assert!((freq - 0.05).abs() < 0.01, "{freq}");
    }

    #[test]
    fn zero_ratio_never_masks() {
        let mut obs = Observation::fully_observed(vec![100.0]);
        let mut seen = vec![None];
        apply_mask(&mut obs, &gp(), 0.0, FillPolicy::Locf, &mut seen, &mut RngStream::new(1, 3));
        assert_eq!(obs.present, vec![true]);
    }

    #[test]
    fn masked_fraction_matches_ratio() {
        let comps = gp();
        let mut rng = RngStream::new(11, 3);
        let mut seen = vec![None];
        let n = 100_000;
        let mut masked = 0;
        for _ in 0..n {
            let mut obs = Observation::fully_observed(vec![100.0]);
            apply_mask(&mut obs, &comps, 0.2, FillPolicy::Locf, &mut seen, &mut rng);
            if !obs.present[0] {
                masked += 1;
            }
        }
        let frac = masked as f64 / n as f64;
        assert!((frac - 0.2).abs() < 0.01, "{frac}");
    }

    #[test]
    fn locf_fills_then_refreshes() {
        let comps = gp();
        let mut seen = vec![Some(150.0)];
        // Ratio just below one: masked with overwhelming probability.
        let mut obs = Observation::fully_observed(vec![200.0]);
        let mut rng = RngStream::new(1, 3);
        apply_mask(&mut obs, &comps, 0.999_999, FillPolicy::Locf, &mut seen, &mut rng);
        assert_eq!(obs.present, vec![false]);
        assert_eq!(obs.values, vec![150.0]);
        let mut obs = Observation::fully_observed(vec![210.0]);
        apply_mask(&mut obs, &comps, 0.0, FillPolicy::Locf, &mut seen, &mut rng);
        assert_eq!(obs.present, vec![true]);
        assert_eq!(obs.values, vec![210.0]);
        assert_eq!(seen, vec![Some(210.0)]);
    }

    #[test]
    fn population_default_before_first_observation() {
        let comps = gp();
        let mut seen = vec![None];
        let mut obs = Observation::fully_observed(vec![200.0]);
        apply_mask(&mut obs, &comps, 0.999_999, FillPolicy::Locf, &mut seen, &mut RngStream::new(1, 3));
        assert_eq!(obs.values, vec![140.0]);
    }

    #[test]
    fn settings_are_cumulative() {
        assert!(!Setting::Base.varies_patients());
        assert!(Setting::Missing.varies_patients() && Setting::Missing.adds_noise() && Setting::Missing.masks());
        assert!(Setting::Noise.adds_noise() && !Setting::Noise.masks());
        for s in Setting::ALL {
            assert_eq!(s.to_string().parse::<Setting>().unwrap(), s);
            assert_eq!(s.label().parse::<Setting>().unwrap(), s);
        }
    }

    #[test]
    fn config_validation() {
        assert!(RealismConfig::default().validate().is_ok());
        let bad = RealismConfig {
            missing_ratio: 1.0,
            ..RealismConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
