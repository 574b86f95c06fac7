//! Chemotherapy with normal, tumour and immune cell populations and a single
//! drug compartment. Cell counts are in units of 10^11 cells, time in days.

use crate::ode::{rk4_step, DelayBuffer, OdeSystem};
use crate::pomdp::{
    binned_value, EnvError, EnvSpec, EpisodeClock, Environment, Info, Observation,
    ObservationComponent, StepResult,
};
use crate::realism::{sample_pkpd, ParameterVector};
use crate::rng::RngStream;

pub const NAME: &str = "AhnChemoEnv";
/// Six hours.
pub const STEP_DAYS: f64 = 0.25;
pub const SUBSTEPS: usize = 10;
pub const MAX_STEPS: usize = 120;
pub const DEFAULT_BINS: usize = 5;
pub const TUMOUR_ELIMINATED: f64 = 1e-4;
pub const NORMAL_COLLAPSE: f64 = 1e-2;

const BOUNDS: [(f64, f64); 4] = [(0.0, 2.0), (0.0, 2.0), (0.0, 2.0), (0.0, 1.0)];

const COMPONENTS: [ObservationComponent; 3] = [
    ObservationComponent::continuous("T", 0.0, 2.0, 0.25),
    ObservationComponent::continuous("I", 0.0, 2.0, 0.15),
    ObservationComponent::continuous("B", 0.0, 1.0, 0.0),
];

const STATE_NAMES: [&str; 4] = ["N", "T", "I", "B"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AhnState {
    pub n: f64,
    pub t: f64,
    pub i: f64,
    pub b: f64,
    pub n0: f64,
    pub t0: f64,
}

impl AhnState {
    pub fn initial() -> Self {
        Self {
            n: 1.0,
            t: 0.25,
            i: 0.15,
            b: 0.0,
            n0: 1.0,
            t0: 0.25,
        }
    }

    fn vector(&self) -> [f64; 4] {
        [self.n, self.t, self.i, self.b]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AhnParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Immune death rate. Tabulated but absent from the immune equation as used here.
    pub d1: f64,
    pub d2: f64,
    pub r1: f64,
    pub r2: f64,
    pub s: f64,
    pub rho: f64,
    pub alpha: f64,
    pub q: f64,
}

impl Default for AhnParams {
    fn default() -> Self {
        Self {
            a1: 0.2,
            a2: 0.3,
            a3: 0.1,
            b1: 1.0,
            b2: 1.0,
            c1: 1.0,
            c2: 0.5,
            c3: 1.0,
            c4: 1.0,
            d1: 0.2,
            d2: 1.0,
            r1: 1.5,
            r2: 1.0,
            s: 0.33,
            rho: 0.01,
            alpha: 0.3,
            q: 1.0,
        }
    }
}

impl ParameterVector for AhnParams {
    fn to_vector(&self) -> Vec<f64> {
        vec![
            self.a1, self.a2, self.a3, self.b1, self.b2, self.c1, self.c2, self.c3, self.c4,
            self.d1, self.d2, self.r1, self.r2, self.s, self.rho, self.alpha, self.q,
        ]
    }

    fn from_vector(v: &[f64]) -> Self {
        Self {
            a1: v[0],
            a2: v[1],
            a3: v[2],
            b1: v[3],
            b2: v[4],
            c1: v[5],
            c2: v[6],
            c3: v[7],
            c4: v[8],
            d1: v[9],
            d2: v[10],
            r1: v[11],
            r2: v[12],
            s: v[13],
            rho: v[14],
            alpha: v[15],
            q: v[16],
        }
    }
}

/// `(dN, dT, dI, dB)` for state `[N, T, I, B]` under dose rate `u`.
pub fn ahn_derivatives(y: &[f64], u: f64, p: &AhnParams) -> [f64; 4] {
    let (n, t, i, b) = (y[0], y[1], y[2], y[3]);
    let kill = 1.0 - (-b).exp();
    [
        p.r2 * n * (1.0 - p.b2 * n) - p.c4 * t * n - p.a3 * (p.q - (-b).exp()) * n,
        p.r1 * t * (1.0 - p.b1 * t) - p.c2 * i * t - p.c3 * t * n - p.a2 * kill * t,
        p.s + p.rho * i * t / (p.alpha + t) - p.c1 * i * t - p.c3 * t * n - p.a1 * kill * t,
        -p.d2 * b + u,
    ]
}

/// `N/N0 - T/T0 + I - u`.
pub fn ahn_reward(state: &AhnState, u: f64) -> f64 {
    state.n / state.n0 - state.t / state.t0 + state.i - u
}

/// Dose rate for a bin index on the uniform grid over `[0, 1]`.
pub fn ahn_action_map(index: usize, bins: usize) -> Result<f64, EnvError> {
    binned_value(index, bins, 0.0, 1.0)
}

struct AhnSystem<'a> {
    params: &'a AhnParams,
    dose: f64,
}

impl OdeSystem for AhnSystem<'_> {
    fn dimension(&self) -> usize {
        4
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &BOUNDS
    }

    fn derivative(&self, _t: f64, y: &[f64], _h: Option<&DelayBuffer>, out: &mut [f64]) {
        out.copy_from_slice(&ahn_derivatives(y, self.dose, self.params));
    }
}

pub struct AhnChemoEnv {
    spec: EnvSpec,
    bins: usize,
    nominal: AhnParams,
    pending: AhnParams,
    params: AhnParams,
    state: AhnState,
    time: f64,
    clock: EpisodeClock,
}

impl AhnChemoEnv {
    pub fn new() -> Self {
        Self::with_bins(DEFAULT_BINS).expect("default bin count is valid")
    }

    pub fn with_bins(bins: usize) -> Result<Self, EnvError> {
        let spec = EnvSpec::new(NAME, COMPONENTS.len(), bins, MAX_STEPS, STEP_DAYS)?;
        Ok(Self::with_params(spec, bins, AhnParams::default()))
    }

    pub fn with_params(spec: EnvSpec, bins: usize, params: AhnParams) -> Self {
        Self {
            spec,
            bins,
            nominal: params,
            pending: params,
            params,
            state: AhnState::initial(),
            time: 0.0,
            clock: EpisodeClock::new(MAX_STEPS),
        }
    }

    pub fn params(&self) -> &AhnParams {
        &self.params
    }

    pub fn ahn_state(&self) -> &AhnState {
        &self.state
    }
}

impl Default for AhnChemoEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for AhnChemoEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn observation_components(&self) -> &[ObservationComponent] {
        &COMPONENTS
    }

    fn state_names(&self) -> &'static [&'static str] {
        &STATE_NAMES
    }

    fn action_names(&self) -> &'static [&'static str] {
        &["u"]
    }

    fn action_values(&self, action: usize) -> Result<Vec<f64>, EnvError> {
        Ok(vec![ahn_action_map(action, self.bins)?])
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.params = self.pending;
        self.state = AhnState::initial();
        self.time = 0.0;
        self.clock.reset();
        self.clean_observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.clock.check(action, self.spec.action_count)?;
        let dose = ahn_action_map(action, self.bins)?;
        let system = AhnSystem {
            params: &self.params,
            dose,
        };
        let next = rk4_step(&system, self.time, &self.state.vector(), STEP_DAYS, SUBSTEPS, None)?;
        self.state.n = next[0];
        self.state.t = next[1];
        self.state.i = next[2];
        self.state.b = next[3];
        self.time += STEP_DAYS;

        let reward = ahn_reward(&self.state, dose);
        let terminated = self.state.t < TUMOUR_ELIMINATED || self.state.n < NORMAL_COLLAPSE;
        let truncated = self.clock.advance(terminated);
        Ok(StepResult {
            observation: self.clean_observation(),
            reward,
            terminated,
            truncated,
            info: Info {
                state: self.state(),
            },
        })
    }

    fn state(&self) -> Vec<f64> {
        let s = &self.state;
        vec![s.n, s.t, s.i, s.b]
    }

    fn clean_observation(&self) -> Observation {
        Observation::fully_observed(vec![self.state.t, self.state.i, self.state.b])
    }

    fn sample_patient(&mut self, spread: f64, rng: &mut RngStream) {
        self.pending = AhnParams::from_vector(&sample_pkpd(&self.nominal.to_vector(), spread, rng));
    }

    fn nominal_patient(&mut self) {
        self.pending = self.nominal;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tumour_free_is_tumour_stationary() {
        let d = ahn_derivatives(&[1.0, 0.0, 0.3, 0.0], 0.0, &AhnParams::default());
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn drug_decay_rate() {
        let d = ahn_derivatives(&[1.0, 0.25, 0.15, 0.5], 0.0, &AhnParams::default());
        assert_eq!(d[3], -0.5);
    }

    #[test]
    fn default_derivatives_match_hand_evaluation() {
        // Evaluated by hand from the four equations at N=1, T=0.25, I=0.15, B=0, u=0.
        let expected = [-0.25, 0.012500000000000011, 0.04318181818181821, 0.0];
        let d = ahn_derivatives(&[1.0, 0.25, 0.15, 0.0], 0.0, &AhnParams::default());
        for (got, want) in d.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn initial_reward_is_initial_immune() {
        let s = AhnState::initial();
        assert!((ahn_reward(&s, 0.0) - s.i).abs() < 1e-15);
    }

    #[test]
    fn reward_direct_evaluation() {
        let s = AhnState {
            n: 1.0,
            t: 0.0,
            i: 0.5,
            b: 0.0,
            n0: 1.0,
            t0: 0.25,
        };
        assert!((ahn_reward(&s, 1.0) - 0.5).abs() < 1e-15);
        let s = AhnState {
            n: 0.8,
            t: 0.3,
            i: 0.1,
            b: 0.0,
            n0: 1.0,
            t0: 0.25,
        };
        assert!((ahn_reward(&s, 0.3) - -0.6).abs() < 1e-12);
    }

    #[test]
    fn action_grid() {
        assert_eq!(ahn_action_map(0, 5).unwrap(), 0.0);
        assert_eq!(ahn_action_map(4, 5).unwrap(), 1.0);
        assert_eq!(ahn_action_map(2, 5).unwrap(), 0.5);
        assert!(ahn_action_map(5, 5).is_err());
    }

    #[test]
    fn observation_hides_normal_cells() {
        let mut env = AhnChemoEnv::new();
        let obs = env.reset(3);
        assert_eq!(obs.values, vec![0.25, 0.15, 0.0]);
        let names: Vec<_> = env.observation_components().iter().map(|c| c.name).collect();
        assert!(!names.contains(&"N"));
    }

    #[test]
    fn step_rejects_bad_action_and_finished_episode() {
        let mut env = AhnChemoEnv::new();
        env.reset(0);
        assert!(matches!(env.step(5), Err(EnvError::InvalidAction { .. })));
        loop {
            let r = env.step(0).unwrap();
            assert!(!(r.terminated && r.truncated));
            if r.done() {
                break;
            }
        }
        assert_eq!(env.step(0), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn states_stay_in_range() {
        let mut env = AhnChemoEnv::new();
        env.reset(0);
        for k in 0..MAX_STEPS {
            let r = env.step(k % 5).unwrap();
            for (x, (lo, hi)) in r.info.state[..4].iter().zip(BOUNDS) {
                assert!(*x >= lo && *x <= hi);
            }
            if r.done() {
                break;
            }
        }
    }
}
