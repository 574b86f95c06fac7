//! Mixed radiotherapy and chemotherapy with a primary and a secondary
//! (metastatic) tumour site. Time in days.

use crate::ode::{rk4_step, DelayBuffer, OdeSystem};
use crate::pomdp::{
    EnvError, EnvSpec, EpisodeClock, Environment, Info, Observation, ObservationComponent,
    StepResult,
};
use crate::realism::{sample_pkpd, ParameterVector};
use crate::rng::RngStream;

pub const NAME: &str = "GhaffariCancerEnv";
pub const STEP_DAYS: f64 = 1.0;
pub const SUBSTEPS: usize = 24;
pub const MAX_STEPS: usize = 60;
/// Metastatic migration delay in days.
pub const DELAY_DAYS: f64 = 10.0;
pub const TUMOUR_CAP: f64 = 1e11;
pub const SUCCESS_REWARD: f64 = 100.0;
pub const FAILURE_REWARD: f64 = -100.0;

const RADIATION_LEVELS: [f64; 3] = [0.0, 5.0, 10.0];
const CHEMO_LEVELS: [f64; 3] = [0.0, 4.0, 8.0];

/// Index of each variable in the state vector.
pub mod var {
    pub const TP: usize = 0;
    pub const NP: usize = 1;
    pub const LP: usize = 2;
    pub const C: usize = 3;
    pub const TS: usize = 4;
    pub const NS: usize = 5;
    pub const LS: usize = 6;
    pub const C1: usize = 7;
    pub const C2: usize = 8;
    pub const M: usize = 9;
    pub const U: usize = 10;
    pub const V: usize = 11;
    pub const X: usize = 12;
}

const STATE_NAMES: [&str; 13] = [
    "Tp", "Np", "Lp", "C", "Ts", "Ns", "Ls", "c1", "c2", "M", "u", "v", "x",
];

const BOUNDS: [(f64, f64); 13] = [
    (0.0, 1e11),
    (0.0, 1e10),
    (0.0, 1e10),
    (0.0, 1e11),
    (0.0, 1e11),
    (0.0, 1e10),
    (0.0, 1e10),
    (0.0, f64::MAX),
    (0.0, f64::MAX),
    (0.0, 1e10),
    (0.0, 1e11),
    (0.0, 1e11),
    (0.0, 1e11),
];

const COMPONENTS: [ObservationComponent; 7] = [
    ObservationComponent::logarithmic("Tp", 1e11, 1e7),
    ObservationComponent::logarithmic("Np", 1e10, 1e5),
    ObservationComponent::logarithmic("Lp", 1e10, 1e2),
    ObservationComponent::logarithmic("C", 1e11, 6.25e6),
    ObservationComponent::logarithmic("Ts", 1e11, 0.0),
    ObservationComponent::logarithmic("Ns", 1e10, 1e4),
    ObservationComponent::logarithmic("Ls", 1e10, 10.0),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GhaffariAction {
    /// Radiation dose, Gy.
    pub radiation: f64,
    /// Chemotherapy dosage, mg/L.
    pub chemo: f64,
}

/// Row-major 3x3 grid: radiation {0, 5, 10} Gy by chemo {0, 4, 8} mg/L.
pub fn ghaffari_action_map(index: usize) -> Result<GhaffariAction, EnvError> {
    if index >= 9 {
        return Err(EnvError::InvalidAction {
            action: index,
            count: 9,
        });
    }
    Ok(GhaffariAction {
        radiation: RADIATION_LEVELS[index / 3],
        chemo: CHEMO_LEVELS[index % 3],
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GhaffariParams {
    // primary site
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub d1: f64,
    pub l: f64,
    pub s: f64,
    pub e1: f64,
    pub f1: f64,
    pub p1: f64,
    pub m1: f64,
    pub j1: f64,
    pub k1: f64,
    pub q1: f64,
    pub r11: f64,
    pub r12: f64,
    pub u1: f64,
    pub k1t: f64,
    pub k1l: f64,
    pub k1n: f64,
    pub k1c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    // secondary site
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub d2: f64,
    pub e2: f64,
    pub f2: f64,
    pub p2: f64,
    pub m2: f64,
    pub j2: f64,
    pub k2: f64,
    pub q2: f64,
    pub r21: f64,
    pub r22: f64,
    pub u2: f64,
    pub k2t: f64,
    pub k2l: f64,
    pub k2n: f64,
    // radiation and migration
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub epsilon: f64,
    pub alpha2: f64,
    pub w1t: f64,
    pub w1n: f64,
    pub w1l: f64,
    pub w1c: f64,
    pub w2t: f64,
    pub w2n: f64,
    pub w2l: f64,
    // accumulators and irradiated-pool decay
    pub mu_c1: f64,
    pub mu_c2: f64,
    pub k_c1: f64,
    pub k_c2: f64,
    pub delta: f64,
}

impl Default for GhaffariParams {
    fn default() -> Self {
        Self {
            a1: 4.31e-1,
            b1: 1.02e-9,
            c1: 6.41e-11,
            d1: 2.34,
            l: 2.09,
            s: 8.39e-2,
            e1: 2.08e-1,
            f1: 4.12e-3,
            p1: 3.42e-4,
            m1: 2.04e-2,
            j1: 2.49e-2,
            k1: 3.66e7,
            q1: 1.42e-4,
            r11: 1.1e-7,
            r12: 6.5e-11,
            u1: 3e-10,
            k1t: 100.0,
            k1l: 10.0,
            k1n: 10.0,
            k1c: 10.0,
            alpha: 7.5e8,
            beta: 1.2e2,
            mu: 9e-1,
            a2: 5.0,
            b2: 1e-7,
            c2: 6.41e-12,
            d2: 5.0,
            e2: 2.08e-1,
            f2: 3.5e-2,
            p2: 1e-1,
            m2: 1.8e-1,
            j2: 1.6e-2,
            k2: 3.66e7,
            q2: 1e-1,
            r21: 2e-1,
            r22: 7.5e11,
            u2: 3e-10,
            k2t: 100.0,
            k2l: 10.0,
            k2n: 10.0,
            gamma1: 0.04,
            gamma2: 0.1,
            gamma3: 0.1,
            epsilon: 0.05,
            alpha2: 1e-5,
            w1t: 0.01,
            w1n: 1.0,
            w1l: 1.0,
            w1c: 1.0,
            w2t: 1.0,
            w2n: 1.0,
            w2l: 1.0,
            mu_c1: 1e-4,
            mu_c2: 1e-4,
            k_c1: 1.0,
            k_c2: 1.0,
            delta: 1e-2,
        }
    }
}

macro_rules! param_fields {
    ($($f:ident),* $(,)?) => {
        impl ParameterVector for GhaffariParams {
            fn to_vector(&self) -> Vec<f64> {
                vec![$(self.$f),*]
            }

            fn from_vector(v: &[f64]) -> Self {
                let mut it = v.iter().copied();
                Self { $($f: it.next().expect("parameter vector too short")),* }
            }
        }
    };
}

param_fields!(
    a1, b1, c1, d1, l, s, e1, f1, p1, m1, j1, k1, q1, r11, r12, u1, k1t, k1l, k1n, k1c, alpha,
    beta, mu, a2, b2, c2, d2, e2, f2, p2, m2, j2, k2, q2, r21, r22, u2, k2t, k2l, k2n, gamma1,
    gamma2, gamma3, epsilon, alpha2, w1t, w1n, w1l, w1c, w2t, w2n, w2l, mu_c1, mu_c2, k_c1,
    k_c2, delta,
);

/// Fractional lysis `d L^l / (s T^l + L^l)`, zero when the denominator vanishes.
fn lysis(d: f64, s: f64, l: f64, tumour: f64, lymph: f64) -> f64 {
    let lt = lymph.max(0.0).powf(l);
    let denom = s * tumour.max(0.0).powf(l) + lt;
    if denom < 1e-30 {
        0.0
    } else {
        d * lt / denom
    }
}

/// Right-hand side of the 13-variable system. `delayed_tp` is `Tp(t - tau)`.
pub fn ghaffari_derivatives(
    y: &[f64],
    action: GhaffariAction,
    p: &GhaffariParams,
    delayed_tp: f64,
) -> [f64; 13] {
    use var::*;
    let (tp, np, lp, c, ts, ns, ls) = (y[TP], y[NP], y[LP], y[C], y[TS], y[NS], y[LS]);
    let (c1, c2, m, u, v, x) = (y[C1], y[C2], y[M], y[U], y[V], y[X]);
    let dose = action.radiation;
    let vm = action.chemo;
    let dp = lysis(p.d1, p.s, p.l, tp, lp);
    let ds = lysis(p.d2, p.s, p.l, ts, ls);

    let mut out = [0.0; 13];
    out[TP] = p.a1 * tp * (1.0 - p.b1 * tp) - p.c1 * np * tp - dp * tp - dose * tp + p.gamma1 * u
        - p.k1t * tp * m / (p.w1t + tp);
    out[NP] = p.e1 * c - p.p1 * np * tp - p.f1 * np - p.epsilon * dose * np + p.gamma2 * v
        - p.k1n * np * m / (p.w1n + np);
    out[LP] = -p.m1 * lp + p.j1 * tp / (p.k1 + tp) - p.q1 * lp * tp
        + p.r11 * np * tp
        + p.r12 * c * tp
        - p.u1 * np * lp * lp
        - p.epsilon * dose * lp
        + p.gamma3 * x
        - p.k1l * lp * m / (p.w1l + lp);
    out[C] = p.alpha - p.beta * c - p.k1c * c * m / (p.w1c + c);
    out[TS] = p.a2 * ts * (1.0 - p.b2 * ts) - p.c2 * ns * ts - ds * ts + p.alpha2 * delayed_tp
        - p.k2t * ts * m / (p.w2t + ts);
    out[NS] = p.e2 * c - p.p2 * ns * ts - p.f2 * ns - p.k2n * ns * m / (p.w2n + ns);
    out[LS] = -p.m2 * ls + p.j2 * ts / (p.k2 + ts) - p.q2 * ls * ts
        + p.r21 * ns * ts
        + p.r22 * c * ts
        - p.u2 * ns * ls * ls
        - p.k2l * ls * m / (p.w2l + ls);
    out[C1] = p.mu_c1 * vm * (1.0 - c1 / p.k_c1);
    out[C2] = p.mu_c2 * vm * (1.0 - c2 / p.k_c2);
    out[M] = -p.mu * m + vm;
    out[U] = dose * tp - p.gamma1 * u - p.delta * u;
    out[V] = p.epsilon * dose * np - p.gamma2 * v - p.delta * v;
    out[X] = p.epsilon * dose * lp - p.gamma3 * x - p.delta * x;
    out
}

/// `1 - (Tp + Ts) / (Tp0 + Ts0)` plus the terminal outcome bonus.
/// Returns `(reward, terminated)`.
pub fn ghaffari_reward(state: &[f64], initial_total: f64) -> (f64, bool) {
    let tp = state[var::TP];
    let ts = state[var::TS];
    let shrink = 1.0 - (tp + ts) / initial_total;
    // Tumour sizes are projected onto [0, cap], so reaching the cap counts as exceeding it.
    if tp >= TUMOUR_CAP || ts >= TUMOUR_CAP {
        (shrink + FAILURE_REWARD, true)
    } else if tp < 1.0 && ts < 1.0 {
        (shrink + SUCCESS_REWARD, true)
    } else {
        (shrink, false)
    }
}

pub fn initial_state(p: &GhaffariParams) -> [f64; 13] {
    let mut y = [0.0; 13];
    y[var::TP] = 1e7;
    y[var::NP] = 1e5;
    y[var::LP] = 1e2;
    y[var::C] = p.alpha / p.beta;
    y[var::NS] = 1e4;
    y[var::LS] = 10.0;
    y
}

struct GhaffariSystem<'a> {
    params: &'a GhaffariParams,
    action: GhaffariAction,
}

impl OdeSystem for GhaffariSystem<'_> {
    fn dimension(&self) -> usize {
        13
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &BOUNDS
    }

    fn derivative(&self, t: f64, y: &[f64], history: Option<&DelayBuffer>, out: &mut [f64]) {
        let delayed = history.map_or(y[var::TP], |h| h.lookup(t)[0]);
        out.copy_from_slice(&ghaffari_derivatives(y, self.action, self.params, delayed));
    }

    fn delayed_components(&self, state: &[f64], out: &mut Vec<f64>) {
        out.push(state[var::TP]);
    }
}

pub struct GhaffariCancerEnv {
    spec: EnvSpec,
    nominal: GhaffariParams,
    pending: GhaffariParams,
    params: GhaffariParams,
    state: [f64; 13],
    initial_total: f64,
    time: f64,
    history: DelayBuffer,
    clock: EpisodeClock,
}

impl GhaffariCancerEnv {
    pub fn new() -> Self {
        Self::with_params(GhaffariParams::default())
    }

    pub fn with_params(params: GhaffariParams) -> Self {
        let spec = EnvSpec::new(NAME, COMPONENTS.len(), 9, MAX_STEPS, STEP_DAYS)
            .expect("static spec is valid");
        let state = initial_state(&params);
        Self {
            spec,
            nominal: params,
            pending: params,
            params,
            state,
            initial_total: state[var::TP] + state[var::TS],
            time: 0.0,
            history: DelayBuffer::new(DELAY_DAYS, STEP_DAYS / SUBSTEPS as f64, vec![state[var::TP]]),
            clock: EpisodeClock::new(MAX_STEPS),
        }
    }

    pub fn params(&self) -> &GhaffariParams {
        &self.params
    }
}

impl Default for GhaffariCancerEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for GhaffariCancerEnv {
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
        &["D", "vM"]
    }

    fn action_values(&self, action: usize) -> Result<Vec<f64>, EnvError> {
        let a = ghaffari_action_map(action)?;
        Ok(vec![a.radiation, a.chemo])
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.params = self.pending;
        self.state = initial_state(&self.params);
        self.initial_total = self.state[var::TP] + self.state[var::TS];
        self.time = 0.0;
        self.history.reset(vec![self.state[var::TP]]);
        self.history.record(0.0, &[self.state[var::TP]]);
        self.clock.reset();
        self.clean_observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.clock.check(action, self.spec.action_count)?;
        let system = GhaffariSystem {
            params: &self.params,
            action: ghaffari_action_map(action)?,
        };
        let next = rk4_step(
            &system,
            self.time,
            &self.state,
            STEP_DAYS,
            SUBSTEPS,
            Some(&mut self.history),
        )?;
        self.state.copy_from_slice(&next);
        self.time += STEP_DAYS;

        let (reward, terminated) = ghaffari_reward(&self.state, self.initial_total);
        let truncated = self.clock.advance(terminated);
        Ok(StepResult {
            observation: self.clean_observation(),
            reward,
            terminated,
            truncated,
            info: Info {
                state: self.state.to_vec(),
            },
        })
    }

    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn clean_observation(&self) -> Observation {
        Observation::fully_observed(self.state[..7].to_vec())
    }

    fn sample_patient(&mut self, spread: f64, rng: &mut RngStream) {
        self.pending =
            GhaffariParams::from_vector(&sample_pkpd(&self.nominal.to_vector(), spread, rng));
    }

    fn nominal_patient(&mut self) {
        self.pending = self.nominal;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NO_TREATMENT: GhaffariAction = GhaffariAction {
        radiation: 0.0,
        chemo: 0.0,
    };

    #[test]
    fn empty_body_only_gains_lymphocytes() {
        let p = GhaffariParams::default();
        let d = ghaffari_derivatives(&[0.0; 13], NO_TREATMENT, &p, 0.0);
        for (i, x) in d.iter().enumerate() {
            if i == var::C {
                assert_eq!(*x, p.alpha);
            } else {
                assert_eq!(*x, 0.0, "component {i}");
            }
        }
    }

    #[test]
    fn lymphocytes_at_steady_state() {
        let p = GhaffariParams::default();
        let mut y = [0.0; 13];
        y[var::C] = p.alpha / p.beta;
        let d = ghaffari_derivatives(&y, NO_TREATMENT, &p, 0.0);
        assert_eq!(d[var::C], 0.0);
    }

    #[test]
    fn default_initial_derivatives_match_hand_evaluation() {
        // Independent scalar evaluation of the 13 equations at the default
        // initial state with zero action and constant pre-history Tp(0).
        let expected = [
            4265973.890104133,
            -340700412.0,
            -27939.83465665235,
            0.0,
            100.00000000000001,
            1299650.0,
            -1.8002999999999998,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        ];
        let p = GhaffariParams::default();
        let y = initial_state(&p);
        let d = ghaffari_derivatives(&y, NO_TREATMENT, &p, 1e7);
        for (i, (got, want)) in d.iter().zip(expected).enumerate() {
            let tol = 1e-12 * f64::abs(want).max(1.0);
            assert!((got - want).abs() <= tol, "component {i}: {got} vs {want}");
        }
    }

    #[test]
    fn reward_cases() {
        let mut y = [0.0; 13];
        y[var::TP] = 6e6;
        y[var::TS] = 4e6;
        assert_eq!(ghaffari_reward(&y, 1e7), (0.0, false));
        y[var::TP] = 3e6;
        y[var::TS] = 2e6;
        let (r, done) = ghaffari_reward(&y, 1e7);
        assert!((r - 0.5).abs() < 1e-15 && !done);
        y[var::TP] = 0.5;
        y[var::TS] = 0.3;
        let (r, done) = ghaffari_reward(&y, 1e7);
        assert!(done);
        assert!((r - (1.0 - 0.8 / 1e7 + 100.0)).abs() < 1e-12);
        y[var::TP] = TUMOUR_CAP;
        let (r, done) = ghaffari_reward(&y, 1e7);
        assert!(done && r < -100.0);
    }

    #[test]
    fn action_grid_row_major() {
        assert_eq!(
            ghaffari_action_map(0).unwrap(),
            GhaffariAction { radiation: 0.0, chemo: 0.0 }
        );
        assert_eq!(
            ghaffari_action_map(8).unwrap(),
            GhaffariAction { radiation: 10.0, chemo: 8.0 }
        );
        assert_eq!(
            ghaffari_action_map(5).unwrap(),
            GhaffariAction { radiation: 5.0, chemo: 8.0 }
        );
        assert!(ghaffari_action_map(9).is_err());
    }

    #[test]
    fn no_migration_keeps_secondary_site_clear() {
        let params = GhaffariParams {
            alpha2: 0.0,
            ..GhaffariParams::default()
        };
        let mut env = GhaffariCancerEnv::with_params(params);
        env.reset(0);
        for k in 0..MAX_STEPS {
            let r = env.step(k % 9).unwrap();
            assert_eq!(r.info.state[var::TS], 0.0);
            if r.done() {
                break;
            }
        }
    }

    #[test]
    fn reward_lower_bound_and_ranges() {
        let mut env = GhaffariCancerEnv::new();
        for action in 0..9 {
            env.reset(0);
            let bound = 1.0 - 2.0 * TUMOUR_CAP / 1e7 - 100.0;
            loop {
                let r = env.step(action).unwrap();
                assert!(r.reward.is_finite() && r.reward >= bound);
                for (x, (lo, hi)) in r.info.state.iter().zip(BOUNDS) {
                    assert!(*x >= lo && *x <= hi);
                }
                let s = &r.info.state;
                let bonus = r.reward - (1.0 - (s[var::TP] + s[var::TS]) / 1e7);
                if r.terminated {
                    assert!((bonus.abs() - 100.0).abs() < 1e-6 * r.reward.abs().max(1.0));
                } else {
                    assert!(bonus.abs() < 1e-9);
                }
                if r.done() {
                    break;
                }
            }
        }
    }

    #[test]
    fn observation_hides_drug_and_irradiated_pools() {
        let mut env = GhaffariCancerEnv::new();
        let obs = env.reset(0);
        assert_eq!(obs.len(), 7);
        let names: Vec<_> = env.observation_components().iter().map(|c| c.name).collect();
        for hidden in ["M", "u", "v", "x"] {
            assert!(!names.contains(&hidden));
        }
    }
}
