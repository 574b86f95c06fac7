//! Discrete sepsis simulator: four categorical vitals, a hidden diabetes
//! flag and three binary treatments with probabilistic effects.

use rand::Rng;

use crate::pomdp::{
    EnvError, EnvSpec, EpisodeClock, Environment, Info, Observation, ObservationComponent,
    StepResult,
};
use crate::realism::{sample_pkpd, ParameterVector};
use crate::rng::{streams, RngStream};

pub const NAME: &str = "OberstSepsisEnv";
pub const MAX_STEPS: usize = 20;
pub const DIABETIC_PREVALENCE: f64 = 0.2;
pub const ACTION_COUNT: usize = 8;

/// Levels of heart rate, blood pressure and oxygen: Low, Normal, High.
pub const VITAL_LEVELS: u8 = 3;
/// Levels of glucose: Super Low, Low, Normal, High, Super High.
pub const GLUCOSE_LEVELS: u8 = 5;
pub const LOW: u8 = 0;
pub const NORMAL: u8 = 1;
pub const HIGH: u8 = 2;
pub const GLUCOSE_NORMAL: u8 = 2;

const COMPONENTS: [ObservationComponent; 4] = [
    ObservationComponent::categorical("hr", 3, 0.5),
    ObservationComponent::categorical("bp", 3, 0.5),
    ObservationComponent::categorical("o2", 3, 0.5),
    ObservationComponent::categorical("glu", 5, 0.5),
];

const STATE_NAMES: [&str; 8] = ["hr", "bp", "o2", "glu", "diabetic", "abx", "vaso", "vent"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SepsisAction {
    pub abx: bool,
    pub vaso: bool,
    pub vent: bool,
}

impl SepsisAction {
    /// Index layout `abx * 4 + vaso * 2 + vent`.
    pub fn from_index(index: usize) -> Result<Self, EnvError> {
        if index >= ACTION_COUNT {
            return Err(EnvError::InvalidAction {
                action: index,
                count: ACTION_COUNT,
            });
        }
        Ok(Self {
            abx: index & 4 != 0,
            vaso: index & 2 != 0,
            vent: index & 1 != 0,
        })
    }

    pub fn index(self) -> usize {
        (self.abx as usize) * 4 + (self.vaso as usize) * 2 + self.vent as usize
    }

    pub fn any(self) -> bool {
        self.abx || self.vaso || self.vent
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SepsisState {
    pub hr: u8,
    pub bp: u8,
    pub o2: u8,
    pub glu: u8,
    pub diabetic: bool,
    /// Treatments currently running.
    pub treatment: SepsisAction,
}

impl SepsisState {
    pub fn abnormal_count(&self) -> usize {
        [
            self.hr != NORMAL,
            self.bp != NORMAL,
            self.o2 != NORMAL,
            self.glu != GLUCOSE_NORMAL,
        ]
        .iter()
        .filter(|&&a| a)
        .count()
    }

    /// Every combination of vitals and diabetes status, treatments off.
    pub fn enumerate_vitals() -> impl Iterator<Item = SepsisState> {
        (0..VITAL_LEVELS).flat_map(move |hr| {
            (0..VITAL_LEVELS).flat_map(move |bp| {
                (0..VITAL_LEVELS).flat_map(move |o2| {
                    (0..GLUCOSE_LEVELS).flat_map(move |glu| {
                        [false, true].into_iter().map(move |diabetic| SepsisState {
                            hr,
                            bp,
                            o2,
                            glu,
                            diabetic,
                            treatment: SepsisAction::default(),
                        })
                    })
                })
            })
        })
    }
}

/// Transition probabilities, one field per table row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SepsisParams {
    pub abx_hr_high_to_normal: f64,
    pub abx_bp_high_to_normal: f64,
    pub abx_withdrawn_hr_normal_to_high: f64,
    pub abx_withdrawn_bp_normal_to_high: f64,
    pub vent_o2_low_to_normal: f64,
    pub vent_withdrawn_o2_normal_to_low: f64,
    pub vaso_bp_low_to_normal: f64,
    pub vaso_bp_normal_to_high: f64,
    pub vaso_diabetic_bp_low_to_normal: f64,
    pub vaso_diabetic_bp_low_to_high: f64,
    pub vaso_diabetic_bp_normal_to_high: f64,
    pub vaso_diabetic_glucose_up: f64,
    pub vaso_withdrawn_bp_normal_to_low: f64,
    pub vaso_withdrawn_bp_high_to_normal: f64,
    pub vaso_withdrawn_diabetic_bp_normal_to_low: f64,
    pub vaso_withdrawn_diabetic_bp_high_to_normal: f64,
    pub fluctuation: f64,
    pub diabetic_glucose_fluctuation: f64,
}

impl Default for SepsisParams {
    fn default() -> Self {
        Self {
            abx_hr_high_to_normal: 0.5,
            abx_bp_high_to_normal: 0.5,
            abx_withdrawn_hr_normal_to_high: 0.1,
            abx_withdrawn_bp_normal_to_high: 0.5,
            vent_o2_low_to_normal: 0.7,
            vent_withdrawn_o2_normal_to_low: 0.1,
            vaso_bp_low_to_normal: 0.7,
            vaso_bp_normal_to_high: 0.7,
            vaso_diabetic_bp_low_to_normal: 0.5,
            vaso_diabetic_bp_low_to_high: 0.4,
            vaso_diabetic_bp_normal_to_high: 0.9,
            vaso_diabetic_glucose_up: 0.5,
            vaso_withdrawn_bp_normal_to_low: 0.1,
            vaso_withdrawn_bp_high_to_normal: 0.1,
            vaso_withdrawn_diabetic_bp_normal_to_low: 0.05,
            vaso_withdrawn_diabetic_bp_high_to_normal: 0.05,
            fluctuation: 0.1,
            diabetic_glucose_fluctuation: 0.3,
        }
    }
}

impl ParameterVector for SepsisParams {
    fn to_vector(&self) -> Vec<f64> {
        vec![
            self.abx_hr_high_to_normal,
            self.abx_bp_high_to_normal,
            self.abx_withdrawn_hr_normal_to_high,
            self.abx_withdrawn_bp_normal_to_high,
            self.vent_o2_low_to_normal,
            self.vent_withdrawn_o2_normal_to_low,
            self.vaso_bp_low_to_normal,
            self.vaso_bp_normal_to_high,
            self.vaso_diabetic_bp_low_to_normal,
            self.vaso_diabetic_bp_low_to_high,
            self.vaso_diabetic_bp_normal_to_high,
            self.vaso_diabetic_glucose_up,
            self.vaso_withdrawn_bp_normal_to_low,
            self.vaso_withdrawn_bp_high_to_normal,
            self.vaso_withdrawn_diabetic_bp_normal_to_low,
            self.vaso_withdrawn_diabetic_bp_high_to_normal,
            self.fluctuation,
            self.diabetic_glucose_fluctuation,
        ]
    }

    fn from_vector(v: &[f64]) -> Self {
        let p = |i: usize| v[i].clamp(0.0, 1.0);
        Self {
            abx_hr_high_to_normal: p(0),
            abx_bp_high_to_normal: p(1),
            abx_withdrawn_hr_normal_to_high: p(2),
            abx_withdrawn_bp_normal_to_high: p(3),
            vent_o2_low_to_normal: p(4),
            vent_withdrawn_o2_normal_to_low: p(5),
            vaso_bp_low_to_normal: p(6),
            vaso_bp_normal_to_high: p(7),
            vaso_diabetic_bp_low_to_normal: p(8),
            vaso_diabetic_bp_low_to_high: p(9),
            vaso_diabetic_bp_normal_to_high: p(10),
            vaso_diabetic_glucose_up: p(11),
            vaso_withdrawn_bp_normal_to_low: p(12),
            vaso_withdrawn_bp_high_to_normal: p(13),
            vaso_withdrawn_diabetic_bp_normal_to_low: p(14),
            vaso_withdrawn_diabetic_bp_high_to_normal: p(15),
            fluctuation: p(16),
            diabetic_glucose_fluctuation: p(17),
        }
    }
}

/// Moves `level` from `from` to `to` with probability `p`.
fn maybe_move<R: Rng + ?Sized>(rng: &mut R, level: &mut u8, from: u8, to: u8, p: f64) {
    if *level == from && rng.random::<f64>() < p {
        *level = to;
    }
}

/// With probability `p` shift one level up or down (equally likely), clamped.
fn fluctuate<R: Rng + ?Sized>(rng: &mut R, level: &mut u8, levels: u8, p: f64) {
    let u: f64 = rng.random();
    if u < 0.5 * p {
        *level = level.saturating_sub(1);
    } else if u < p {
        *level = (*level + 1).min(levels - 1);
    }
}

/// One transition. Treatment effects apply in table order (antibiotics,
/// ventilation, vasopressors); vitals not touched by a treatment that is on
/// or was just withdrawn then fluctuate.
pub fn sepsis_transition<R: Rng + ?Sized>(
    state: &SepsisState,
    action: SepsisAction,
    params: &SepsisParams,
    rng: &mut R,
) -> SepsisState {
    let prev = state.treatment;
    let mut next = *state;
    let abx_withdrawn = prev.abx && !action.abx;
    let vent_withdrawn = prev.vent && !action.vent;
    let vaso_withdrawn = prev.vaso && !action.vaso;

    if action.abx {
        maybe_move(rng, &mut next.hr, HIGH, NORMAL, params.abx_hr_high_to_normal);
        maybe_move(rng, &mut next.bp, HIGH, NORMAL, params.abx_bp_high_to_normal);
    } else if abx_withdrawn {
        maybe_move(rng, &mut next.hr, NORMAL, HIGH, params.abx_withdrawn_hr_normal_to_high);
        maybe_move(rng, &mut next.bp, NORMAL, HIGH, params.abx_withdrawn_bp_normal_to_high);
    }

    if action.vent {
        maybe_move(rng, &mut next.o2, LOW, NORMAL, params.vent_o2_low_to_normal);
    } else if vent_withdrawn {
        maybe_move(rng, &mut next.o2, NORMAL, LOW, params.vent_withdrawn_o2_normal_to_low);
    }

    if action.vaso {
        if state.diabetic {
            match next.bp {
                LOW => {
                    let u: f64 = rng.random();
                    if u < params.vaso_diabetic_bp_low_to_normal {
                        next.bp = NORMAL;
                    } else if u < params.vaso_diabetic_bp_low_to_normal + params.vaso_diabetic_bp_low_to_high {
                        next.bp = HIGH;
                    }
                }
                NORMAL => maybe_move(rng, &mut next.bp, NORMAL, HIGH, params.vaso_diabetic_bp_normal_to_high),
                _ => {}
            }
            if next.glu < GLUCOSE_LEVELS - 1 && rng.random::<f64>() < params.vaso_diabetic_glucose_up {
                next.glu += 1;
            }
        } else {
            match next.bp {
                LOW => maybe_move(rng, &mut next.bp, LOW, NORMAL, params.vaso_bp_low_to_normal),
                NORMAL => maybe_move(rng, &mut next.bp, NORMAL, HIGH, params.vaso_bp_normal_to_high),
                _ => {}
            }
        }
    } else if vaso_withdrawn {
        let (to_low, to_normal) = if state.diabetic {
            (
                params.vaso_withdrawn_diabetic_bp_normal_to_low,
                params.vaso_withdrawn_diabetic_bp_high_to_normal,
            )
        } else {
            (params.vaso_withdrawn_bp_normal_to_low, params.vaso_withdrawn_bp_high_to_normal)
        };
        match next.bp {
            NORMAL => maybe_move(rng, &mut next.bp, NORMAL, LOW, to_low),
            HIGH => maybe_move(rng, &mut next.bp, HIGH, NORMAL, to_normal),
            _ => {}
        }
    }

    let hr_treated = action.abx || abx_withdrawn;
    let bp_treated = hr_treated || action.vaso || vaso_withdrawn;
    let o2_treated = action.vent || vent_withdrawn;
    let glu_treated = state.diabetic && action.vaso;
    if !hr_treated {
        fluctuate(rng, &mut next.hr, VITAL_LEVELS, params.fluctuation);
    }
    if !bp_treated {
        fluctuate(rng, &mut next.bp, VITAL_LEVELS, params.fluctuation);
    }
    if !o2_treated {
        fluctuate(rng, &mut next.o2, VITAL_LEVELS, params.fluctuation);
    }
    if !glu_treated {
        let p = if state.diabetic {
            params.diabetic_glucose_fluctuation
        } else {
            params.fluctuation
        };
        fluctuate(rng, &mut next.glu, GLUCOSE_LEVELS, p);
    }

    next.treatment = action;
    next
}

/// `(-1, true)` on death (three or more abnormal vitals), `(+1, true)` on
/// discharge (all vitals normal, no treatment running), else `(0, false)`.
pub fn sepsis_reward_and_terminal(state: &SepsisState) -> (f64, bool) {
    let abnormal = state.abnormal_count();
    if abnormal >= 3 {
        (-1.0, true)
    } else if abnormal == 0 && !state.treatment.any() {
        (1.0, true)
    } else {
        (0.0, false)
    }
}

/// Diabetic with probability [`DIABETIC_PREVALENCE`]; vitals uniform,
/// redrawn until one or two are abnormal; no treatment running.
pub fn sepsis_initial_state<R: Rng + ?Sized>(rng: &mut R) -> SepsisState {
    let diabetic = rng.random::<f64>() < DIABETIC_PREVALENCE;
    loop {
        let s = SepsisState {
            hr: rng.random_range(0..VITAL_LEVELS),
            bp: rng.random_range(0..VITAL_LEVELS),
            o2: rng.random_range(0..VITAL_LEVELS),
            glu: rng.random_range(0..GLUCOSE_LEVELS),
            diabetic,
            treatment: SepsisAction::default(),
        };
        if (1..=2).contains(&s.abnormal_count()) {
            return s;
        }
    }
}

/// Dense index in `0..135` of an observation's vital levels.
pub fn observation_key(values: &[f64]) -> usize {
    let lvl = |v: f64, levels: u8| ((v * (levels - 1) as f64).round() as usize).min(levels as usize - 1);
    lvl(values[0], 3) + 3 * lvl(values[1], 3) + 9 * lvl(values[2], 3) + 27 * lvl(values[3], 5)
}

pub const OBSERVATION_KEYS: usize = 135;

pub struct OberstSepsisEnv {
    spec: EnvSpec,
    nominal: SepsisParams,
    pending: SepsisParams,
    params: SepsisParams,
    state: SepsisState,
    rng: RngStream,
    clock: EpisodeClock,
}

impl OberstSepsisEnv {
    pub fn new() -> Self {
        Self::with_params(SepsisParams::default())
    }

    pub fn with_params(params: SepsisParams) -> Self {
        let mut rng = RngStream::new(0, streams::DYNAMICS);
        let state = sepsis_initial_state(&mut rng);
        Self {
            spec: EnvSpec::new(NAME, COMPONENTS.len(), ACTION_COUNT, MAX_STEPS, 1.0)
                .expect("static spec is valid"),
            nominal: params,
            pending: params,
            params,
            state,
            rng,
            clock: EpisodeClock::new(MAX_STEPS),
        }
    }

    pub fn sepsis_state(&self) -> &SepsisState {
        &self.state
    }

    pub fn params(&self) -> &SepsisParams {
        &self.params
    }
}

impl Default for OberstSepsisEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for OberstSepsisEnv {
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
        &["abx", "vaso", "vent"]
    }

    fn action_values(&self, action: usize) -> Result<Vec<f64>, EnvError> {
        let a = SepsisAction::from_index(action)?;
        Ok(vec![a.abx as u8 as f64, a.vaso as u8 as f64, a.vent as u8 as f64])
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.params = self.pending;
        self.rng = RngStream::new(seed, streams::DYNAMICS);
        self.state = sepsis_initial_state(&mut self.rng);
        self.clock.reset();
        self.clean_observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.clock.check(action, self.spec.action_count)?;
        let action = SepsisAction::from_index(action)?;
        self.state = sepsis_transition(&self.state, action, &self.params, &mut self.rng);
        let (reward, terminated) = sepsis_reward_and_terminal(&self.state);
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
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        vec![
            s.hr as f64,
            s.bp as f64,
            s.o2 as f64,
            s.glu as f64,
            flag(s.diabetic),
            flag(s.treatment.abx),
            flag(s.treatment.vaso),
            flag(s.treatment.vent),
        ]
    }

    fn clean_observation(&self) -> Observation {
        let s = &self.state;
        Observation::fully_observed(vec![
            s.hr as f64 / 2.0,
            s.bp as f64 / 2.0,
            s.o2 as f64 / 2.0,
            s.glu as f64 / 4.0,
        ])
    }

    fn sample_patient(&mut self, spread: f64, rng: &mut RngStream) {
        self.pending = SepsisParams::from_vector(&sample_pkpd(&self.nominal.to_vector(), spread, rng));
    }

    fn nominal_patient(&mut self) {
        self.pending = self.nominal;
    }
}
