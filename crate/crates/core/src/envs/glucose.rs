//! Glucose-insulin meal response of a type-1 diabetic patient under a basal
//! insulin pump. Time unit is the minute.

use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::ode::{rk4_step, DelayBuffer, OdeSystem};
use crate::pomdp::{
    binned_value, EnvError, EnvSpec, EpisodeClock, Environment, Info, Observation,
    ObservationComponent, StepResult,
};
use crate::realism::{sample_pkpd, ParameterVector};
use crate::rng::RngStream;

pub const NAME: &str = "SimGlucoseEnv";
pub const STEP_MINUTES: f64 = 5.0;
pub const SUBSTEPS: usize = 5;
pub const MAX_STEPS: usize = 288;
pub const DEFAULT_BINS: usize = 5;
pub const MAX_INSULIN: f64 = 30.0;
pub const GLUCOSE_LOW: f64 = 10.0;
pub const GLUCOSE_HIGH: f64 = 600.0;
pub const INITIAL_GLUCOSE: f64 = 140.0;
pub const PROFILE_COUNT: usize = 30;
pub const MEAL_JITTER_MINUTES: f64 = 30.0;
const PROFILE_SEED: u64 = 0x9_1c05e;

const COMPONENTS: [ObservationComponent; 1] =
    [ObservationComponent::continuous("Gp", GLUCOSE_LOW, GLUCOSE_HIGH, INITIAL_GLUCOSE)];

const STATE_NAMES: [&str; 10] = ["Gp", "Gt", "I", "X", "XL", "Ssto", "Qsto", "Qgut", "Isc1", "Isc2"];

const BOUNDS: [(f64, f64); 10] = [(0.0, f64::MAX); 10];

pub mod var {
    pub const GP: usize = 0;
    pub const GT: usize = 1;
    pub const I: usize = 2;
    pub const X: usize = 3;
    pub const XL: usize = 4;
    pub const SSTO: usize = 5;
    pub const QSTO: usize = 6;
    pub const QGUT: usize = 7;
    pub const ISC1: usize = 8;
    pub const ISC2: usize = 9;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlucoseParams {
    pub kp1: f64,
    pub kp2: f64,
    pub kp3: f64,
    pub ke1: f64,
    pub ke2: f64,
    pub vm0: f64,
    pub vmx: f64,
    pub km0: f64,
    pub k1: f64,
    pub k2: f64,
    pub p2u: f64,
    pub ki: f64,
    pub ksto: f64,
    pub kgut: f64,
    pub kabs: f64,
    pub f: f64,
    pub bw: f64,
    /// Basal insulin level, the steady state at zero pump input.
    pub ib: f64,
    /// Insulin-independent glucose utilization.
    pub uii: f64,
    /// Subcutaneous depot transfer rates.
    pub kd: f64,
    pub ka: f64,
    /// Plasma insulin appearance per unit of depot outflow.
    pub insulin_gain: f64,
}

impl Default for GlucoseParams {
    fn default() -> Self {
        Self {
            kp1: 11.5048,
            kp2: 0.0233,
            kp3: 0.0233,
            ke1: 0.0005,
            ke2: 339.0,
            vm0: 5.9285,
            vmx: 0.0747,
            km0: 260.89,
            k1: 0.0573,
            k2: 0.0677,
            p2u: 0.0213,
            ki: 0.0089,
            ksto: 0.0159,
            kgut: 0.0159,
            kabs: 0.0910,
            f: 0.9,
            bw: 68.7060,
            ib: 0.0,
            uii: 1.0,
            kd: 0.0164,
            ka: 0.0164,
            insulin_gain: 20.0,
        }
    }
}

impl ParameterVector for GlucoseParams {
    fn to_vector(&self) -> Vec<f64> {
        vec![
            self.kp1,
            self.kp2,
            self.kp3,
            self.ke1,
            self.ke2,
            self.vm0,
            self.vmx,
            self.km0,
            self.k1,
            self.k2,
            self.p2u,
            self.ki,
            self.ksto,
            self.kgut,
            self.kabs,
            self.f,
            self.bw,
            self.ib,
            self.uii,
            self.kd,
            self.ka,
            self.insulin_gain,
        ]
    }

    fn from_vector(v: &[f64]) -> Self {
        Self {
            kp1: v[0],
            kp2: v[1],
            kp3: v[2],
            ke1: v[3],
            ke2: v[4],
            vm0: v[5],
            vmx: v[6],
            km0: v[7],
            k1: v[8],
            k2: v[9],
            p2u: v[10],
            ki: v[11],
            ksto: v[12],
            kgut: v[13],
            kabs: v[14],
            f: v[15],
            bw: v[16],
            ib: v[17],
            uii: v[18],
            kd: v[19],
            ka: v[20],
            insulin_gain: v[21],
        }
    }
}

/// Rate of glucose appearance from the gut.
pub fn glucose_appearance(qgut: f64, p: &GlucoseParams) -> f64 {
    p.f * p.kabs * qgut / p.bw
}

/// Renal excretion, zero at or below the threshold `ke2`.
pub fn renal_excretion(gp: f64, p: &GlucoseParams) -> f64 {
    if gp > p.ke2 {
        p.ke1 * (gp - p.ke2)
    } else {
        0.0
    }
}

/// Pump rate in U/h to depot input in pmol/kg/min.
pub fn pump_input(insulin_rate: f64, p: &GlucoseParams) -> f64 {
    insulin_rate * 100.0 / p.bw
}

/// `cho_rate` is carbohydrate intake in mg/min.
pub fn glucose_derivatives(y: &[f64], insulin_rate: f64, cho_rate: f64, p: &GlucoseParams) -> [f64; 10] {
    use var::*;
    let ra = glucose_appearance(y[QGUT], p);
    let e = renal_excretion(y[GP], p);
    let uid = (p.vm0 + p.vmx * y[X]) * y[GT] / (p.km0 + y[GT]);
    let egp = p.kp1 - p.kp2 * y[GP] - p.kp3 * y[XL];
    let plasma_source = p.insulin_gain * p.ka * y[ISC2];

    let mut d = [0.0; 10];
    d[GP] = egp + ra - p.uii - e - p.k1 * y[GP] + p.k2 * y[GT];
    d[GT] = -uid + p.k1 * y[GP] - p.k2 * y[GT];
    d[I] = p.ki * (plasma_source - y[I]);
    d[X] = -p.p2u * y[X] + p.p2u * (y[I] - p.ib);
    d[XL] = -p.ki * (y[XL] - plasma_source);
    d[SSTO] = cho_rate - p.ksto * y[SSTO];
    d[QSTO] = p.ksto * y[SSTO] - p.kgut * y[QSTO];
    d[QGUT] = p.kgut * y[QSTO] - p.kabs * y[QGUT];
    d[ISC1] = pump_input(insulin_rate, p) - p.kd * y[ISC1];
    d[ISC2] = p.kd * y[ISC1] - p.ka * y[ISC2];
    d
}

/// Risk term: largest near 112.5 mg/dL, falling off on both sides.
pub fn risk_reward(gp: f64) -> f64 {
    let x = 1.509 * (gp.max(1.0).ln().powf(1.084) - 5.381);
    -(x * x).max(1e-10).log10()
}

/// Penalty on a rise in plasma glucose between steps.
pub fn change_reward(delta: f64) -> f64 {
    if delta < 30.0 {
        0.0
    } else if delta < 60.0 {
        -(delta - 30.0) / 30.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpisodeStatus {
    Running,
    /// Reached the horizon with glucose kept in range.
    Completed,
    /// Glucose left the allowed range.
    Violated,
}

pub fn glucose_reward(gp_now: f64, gp_prev: f64, status: EpisodeStatus) -> f64 {
    let outcome = match status {
        EpisodeStatus::Running => 0.0,
        EpisodeStatus::Completed => 100.0,
        EpisodeStatus::Violated => -100.0,
    };
    risk_reward(gp_now) + change_reward(gp_now - gp_prev) + outcome
}

pub fn glucose_action_map(index: usize, bins: usize) -> Result<f64, EnvError> {
    binned_value(index, bins, 0.0, MAX_INSULIN)
}

/// Tissue glucose balancing `gp` with no insulin action.
pub fn steady_tissue_glucose(gp: f64, p: &GlucoseParams) -> f64 {
    // k2 Gt^2 + (k2 Km0 + Vm0 - k1 Gp) Gt - k1 Gp Km0 = 0, positive root.
    let a = p.k2;
    let b = p.k2 * p.km0 + p.vm0 - p.k1 * gp;
    let c = -p.k1 * gp * p.km0;
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}

pub fn initial_state(p: &GlucoseParams) -> [f64; 10] {
    let mut y = [0.0; 10];
    y[var::GP] = INITIAL_GLUCOSE;
    y[var::GT] = steady_tissue_glucose(INITIAL_GLUCOSE, p);
    y[var::I] = p.ib;
    y[var::X] = 0.0;
    y[var::XL] = p.ib;
    y
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Meal {
    /// Minutes after episode start (midnight).
    pub minute: f64,
    pub grams: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MealScenario {
    pub meals: Vec<Meal>,
}

impl MealScenario {
    pub const MAX_GRAMS: f64 = 200.0;

    /// Breakfast 07:00 45 g, lunch 12:00 70 g, dinner 18:00 80 g.
    pub fn standard() -> Self {
        Self {
            meals: vec![
                Meal { minute: 420.0, grams: 45.0 },
                Meal { minute: 720.0, grams: 70.0 },
                Meal { minute: 1080.0, grams: 80.0 },
            ],
        }
    }

    /// Standard day plus a 15 g snack at 15:00.
    pub fn with_snack() -> Self {
        let mut s = Self::standard();
        s.meals.insert(2, Meal { minute: 900.0, grams: 15.0 });
        s
    }

    /// One meal per line: `HH:MM grams` or `minutes grams`, whitespace or
    /// comma separated. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut meals = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ScenarioError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(err(format!("expected `time grams`, got {line:?}")));
            }
            let minute = parse_time(fields[0]).ok_or_else(|| err(format!("bad time {:?}", fields[0])))?;
            let grams: f64 = fields[1]
                .parse()
                .map_err(|_| err(format!("bad amount {:?}", fields[1])))?;
            if !(grams > 0.0 && grams < Self::MAX_GRAMS) {
                return Err(err(format!("amount {grams} outside (0, 200) g")));
            }
            meals.push(Meal { minute, grams });
        }
        meals.sort_by(|a, b| a.minute.total_cmp(&b.minute));
        Ok(Self { meals })
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Carbohydrate intake rate (mg/min) over `[start, start + STEP_MINUTES)`.
    /// A meal is eaten evenly across the step that contains it.
    pub fn intake_rate(&self, start: f64) -> f64 {
        let grams: f64 = self
            .meals
            .iter()
            .filter(|m| m.minute >= start && m.minute < start + STEP_MINUTES)
            .map(|m| m.grams)
            .sum();
        grams * 1000.0 / STEP_MINUTES
    }

    /// Times shifted by up to ±30 min and amounts scaled within ±`spread`.
    pub fn jittered<R: Rng + ?Sized>(&self, spread: f64, rng: &mut R) -> Self {
        let meals = self
            .meals
            .iter()
            .map(|m| {
                let shift = (rng.random::<f64>() * 2.0 - 1.0) * MEAL_JITTER_MINUTES;
                let scale = 1.0 + (rng.random::<f64>() * 2.0 - 1.0) * spread;
                Meal {
                    minute: (m.minute + shift).max(0.0),
                    grams: (m.grams * scale).clamp(1e-3, Self::MAX_GRAMS - 1e-3),
                }
            })
            .collect();
        Self { meals }
    }
}

fn parse_time(s: &str) -> Option<f64> {
    match s.split_once(':') {
        Some((h, m)) => {
            let h: u32 = h.parse().ok()?;
            let m: u32 = m.parse().ok()?;
            (h < 24 && m < 60).then(|| (h * 60 + m) as f64)
        }
        None => s.parse::<f64>().ok().filter(|v| *v >= 0.0),
    }
}

/// Thirty patients: ten adolescents, ten adults, ten children. Profile 0
/// is the reference adolescent; the rest scale body weight by group and
/// perturb every parameter by up to ±10%, from a fixed seed.
pub fn synthetic_profiles() -> Vec<GlucoseParams> {
    let base = GlucoseParams::default();
    let mut rng = RngStream::new(PROFILE_SEED, 0);
    let mut out = Vec::with_capacity(PROFILE_COUNT);
    for i in 0..PROFILE_COUNT {
        if i == 0 {
            out.push(base);
            continue;
        }
        let mut group = base;
        group.bw *= match i / 10 {
            0 => 1.0,
            1 => 1.2,
            _ => 0.55,
        };
        out.push(GlucoseParams::from_vector(&sample_pkpd(&group.to_vector(), 0.1, &mut rng)));
    }
    out
}

struct GlucoseSystem<'a> {
    params: &'a GlucoseParams,
    insulin_rate: f64,
    cho_rate: f64,
}

impl OdeSystem for GlucoseSystem<'_> {
    fn dimension(&self) -> usize {
        10
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &BOUNDS
    }

    fn derivative(&self, _t: f64, y: &[f64], _h: Option<&DelayBuffer>, out: &mut [f64]) {
        out.copy_from_slice(&glucose_derivatives(y, self.insulin_rate, self.cho_rate, self.params));
    }
}

pub struct SimGlucoseEnv {
    spec: EnvSpec,
    bins: usize,
    profiles: Vec<GlucoseParams>,
    nominal_meals: MealScenario,
    pending: (GlucoseParams, MealScenario),
    params: GlucoseParams,
    meals: MealScenario,
    state: [f64; 10],
    prev_gp: f64,
    time: f64,
    clock: EpisodeClock,
}

impl SimGlucoseEnv {
    pub fn new() -> Self {
        Self::with_bins(DEFAULT_BINS).expect("default bin count is valid")
    }

    pub fn with_bins(bins: usize) -> Result<Self, EnvError> {
        let spec = EnvSpec::new(NAME, COMPONENTS.len(), bins, MAX_STEPS, STEP_MINUTES)?;
        Ok(Self::with_scenario(spec, bins, MealScenario::standard()))
    }

    pub fn with_scenario(spec: EnvSpec, bins: usize, meals: MealScenario) -> Self {
        let profiles = synthetic_profiles();
        let params = profiles[0];
        Self {
            spec,
            bins,
            profiles,
            nominal_meals: meals.clone(),
            pending: (params, meals.clone()),
            params,
            meals,
            state: initial_state(&params),
            prev_gp: INITIAL_GLUCOSE,
            time: 0.0,
            clock: EpisodeClock::new(MAX_STEPS),
        }
    }

    pub fn params(&self) -> &GlucoseParams {
        &self.params
    }

    pub fn meals(&self) -> &MealScenario {
        &self.meals
    }

    pub fn glucose(&self) -> f64 {
        self.state[var::GP]
    }
}

impl Default for SimGlucoseEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for SimGlucoseEnv {
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
        &["insulin"]
    }

    fn action_values(&self, action: usize) -> Result<Vec<f64>, EnvError> {
        Ok(vec![glucose_action_map(action, self.bins)?])
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.params = self.pending.0;
        self.meals = self.pending.1.clone();
        self.state = initial_state(&self.params);
        self.prev_gp = self.state[var::GP];
        self.time = 0.0;
        self.clock.reset();
        self.clean_observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.clock.check(action, self.spec.action_count)?;
        let system = GlucoseSystem {
            params: &self.params,
            insulin_rate: glucose_action_map(action, self.bins)?,
            cho_rate: self.meals.intake_rate(self.time),
        };
        let next = rk4_step(&system, self.time, &self.state, STEP_MINUTES, SUBSTEPS, None)?;
        self.prev_gp = self.state[var::GP];
        self.state.copy_from_slice(&next);
        self.time += STEP_MINUTES;

        let gp = self.state[var::GP];
        let terminated = !(GLUCOSE_LOW..=GLUCOSE_HIGH).contains(&gp);
        let truncated = self.clock.advance(terminated);
        let status = if terminated {
            EpisodeStatus::Violated
        } else if truncated {
            EpisodeStatus::Completed
        } else {
            EpisodeStatus::Running
        };
        Ok(StepResult {
            observation: self.clean_observation(),
            reward: glucose_reward(gp, self.prev_gp, status),
            terminated,
            truncated,
            info: Info {
                state: self.state(),
            },
        })
    }

    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn clean_observation(&self) -> Observation {
        Observation::fully_observed(vec![self.state[var::GP]])
    }

    /// Draws one of the synthetic profiles and jitters the meal plan.
    fn sample_patient(&mut self, spread: f64, rng: &mut RngStream) {
        let profile = self.profiles[rng.random_range(0..self.profiles.len())];
        self.pending = (profile, self.nominal_meals.jittered(spread, rng));
    }

    fn nominal_patient(&mut self) {
        self.pending = (self.profiles[0], self.nominal_meals.clone());
    }
}
