//! Fixed-step classic Runge-Kutta integration with range projection and a
//! snapshot buffer for delayed terms.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("non-finite derivative in component {component} at t = {time}")]
    NonFinite { component: usize, time: f64 },
    #[error("invalid integration request: {0}")]
    InvalidRequest(&'static str),
}

/// A right-hand side `dy/dt = f(t, y)`. Controls and parameters are carried
/// by the implementing type for the duration of one decision step.
pub trait OdeSystem {
    fn dimension(&self) -> usize;

    /// Closed range `[min, max]` of every component.
    fn bounds(&self) -> &[(f64, f64)];

    fn derivative(&self, t: f64, state: &[f64], history: Option<&DelayBuffer>, out: &mut [f64]);

    /// Values to store in the delay buffer after each sub-step.
    fn delayed_components(&self, _state: &[f64], _out: &mut Vec<f64>) {}
}

fn project(bounds: &[(f64, f64)], state: &mut [f64]) {
    for (x, &(lo, hi)) in state.iter_mut().zip(bounds) {
        *x = x.clamp(lo, hi);
    }
}

/// Advances `state` from `t0` by `dt` using `substeps` RK4 steps of size
/// `dt / substeps`.
///
/// Every stage is evaluated on the range-projected stage state and the result
/// of each sub-step is projected back into the declared bounds. When a
/// history buffer is given, the system's delayed components are recorded
/// after every sub-step.
pub fn rk4_step<S: OdeSystem + ?Sized>(
    system: &S,
    t0: f64,
    state: &[f64],
    dt: f64,
    substeps: usize,
    mut history: Option<&mut DelayBuffer>,
) -> Result<Vec<f64>, OdeError> {
    if !(dt > 0.0) {
        return Err(OdeError::InvalidRequest("dt must be positive"));
    }
    if substeps == 0 {
        return Err(OdeError::InvalidRequest("substeps must be at least 1"));
    }
    let n = system.dimension();
    if state.len() != n {
        return Err(OdeError::InvalidRequest("state length does not match system dimension"));
    }
    let bounds = system.bounds();
    let h = dt / substeps as f64;

    let mut y = state.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut snapshot = Vec::new();

    for i in 0..substeps {
        let t = t0 + i as f64 * h;
        {
            let past = history.as_deref();
            eval(system, t, &y, past, &mut k1)?;

            for j in 0..n {
                stage[j] = y[j] + 0.5 * h * k1[j];
            }
            project(bounds, &mut stage);
            eval(system, t + 0.5 * h, &stage, past, &mut k2)?;

            for j in 0..n {
                stage[j] = y[j] + 0.5 * h * k2[j];
            }
            project(bounds, &mut stage);
            eval(system, t + 0.5 * h, &stage, past, &mut k3)?;

            for j in 0..n {
                stage[j] = y[j] + h * k3[j];
            }
            project(bounds, &mut stage);
            eval(system, t + h, &stage, past, &mut k4)?;
        }

        for j in 0..n {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        project(bounds, &mut y);

        if let Some(buffer) = history.as_deref_mut() {
            snapshot.clear();
            system.delayed_components(&y, &mut snapshot);
            buffer.record(t + h, &snapshot);
        }
    }
    Ok(y)
}

fn eval<S: OdeSystem + ?Sized>(
    system: &S,
    t: f64,
    y: &[f64],
    history: Option<&DelayBuffer>,
    out: &mut [f64],
) -> Result<(), OdeError> {
    system.derivative(t, y, history, out);
    match out.iter().position(|d| !d.is_finite()) {
        Some(component) => Err(OdeError::NonFinite { component, time: t }),
        None => Ok(()),
    }
}

/// Ring of past snapshots at sub-step resolution for `x(t - delay)` lookups.
///
/// History before time zero is the constant fill value.
#[derive(Clone, Debug)]
pub struct DelayBuffer {
    delay: f64,
    spacing: f64,
    fill: Vec<f64>,
    capacity: usize,
    entries: VecDeque<(f64, Vec<f64>)>,
}

impl DelayBuffer {
    pub fn new(delay: f64, spacing: f64, fill: Vec<f64>) -> Self {
        assert!(spacing > 0.0, "delay buffer spacing must be positive");
        let capacity = (delay / spacing).ceil() as usize + 4;
        Self {
            delay,
            spacing,
            fill,
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn reset(&mut self, fill: Vec<f64>) {
        self.fill = fill;
        self.entries.clear();
    }

    pub fn record(&mut self, t: f64, values: &[f64]) {
        if self.entries.len() == self.capacity {
            if let Some((_, mut old)) = self.entries.pop_front() {
                old.clear();
                old.extend_from_slice(values);
                self.entries.push_back((t, old));
                return;
            }
        }
        self.entries.push_back((t, values.to_vec()));
    }

    /// Snapshot nearest to `t - delay`, or the fill value before time zero.
    pub fn lookup(&self, t: f64) -> &[f64] {
        let target = t - self.delay;
        if target < 0.0 || self.entries.is_empty() {
            return &self.fill;
        }
        let first = self.entries[0].0;
        let last = self.entries.len() - 1;
        let guess = ((target - first) / self.spacing).round();
        let mut idx = if guess <= 0.0 { 0 } else { (guess as usize).min(last) };
        // Spacing is uniform up to rounding; settle on the true nearest neighbour.
        while idx > 0 && (self.entries[idx - 1].0 - target).abs() < (self.entries[idx].0 - target).abs() {
            idx -= 1;
        }
        while idx < last && (self.entries[idx + 1].0 - target).abs() < (self.entries[idx].0 - target).abs() {
            idx += 1;
        }
        &self.entries[idx].1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay {
        rate: f64,
        bounds: Vec<(f64, f64)>,
    }

    impl OdeSystem for Decay {
        fn dimension(&self) -> usize {
            1
        }
        fn bounds(&self) -> &[(f64, f64)] {
            &self.bounds
        }
        fn derivative(&self, _t: f64, y: &[f64], _h: Option<&DelayBuffer>, out: &mut [f64]) {
            out[0] = -self.rate * y[0];
        }
    }

    struct Still;

    impl OdeSystem for Still {
        fn dimension(&self) -> usize {
            3
        }
        fn bounds(&self) -> &[(f64, f64)] {
            &[(f64::MIN, f64::MAX); 3]
        }
        fn derivative(&self, _t: f64, _y: &[f64], _h: Option<&DelayBuffer>, out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    struct Broken;

    impl OdeSystem for Broken {
        fn dimension(&self) -> usize {
            2
        }
        fn bounds(&self) -> &[(f64, f64)] {
            &[(f64::MIN, f64::MAX); 2]
        }
        fn derivative(&self, _t: f64, _y: &[f64], _h: Option<&DelayBuffer>, out: &mut [f64]) {
            out[0] = 0.0;
            out[1] = f64::NAN;
        }
    }

    fn decay() -> Decay {
        Decay {
            rate: 1.0,
            bounds: vec![(0.0, f64::MAX)],
        }
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let y = rk4_step(&decay(), 0.0, &[1.0], 1.0, 100, None).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn zero_derivative_leaves_state() {
        let y = rk4_step(&Still, 0.0, &[1.0, -2.0, 3.5], 0.7, 5, None).unwrap();
        assert_eq!(y, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn non_finite_derivative_reports_component() {
        let err = rk4_step(&Broken, 0.0, &[0.0, 0.0], 1.0, 1, None).unwrap_err();
        assert_eq!(err, OdeError::NonFinite { component: 1, time: 0.0 });
    }

    #[test]
    fn fourth_order_convergence() {
        let exact = (-2.0f64).exp();
        let err = |substeps| (rk4_step(&decay(), 0.0, &[1.0], 2.0, substeps, None).unwrap()[0] - exact).abs();
        let ratio = err(4) / err(8);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn projection_floors_at_range_minimum() {
        struct Drain;
        impl OdeSystem for Drain {
            fn dimension(&self) -> usize {
                1
            }
            fn bounds(&self) -> &[(f64, f64)] {
                &[(0.0, 2.0)]
            }
            fn derivative(&self, _t: f64, _y: &[f64], _h: Option<&DelayBuffer>, out: &mut [f64]) {
                out[0] = -10.0;
            }
        }
        let y = rk4_step(&Drain, 0.0, &[0.5], 1.0, 4, None).unwrap();
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn invalid_requests() {
        assert!(rk4_step(&decay(), 0.0, &[1.0], 0.0, 1, None).is_err());
        assert!(rk4_step(&decay(), 0.0, &[1.0], 1.0, 0, None).is_err());
        assert!(rk4_step(&decay(), 0.0, &[1.0, 2.0], 1.0, 1, None).is_err());
    }

    #[test]
    fn delay_prehistory_is_fill() {
        let buf = DelayBuffer::new(10.0, 0.1, vec![4.0]);
        assert_eq!(buf.lookup(0.0), &[4.0]);
    }

    #[test]
    fn delay_constant_history() {
        let mut buf = DelayBuffer::new(1.0, 0.1, vec![2.0]);
        for i in 0..100 {
            buf.record(i as f64 * 0.1, &[2.0]);
        }
        for t in [0.0, 1.0, 3.3, 9.9] {
            assert_eq!(buf.lookup(t), &[2.0]);
        }
    }

    #[test]
    fn delay_linear_history_within_one_substep() {
        let h = 1.0 / 24.0;
        let tau = 10.0;
        let mut buf = DelayBuffer::new(tau, h, vec![0.0]);
        for i in 0..=(40 * 24) {
            let t = i as f64 * h;
            buf.record(t, &[t]);
            // Query at an off-grid time between records.
            let q = t + 0.37 * h;
            if q >= tau {
                let got = buf.lookup(q)[0];
                assert!((got - (q - tau)).abs() <= h, "t={q} got={got}");
            }
        }
    }
}
