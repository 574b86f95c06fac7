/// Linear decay from `start` to `end` over `horizon` steps, then flat.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
    pub test: f64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, horizon: u64, test: f64) -> Self {
        Self {
            start,
            end,
            horizon,
            test,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.horizon {
            return self.end;
        }
        let frac = step as f64 / self.horizon as f64;
        self.start + (self.end - self.start) * frac
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self::new(1.0, 0.005, 10_000, 0.005)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_monotone() {
        let s = EpsilonSchedule::new(1.0, 0.005, 100, 0.005);
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(100), 0.005);
        assert_eq!(s.value(10_000), 0.005);
        let mut prev = f64::INFINITY;
        for step in 0..150 {
            let e = s.value(step);
            assert!(e <= prev);
            prev = e;
        }
    }
}
