use serde::Serialize;

use crate::numerics::log_grid;

/// Direction in which an empirical constant is compared to its cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bound {
    /// constant ≤ cap passes
    Upper,
    /// constant ≥ cap passes
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: String,
    /// Extremal empirical constant over the sample grid.
    pub constant: f64,
    pub cap: f64,
    pub bound: Bound,
    pub passed: bool,
    /// Radii actually sampled.
    pub range: (f64, f64),
    pub samples: usize,
}

impl AssumptionCheck {
    pub fn new(name: &str, constant: f64, cap: f64, bound: Bound, range: (f64, f64), samples: usize) -> Self {
        let passed = constant.is_finite()
            && match bound {
                Bound::Upper => constant <= cap,
                Bound::Lower => constant >= cap,
            };
        Self { name: name.to_string(), constant, cap, bound, passed, range, samples }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn extend(&mut self, other: AssumptionReport) {
        self.checks.extend(other.checks);
    }
}

/// Logarithmic radius window used by the audits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRange {
    pub r_min: f64,
    pub r_max: f64,
    pub per_decade: usize,
}

impl SampleRange {
    pub const DEFAULT_PER_DECADE: usize = 256;
    pub const DEFAULT_DECADES: f64 = 6.0;

    /// Six decades ending at `r_max`, 256 points per decade.
    pub fn ending_at(r_max: f64) -> Self {
        Self { r_min: r_max * 10f64.powf(-Self::DEFAULT_DECADES), r_max, per_decade: Self::DEFAULT_PER_DECADE }
    }

    pub fn grid(&self) -> Vec<f64> {
        log_grid(self.r_min, self.r_max, self.per_decade)
    }
}

/// `max_{i<j} values[i] / values[j]`, the smallest `C` with
/// `f(s) ≤ C f(t)` for all sampled `s < t`.
pub fn quasi_monotonicity_constant(values: &[f64]) -> f64 {
    let mut running = f64::NEG_INFINITY;
    let mut worst: f64 = 1.0;
    for &v in values {
        if running > 0.0 {
            worst = worst.max(running / v);
        }
        running = running.max(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quasi_monotone_constant() {
        assert_eq!(quasi_monotonicity_constant(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(quasi_monotonicity_constant(&[1.0, 4.0, 2.0, 3.0]), 2.0);
    }

    #[test]
    fn checks_compare_in_direction() {
        assert!(AssumptionCheck::new("a", 3.0, 4.0, Bound::Upper, (1.0, 2.0), 2).passed);
        assert!(!AssumptionCheck::new("a", 3.0, 4.0, Bound::Lower, (1.0, 2.0), 2).passed);
        assert!(!AssumptionCheck::new("a", f64::INFINITY, 4.0, Bound::Upper, (1.0, 2.0), 2).passed);
    }
}
