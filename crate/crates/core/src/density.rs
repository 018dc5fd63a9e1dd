//! The radial density `ρ(r)`, the capacity function `ψ(s) = s^p ρ(s)` and
//! the audit of the density conditions used by the decay and propagation
//! estimates.

use std::sync::Arc;

use crate::audit::{quasi_monotonicity_constant, AssumptionCheck, AssumptionReport, Bound, SampleRange};
use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::geometry::ManifoldProfile;
use crate::numerics::{cumulative_from_origin, linear_fit, MonotoneCubic};
use crate::table::parse_two_column;

/// Relative increase tolerated between consecutive tabulated densities.
pub const MONOTONE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityKind {
    /// `ρ(r) = (1 + r)^{-alpha}`
    PowerLaw {
        alpha: f64,
    },
    Tabulated,
}

#[derive(Debug, Clone)]
struct TabulatedDensity {
    rho: MonotoneCubic,
    alpha_est: f64,
}

#[derive(Debug, Clone)]
pub struct DensityProfile {
    kind: DensityKind,
    table: Option<Arc<TabulatedDensity>>,
}

impl DensityProfile {
    pub fn power_law(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("power-law density needs alpha >= 0, got {alpha}")));
        }
        Ok(Self { kind: DensityKind::PowerLaw { alpha }, table: None })
    }

    pub fn constant() -> Self {
        Self { kind: DensityKind::PowerLaw { alpha: 0.0 }, table: None }
    }

    /// Sampled density; must be positive and nonincreasing. Beyond the last
    /// sample it continues as `(1+r)^{-alpha_est}`.
    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() < 4 || radii.len() != values.len() {
            return Err(Error::Domain("tabulated density needs at least four samples".into()));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("radii must be nonnegative and strictly increasing".into()));
        }
        if let Some(i) = values.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("density must be positive and finite (row {i})")));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] > w[0] * (1.0 + MONOTONE_TOLERANCE)) {
            return Err(Error::Domain(format!("density increases between r = {} and r = {}", radii[i], radii[i + 1])));
        }
        let alpha_est = last_decade_decay(&radii, &values);
        Ok(Self {
            kind: DensityKind::Tabulated,
            table: Some(Arc::new(TabulatedDensity { rho: MonotoneCubic::new(radii, values), alpha_est })),
        })
    }

    /// Loads a `r,rho` CSV table.
    pub fn from_csv(text: &str) -> Result<Self> {
        let (r, v) = parse_two_column(text, "r,rho")?;
        Self::tabulated(r, v)
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    /// Decay exponent: `alpha` for power laws, the fitted last-decade exponent
    /// for tables.
    pub fn alpha_est(&self) -> f64 {
        match self.kind {
            DensityKind::PowerLaw { alpha } => alpha,
            DensityKind::Tabulated => self.table.as_ref().unwrap().alpha_est,
        }
    }

    /// Largest radius backed by data (infinite for closed forms).
    pub fn r_limit(&self) -> f64 {
        match &self.table {
            None => f64::INFINITY,
            Some(t) => t.rho.x_max(),
        }
    }

    /// `ρ(r)`; negative radii are clamped to the origin.
    pub fn rho(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match self.kind {
            DensityKind::PowerLaw { alpha } => {
                if alpha == 0.0 {
                    1.0
                } else {
                    (1.0 + r).powf(-alpha)
                }
            }
            DensityKind::Tabulated => {
                let t = self.table.as_ref().unwrap();
                let (xs, ys) = t.rho.knots();
                if r <= xs[0] {
                    ys[0]
                } else if r >= t.rho.x_max() {
                    ys[ys.len() - 1] * ((1.0 + r) / (1.0 + t.rho.x_max())).powf(-t.alpha_est)
                } else {
                    t.rho.eval(r)
                }
            }
        }
    }

    /// `ψ(s) = s^p ρ(s)`.
    pub fn psi(&self, exps: &Exponents, s: f64) -> f64 {
        self.psi_with(exps.p(), s)
    }

    /// `ψ_a(s) = s^a ρ(s)`.
    pub fn psi_with(&self, a: f64, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            s.powf(a) * self.rho(s)
        }
    }
}

fn last_decade_decay(radii: &[f64], values: &[f64]) -> f64 {
    let r_end = *radii.last().unwrap();
    let lo = (1.0 + r_end) / 10.0 - 1.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        radii.iter().zip(values).filter(|(&r, _)| r >= lo).map(|(&r, &v)| ((1.0 + r).ln(), v.ln())).unzip();
    if xs.len() < 2 {
        return 0.0;
    }
    (-linear_fit(&xs, &ys).0).max(0.0)
}

/// Pass thresholds for [`verify_density_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityCaps {
    pub reverse_doubling: f64,
    pub divergent_mass: f64,
    pub quasi_monotone: f64,
    /// constant allowed in `ρ(cs) ≤ C c^{-α} ρ(s)` when locating the exponent
    pub subcritical_constant: f64,
}

impl Default for DensityCaps {
    fn default() -> Self {
        Self { reverse_doubling: 1e3, divergent_mass: 1e3, quasi_monotone: 2.0, subcritical_constant: 2.0 }
    }
}

/// Audits (a) reverse doubling, (b) `∫_{B_R} ρ dμ ≤ C V(R) ρ(R)`,
/// (c) quasi-monotonicity of `ψ`, and (d) the decay exponent at which
/// `ρ(cs) ≤ C c^{-α} ρ(s)` starts to hold.
pub fn verify_density_assumptions(
    profile: &DensityProfile,
    geom: &ManifoldProfile,
    exps: &Exponents,
    r_max: f64,
) -> Result<AssumptionReport> {
    verify_density_on(profile, geom, exps, SampleRange::ending_at(r_max), DensityCaps::default())
}

pub fn verify_density_on(
    profile: &DensityProfile,
    geom: &ManifoldProfile,
    exps: &Exponents,
    range: SampleRange,
    caps: DensityCaps,
) -> Result<AssumptionReport> {
    let limit = profile.r_limit().min(geom.r_limit());
    if range.r_max > limit * (1.0 + 1e-12) {
        return Err(Error::Range(format!("profiles are defined up to {limit}, audit needs {}", range.r_max)));
    }
    let grid = range.grid();
    let mut report = AssumptionReport::default();

    let half: Vec<f64> = grid.iter().copied().filter(|&r| 2.0 * r <= range.r_max * (1.0 + 1e-12)).collect();
    let rd = half.iter().map(|&r| profile.rho(r) / profile.rho(2.0 * r)).fold(1.0, f64::max);
    report.checks.push(AssumptionCheck::new(
        "reverse_doubling",
        rd,
        caps.reverse_doubling,
        Bound::Upper,
        (range.r_min, half.last().copied().unwrap_or(range.r_min)),
        half.len(),
    ));

    let weighted = cumulative_from_origin(|r| profile.rho(r) * geom.area(r).unwrap_or(f64::NAN), &grid)
        .ok_or_else(|| Error::Domain("weighted ball measure diverges at the origin".into()))?;
    let mut divergent: f64 = 0.0;
    for (&r, &mu) in grid.iter().zip(&weighted) {
        divergent = divergent.max(mu / (geom.volume(r)? * profile.rho(r)));
    }
    report.checks.push(AssumptionCheck::new(
        "divergent_mass",
        divergent,
        caps.divergent_mass,
        Bound::Upper,
        (range.r_min, range.r_max),
        grid.len(),
    ));

    let psi: Vec<f64> = grid.iter().map(|&s| profile.psi(exps, s)).collect();
    report.checks.push(AssumptionCheck::new(
        "psi_quasi_monotone",
        quasi_monotonicity_constant(&psi),
        caps.quasi_monotone,
        Bound::Upper,
        (range.r_min, range.r_max),
        grid.len(),
    ));

    let alpha_sub = subcritical_decay_exponent(profile, &grid, caps.subcritical_constant);
    report.checks.push(AssumptionCheck::new(
        "subcritical_decay",
        alpha_sub,
        exps.p(),
        Bound::Upper,
        (range.r_min, range.r_max),
        grid.len(),
    ));
    // equality with p is not admissible
    if let Some(c) = report.checks.last_mut() {
        c.passed = c.passed && alpha_sub < exps.p();
    }
    Ok(report)
}

/// Best constant in `ρ(cs) ≤ C c^{-α} ρ(s)` over sampled `cs < s`.
pub fn subcritical_constant(profile: &DensityProfile, grid: &[f64], alpha: f64) -> f64 {
    let mut best_head = f64::NEG_INFINITY;
    let mut worst: f64 = 1.0;
    for &s in grid {
        let term = profile.rho(s).ln() + alpha * s.ln();
        if best_head.is_finite() {
            worst = worst.max((best_head - term).exp());
        }
        best_head = best_head.max(term);
    }
    worst
}

/// Smallest `α` (to 1e-6) for which the sampled constant stays within `cap`.
pub fn subcritical_decay_exponent(profile: &DensityProfile, grid: &[f64], cap: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    if subcritical_constant(profile, grid, lo) <= cap {
        return 0.0;
    }
    while subcritical_constant(profile, grid, hi) > cap {
        hi *= 2.0;
        if hi > 1e6 {
            return f64::INFINITY;
        }
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if subcritical_constant(profile, grid, mid) <= cap {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn e322() -> Exponents {
        Exponents::new(3, 2.0, 2.0).unwrap()
    }

    #[test]
    fn rho_examples() {
        assert_eq!(DensityProfile::power_law(1.0).unwrap().rho(0.0), 1.0);
        assert_eq!(DensityProfile::power_law(2.0).unwrap().rho(3.0), 0.0625);
        assert_eq!(DensityProfile::power_law(0.0).unwrap().rho(123.4), 1.0);
        assert!(DensityProfile::power_law(-1.0).is_err());
    }

    #[test]
    fn psi_examples() {
        let e = e322();
        assert_eq!(DensityProfile::power_law(1.0).unwrap().psi(&e, 1.0), 0.5);
        assert_eq!(DensityProfile::power_law(1.0).unwrap().psi(&e, 0.0), 0.0);
        assert_eq!(DensityProfile::power_law(0.0).unwrap().psi(&e, 4.0), 16.0);
    }

    #[test]
    fn loader_rejects_increase() {
        let err = DensityProfile::from_csv("r,rho\n0,1\n1,0.5\n2,0.6\n3,0.1\n").unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        // within tolerance is accepted
        assert!(DensityProfile::from_csv("r,rho\n0,1\n1,0.5\n2,0.5000000000000001\n3,0.1\n").is_ok());
        assert!(DensityProfile::from_csv("r,rho\n0,1\n1,0.5\n2,0\n3,0\n").is_err());
    }

    #[test]
    fn tabulated_alpha_estimate() {
        let r: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.5).collect();
        let v: Vec<f64> = r.iter().map(|r| (1.0 + r).powf(-1.5)).collect();
        let d = DensityProfile::tabulated(r, v).unwrap();
        assert_relative_eq!(d.alpha_est(), 1.5, max_relative = 1e-9);
        assert_relative_eq!(d.rho(2000.0), 2001f64.powf(-1.5), max_relative = 1e-9);
        assert_relative_eq!(d.rho(10.25), 11.25f64.powf(-1.5), max_relative = 1e-5);
    }

    #[test]
    fn reverse_doubling_of_alpha_one() {
        let d = DensityProfile::power_law(1.0).unwrap();
        let g = ManifoldProfile::euclidean(3);
        let rep = verify_density_assumptions(&d, &g, &e322(), 1e6).unwrap();
        let c = rep.get("reverse_doubling").unwrap().constant;
        assert!(c < 2.0 && c > 2.0 - 1e-5, "{c}");
    }

    #[test]
    fn divergent_mass_constant_stabilises() {
        let d = DensityProfile::power_law(1.0).unwrap();
        let g = ManifoldProfile::euclidean(3);
        let coarse = verify_density_on(
            &d,
            &g,
            &e322(),
            SampleRange { r_min: 1e-3, r_max: 1e4, per_decade: 64 },
            DensityCaps::default(),
        )
        .unwrap();
        let fine = verify_density_on(
            &d,
            &g,
            &e322(),
            SampleRange { r_min: 1e-3, r_max: 1e4, per_decade: 256 },
            DensityCaps::default(),
        )
        .unwrap();
        let (a, b) = (coarse.get("divergent_mass").unwrap(), fine.get("divergent_mass").unwrap());
        assert!(a.passed && b.passed);
        assert_relative_eq!(a.constant, b.constant, max_relative = 1e-3);
        // ∫4πr²/(1+r) / (4π/3 R³/(1+R)) → 3/2
        assert!(b.constant < 1.5 + 1e-6 && b.constant > 1.49);
    }

    #[test]
    fn fast_decay_fails_quasi_monotonicity() {
        let d = DensityProfile::power_law(3.0).unwrap();
        let g = ManifoldProfile::euclidean(3);
        let small = verify_density_assumptions(&d, &g, &e322(), 1e2).unwrap();
        let large = verify_density_assumptions(&d, &g, &e322(), 1e5).unwrap();
        let (cs, cl) = (small.get("psi_quasi_monotone").unwrap(), large.get("psi_quasi_monotone").unwrap());
        assert!(!cs.passed && !cl.passed);
        assert!(cl.constant > 100.0 * cs.constant);
    }

    #[test]
    fn slow_decay_is_subcritical() {
        let d = DensityProfile::power_law(1.0).unwrap();
        let g = ManifoldProfile::euclidean(3);
        let rep = verify_density_assumptions(&d, &g, &e322(), 1e6).unwrap();
        assert!(rep.all_passed(), "{rep:#?}");
        assert_eq!(rep.get("psi_quasi_monotone").unwrap().constant, 1.0);
        let a = rep.get("subcritical_decay").unwrap().constant;
        assert!(a <= 1.0 + 1e-6 && a > 0.9, "{a}");
    }

    #[test]
    fn audit_range_error() {
        let r: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let v: Vec<f64> = r.iter().map(|r| 1.0 / (1.0 + r)).collect();
        let d = DensityProfile::tabulated(r, v).unwrap();
        let g = ManifoldProfile::euclidean(3);
        assert!(matches!(verify_density_assumptions(&d, &g, &e322(), 100.0), Err(Error::Range(_))));
    }
}
