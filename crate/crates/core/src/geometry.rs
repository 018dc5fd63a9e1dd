//! Radially symmetric model manifolds: sphere area `σ(R)`, ball volume
//! `V(R)`, the isoperimetric function `g(v)` and `ω(v) = v^{(N-1)/N}/g(v)`.

use std::sync::Arc;

use crate::audit::{quasi_monotonicity_constant, AssumptionCheck, AssumptionReport, Bound, SampleRange};
use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::numerics::{cumulative_from_origin, unit_ball_volume, MonotoneCubic};
use crate::table::parse_two_column;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Euclidean,
    Tabulated,
}

/// Isoperimetric function of a tabulated profile.
#[derive(Clone)]
pub enum IsoFunction {
    /// Balls are taken as the optimal sets: `g(V(R)) = σ(R)`.
    Balls,
    /// `g(v) = coef · v^exponent`.
    Power {
        coef: f64,
        exponent: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for IsoFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IsoFunction::Balls => write!(f, "Balls"),
            IsoFunction::Power { coef, exponent } => write!(f, "Power({coef}, {exponent})"),
            IsoFunction::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
struct Tabulated {
    sigma: MonotoneCubic,
    /// `V` at every knot.
    knot_volume: Vec<f64>,
    iso: IsoFunction,
}

#[derive(Debug, Clone)]
enum Repr {
    Euclidean { ball: f64 },
    Tabulated(Arc<Tabulated>),
}

/// Immutable radial geometry description.
#[derive(Debug, Clone)]
pub struct ManifoldProfile {
    dim: usize,
    repr: Repr,
}

impl ManifoldProfile {
    pub fn euclidean(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { dim, repr: Repr::Euclidean { ball: unit_ball_volume(dim) } }
    }

    /// Builds a profile from sampled sphere areas.
    ///
    /// Below the first sample radius the area is continued as
    /// `σ(r₀)(r/r₀)^{N-1}`.
    pub fn tabulated(dim: usize, radii: Vec<f64>, areas: Vec<f64>, iso: IsoFunction) -> Result<Self> {
        if radii.len() < 4 || radii.len() != areas.len() {
            return Err(Error::Domain("tabulated profile needs at least four samples".into()));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("radii must be nonnegative and strictly increasing".into()));
        }
        if areas.iter().any(|&a| !(a >= 0.0)) || areas.iter().skip(1).any(|&a| a == 0.0) {
            return Err(Error::Domain("sphere areas must be positive away from the origin".into()));
        }
        let (radii, areas) = if radii[0] == 0.0 { (radii[1..].to_vec(), areas[1..].to_vec()) } else { (radii, areas) };
        let sigma = MonotoneCubic::new(radii, areas);
        let (xs, ys) = sigma.knots();
        let head = if xs[0] > 0.0 { xs[0] * ys[0] / dim as f64 } else { 0.0 };
        let mut knot_volume = Vec::with_capacity(xs.len());
        let mut acc = head;
        knot_volume.push(acc);
        for i in 0..xs.len() - 1 {
            acc += sigma.segment_integral(i);
            knot_volume.push(acc);
        }
        if knot_volume.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("volume must be strictly increasing".into()));
        }
        Ok(Self { dim, repr: Repr::Tabulated(Arc::new(Tabulated { sigma, knot_volume, iso })) })
    }

    /// Loads a `r,sigma` CSV table.
    pub fn from_csv(dim: usize, text: &str, iso: IsoFunction) -> Result<Self> {
        let (r, s) = parse_two_column(text, "r,sigma")?;
        Self::tabulated(dim, r, s, iso)
    }

    pub fn kind(&self) -> ProfileKind {
        match self.repr {
            Repr::Euclidean { .. } => ProfileKind::Euclidean,
            Repr::Tabulated(_) => ProfileKind::Tabulated,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest radius at which the profile is defined.
    pub fn r_limit(&self) -> f64 {
        match &self.repr {
            Repr::Euclidean { .. } => f64::INFINITY,
            Repr::Tabulated(t) => t.sigma.x_max(),
        }
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("negative radius {r}")));
        }
        if r > self.r_limit() * (1.0 + 1e-12) {
            return Err(Error::Range(format!("radius {r} beyond tabulated range {}", self.r_limit())));
        }
        Ok(())
    }

    /// Sphere area `σ(R)`.
    pub fn area(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(match &self.repr {
            Repr::Euclidean { ball } => self.dim as f64 * ball * r.powi(self.dim as i32 - 1),
            Repr::Tabulated(t) => {
                let r0 = t.sigma.x_min();
                if r < r0 {
                    let (_, ys) = t.sigma.knots();
                    ys[0] * (r / r0).powi(self.dim as i32 - 1)
                } else {
                    t.sigma.eval(r.min(t.sigma.x_max()))
                }
            }
        })
    }

    /// Ball volume `V(R)`.
    pub fn volume(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(match &self.repr {
            Repr::Euclidean { ball } => ball * r.powi(self.dim as i32),
            Repr::Tabulated(t) => {
                let (xs, _) = t.sigma.knots();
                let r0 = xs[0];
                if r < r0 {
                    t.knot_volume[0] * (r / r0).powi(self.dim as i32)
                } else {
                    let r = r.min(t.sigma.x_max());
                    let i = match xs.binary_search_by(|v| v.partial_cmp(&r).unwrap()) {
                        Ok(i) => return Ok(t.knot_volume[i]),
                        Err(i) => i - 1,
                    };
                    t.knot_volume[i] + t.sigma.integral(xs[i], r)
                }
            }
        })
    }

    /// Largest volume representable by the profile.
    pub fn volume_limit(&self) -> f64 {
        match &self.repr {
            Repr::Euclidean { .. } => f64::INFINITY,
            Repr::Tabulated(t) => *t.knot_volume.last().unwrap(),
        }
    }

    /// `V^{-1}(v)`.
    pub fn inverse_volume(&self, v: f64) -> Result<f64> {
        if !(v >= 0.0) {
            return Err(Error::Domain(format!("negative volume {v}")));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        match &self.repr {
            Repr::Euclidean { ball } => Ok((v / ball).powf(1.0 / self.dim as f64)),
            Repr::Tabulated(t) => {
                let vmax = *t.knot_volume.last().unwrap();
                if v > vmax * (1.0 + 1e-12) {
                    return Err(Error::Range(format!("volume {v} exceeds tabulated V(R_max) = {vmax}")));
                }
                let (xs, _) = t.sigma.knots();
                if v <= t.knot_volume[0] {
                    return Ok(xs[0] * (v / t.knot_volume[0]).powf(1.0 / self.dim as f64));
                }
                let i = match t.knot_volume.binary_search_by(|w| w.partial_cmp(&v).unwrap()) {
                    Ok(i) => return Ok(xs[i]),
                    Err(i) => (i - 1).min(xs.len() - 2),
                };
                // safeguarded Newton inside the knot segment
                let (mut lo, mut hi) = (xs[i], xs[i + 1]);
                let mut r = 0.5 * (lo + hi);
                for _ in 0..200 {
                    let f = self.volume(r)? - v;
                    if f.abs() <= 1e-14 * v {
                        break;
                    }
                    if f > 0.0 {
                        hi = r;
                    } else {
                        lo = r;
                    }
                    let d = self.area(r)?;
                    let newton = r - f / d;
                    r = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                Ok(r)
            }
        }
    }

    /// Isoperimetric function `g(v)`.
    pub fn iso_g(&self, v: f64) -> Result<f64> {
        if !(v > 0.0) {
            return Err(Error::Domain(format!("g needs v > 0, got {v}")));
        }
        let n = self.dim as f64;
        match &self.repr {
            Repr::Euclidean { ball } => Ok(n * ball.powf(1.0 / n) * v.powf((n - 1.0) / n)),
            Repr::Tabulated(t) => match &t.iso {
                IsoFunction::Balls => self.area(self.inverse_volume(v)?),
                IsoFunction::Power { coef, exponent } => Ok(coef * v.powf(*exponent)),
                IsoFunction::Custom(g) => Ok(g(v)),
            },
        }
    }

    /// `ω(v) = v^{(N-1)/N} / g(v)`.
    pub fn omega(&self, v: f64) -> Result<f64> {
        if !(v > 0.0) {
            return Err(Error::Domain(format!("omega needs v > 0, got {v}")));
        }
        let n = self.dim as f64;
        match &self.repr {
            Repr::Euclidean { ball } => Ok(1.0 / (n * ball.powf(1.0 / n))),
            Repr::Tabulated(_) => Ok(v.powf((n - 1.0) / n) / self.iso_g(v)?),
        }
    }
}

/// Pass thresholds for [`verify_geometry_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryCaps {
    /// upper cap on `C` in `V(2R) ≤ C V(R)`
    pub doubling: f64,
    /// lower cap on `c` in `g(V(R)) ≥ c V(R)/R`
    pub iso_volume: f64,
    /// upper cap on the Hardy-volume constant
    pub hardy_volume: f64,
    /// slack allowed in the monotonicity and scaling checks on ω
    pub omega_slack: f64,
}

impl Default for GeometryCaps {
    fn default() -> Self {
        Self { doubling: 1e3, iso_volume: 1e-3, hardy_volume: 1e3, omega_slack: 1e-9 }
    }
}

impl GeometryCaps {
    /// Slack on ω absorbing interpolation ripple of tabulated areas.
    pub const TABULATED_OMEGA_SLACK: f64 = 0.02;

    pub fn for_profile(profile: &ManifoldProfile) -> Self {
        match profile.kind() {
            ProfileKind::Euclidean => Self::default(),
            ProfileKind::Tabulated => Self { omega_slack: Self::TABULATED_OMEGA_SLACK, ..Self::default() },
        }
    }
}

/// Audits doubling, iso-volume compatibility, the Hardy-volume condition and
/// the monotonicity of `ω` on a logarithmic grid ending at `r_max`.
pub fn verify_geometry_assumptions(
    profile: &ManifoldProfile,
    exps: &Exponents,
    r_max: f64,
) -> Result<AssumptionReport> {
    verify_geometry_on(profile, exps, SampleRange::ending_at(r_max), GeometryCaps::for_profile(profile))
}

pub fn verify_geometry_on(
    profile: &ManifoldProfile,
    exps: &Exponents,
    range: SampleRange,
    caps: GeometryCaps,
) -> Result<AssumptionReport> {
    if !(range.r_max > 0.0) {
        return Err(Error::Domain("R_max must be positive".into()));
    }
    if range.r_max > profile.r_limit() * (1.0 + 1e-12) {
        return Err(Error::Range(format!(
            "profile defined up to {} but the audit needs {}",
            profile.r_limit(),
            range.r_max
        )));
    }
    let grid = range.grid();
    let n = profile.dim() as f64;
    let p = exps.p();
    let mut report = AssumptionReport::default();

    // doubling, sampled where 2R stays inside the range
    let half: Vec<f64> = grid.iter().copied().filter(|&r| 2.0 * r <= range.r_max * (1.0 + 1e-12)).collect();
    let mut doubling: f64 = 0.0;
    for &r in &half {
        doubling = doubling.max(profile.volume(2.0 * r)? / profile.volume(r)?);
    }
    let half_hi = half.last().copied().unwrap_or(range.r_min);
    report.checks.push(AssumptionCheck::new(
        "doubling",
        doubling,
        caps.doubling,
        Bound::Upper,
        (range.r_min, half_hi),
        half.len(),
    ));

    let mut volumes = Vec::with_capacity(grid.len());
    let mut iso_c = f64::INFINITY;
    for &r in &grid {
        let v = profile.volume(r)?;
        iso_c = iso_c.min(profile.iso_g(v)? * r / v);
        volumes.push(v);
    }
    report.checks.push(AssumptionCheck::new(
        "iso_volume",
        iso_c,
        caps.iso_volume,
        Bound::Lower,
        (range.r_min, range.r_max),
        grid.len(),
    ));

    // ∫₀^s dτ / V^{-1}(τ)^p, substituted τ = V(r)
    let hardy = cumulative_from_origin(|r| profile.area(r).unwrap_or(f64::NAN) / r.powf(p), &grid);
    let hardy_c = match hardy {
        Some(cum) => grid.iter().zip(&cum).zip(&volumes).map(|((&r, &i), &v)| i * r.powf(p) / v).fold(0.0, f64::max),
        None => f64::INFINITY,
    };
    report.checks.push(AssumptionCheck::new(
        "hardy_volume",
        hardy_c,
        caps.hardy_volume,
        Bound::Upper,
        (range.r_min, range.r_max),
        grid.len(),
    ));

    let omegas: Vec<f64> = volumes.iter().map(|&v| profile.omega(v)).collect::<Result<_>>()?;
    // nondecreasing: largest ω(v_i)/ω(v_j) over v_i < v_j
    let mono = quasi_monotonicity_constant(&omegas);
    report.checks.push(AssumptionCheck::new(
        "omega_monotone",
        mono,
        1.0 + caps.omega_slack,
        Bound::Upper,
        (range.r_min, range.r_max),
        grid.len(),
    ));

    let mut scaling: f64 = 0.0;
    for &gamma in &[2.0f64, 4.0, 8.0] {
        let lim = profile.volume_limit();
        for (&v, &w) in volumes.iter().zip(&omegas) {
            if gamma * v > lim {
                break;
            }
            scaling = scaling.max(profile.omega(gamma * v)? / (gamma.powf((n - 1.0) / n) * w));
        }
    }
    report.checks.push(AssumptionCheck::new(
        "omega_scaling",
        scaling,
        1.0 + caps.omega_slack,
        Bound::Upper,
        (range.r_min, range.r_max),
        grid.len(),
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn quadratic_table(n: usize, r_max: f64) -> ManifoldProfile {
        let r: Vec<f64> = (0..=n).map(|i| r_max * i as f64 / n as f64).collect();
        let s: Vec<f64> = r.iter().map(|r| 4.0 * PI * r * r).collect();
        ManifoldProfile::tabulated(3, r, s, IsoFunction::Balls).unwrap()
    }

    #[test]
    fn euclidean_volume() {
        let g = ManifoldProfile::euclidean(3);
        assert_relative_eq!(g.volume(1.0).unwrap(), 4.0 * PI / 3.0, max_relative = 1e-15);
        assert_eq!(g.volume(0.0).unwrap(), 0.0);
        assert!(matches!(g.volume(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn tabulated_volume_matches_closed_form() {
        let g = quadratic_table(2000, 4.0);
        assert_relative_eq!(g.volume(2.0).unwrap(), 32.0 * PI / 3.0, max_relative = 1e-10);
        assert!(matches!(g.volume(5.0), Err(Error::Range(_))));
        assert!(matches!(g.inverse_volume(1e6), Err(Error::Range(_))));
    }

    #[test]
    fn inverse_volume_examples() {
        let g3 = ManifoldProfile::euclidean(3);
        assert_relative_eq!(g3.inverse_volume(4.0 * PI / 3.0).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(g3.inverse_volume(0.0).unwrap(), 0.0);
        let g2 = ManifoldProfile::euclidean(2);
        assert_relative_eq!(g2.inverse_volume(4.0 * PI).unwrap(), 2.0, max_relative = 1e-15);
        let t = quadratic_table(500, 4.0);
        for &r in &[0.003, 0.5, 1.7, 3.99] {
            assert_relative_eq!(t.inverse_volume(t.volume(r).unwrap()).unwrap(), r, max_relative = 1e-10);
        }
    }

    #[test]
    fn omega_examples() {
        let g = ManifoldProfile::euclidean(3);
        let expected = 1.0 / (3.0 * (4.0 * PI / 3.0f64).powf(1.0 / 3.0));
        assert_relative_eq!(expected, 0.20678, epsilon = 1e-5);
        assert_relative_eq!(g.omega(1.0).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(g.omega(100.0).unwrap(), expected, max_relative = 1e-14);
        assert!(g.omega(0.0).is_err());

        let r: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let s: Vec<f64> = r.iter().map(|r| 4.0 * PI * r * r).collect();
        let t = ManifoldProfile::tabulated(3, r, s, IsoFunction::Power { coef: 1.0, exponent: 2.0 / 3.0 }).unwrap();
        for &v in &[0.1, 1.0, 30.0] {
            assert_relative_eq!(t.omega(v).unwrap(), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn tabulated_balls_reproduce_euclidean_iso() {
        let t = quadratic_table(2000, 4.0);
        let e = ManifoldProfile::euclidean(3);
        for &v in &[0.5, 10.0, 200.0] {
            assert_relative_eq!(t.iso_g(v).unwrap(), e.iso_g(v).unwrap(), max_relative = 1e-8);
        }
    }

    #[test]
    fn euclidean_assumption_constants() {
        let g = ManifoldProfile::euclidean(3);
        let e = Exponents::new(3, 2.0, 2.0).unwrap();
        let rep = verify_geometry_assumptions(&g, &e, 100.0).unwrap();
        assert!(rep.all_passed(), "{rep:?}");
        assert_relative_eq!(rep.get("doubling").unwrap().constant, 8.0, max_relative = 1e-9);
        assert_relative_eq!(rep.get("iso_volume").unwrap().constant, 3.0, max_relative = 1e-12);
        assert_relative_eq!(rep.get("hardy_volume").unwrap().constant, 3.0, max_relative = 1e-6);
    }

    #[test]
    fn audit_range_error_for_short_table() {
        let t = quadratic_table(100, 4.0);
        let e = Exponents::new(3, 2.0, 2.0).unwrap();
        assert!(matches!(verify_geometry_assumptions(&t, &e, 10.0), Err(Error::Range(_))));
        let rep = verify_geometry_assumptions(&t, &e, 4.0).unwrap();
        assert!(rep.all_passed(), "{rep:?}");
    }

    #[test]
    fn exponential_growth_fails_doubling() {
        // hyperbolic-like sphere areas
        let r: Vec<f64> = (0..=400).map(|i| i as f64 * 0.1).collect();
        let s: Vec<f64> = r.iter().map(|r| 4.0 * PI * r.sinh().powi(2)).collect();
        let t = ManifoldProfile::tabulated(3, r, s, IsoFunction::Balls).unwrap();
        let e = Exponents::new(3, 2.0, 2.0).unwrap();
        let rep = verify_geometry_assumptions(&t, &e, 40.0).unwrap();
        assert!(!rep.get("doubling").unwrap().passed);
    }
}
