//! Closed-form regime predictions: the critical exponent `α*`, the
//! propagation function and its root `Z₀(t)`, predicted decay and growth
//! exponents, and a classifier that evaluates the hypotheses of the
//! subcritical, universal-bound and interface blow-up results on a
//! logarithmic radius grid.

use serde::Serialize;

use crate::audit::{quasi_monotonicity_constant, SampleRange};
use crate::density::{DensityKind, DensityProfile};
use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::geometry::ManifoldProfile;
use crate::numerics::{log_grid, tail_slope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Subcritical,
    SupercriticalDecay,
    InterfaceBlowUp,
    Boundary,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub alpha_star: f64,
    pub regime: Regime,
    /// Predicted `‖u(t)‖_∞ ~ t^{-sup_decay_exp}`; `None` where not applicable.
    pub sup_decay_exp: Option<f64>,
    /// Predicted `Z(t) ~ t^{interface_exp}`; `None` where not applicable.
    pub interface_exp: Option<f64>,
    /// `1/(p+m-3)`.
    pub universal_exp: f64,
    pub theta_used: Option<f64>,
    pub notes: String,
}

/// `(N(p+m-3) + p) / (p+m-2)`.
pub fn alpha_star(exps: &Exponents) -> f64 {
    alpha_star_theta(exps, 0.0)
}

/// Threshold above which the first blow-up integral converges for a
/// power-law density, `(N(p+m+θ-3) + p)/(p+m+θ-2)`.
pub fn alpha_star_theta(exps: &Exponents, theta: f64) -> f64 {
    let q = exps.degeneracy() + theta;
    (exps.nf() * q + exps.p()) / (q + 1.0)
}

/// `R^p ρ(R)^{p+m-2} V(R)^{p+m-3}`.
pub fn propagation_value(geom: &ManifoldProfile, dens: &DensityProfile, exps: &Exponents, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("negative radius {r}")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let q = exps.degeneracy();
    Ok(r.powf(exps.p()) * dens.rho(r).powf(q + 1.0) * geom.volume(r)?.powf(q))
}

/// Search window for [`z0`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Bracket {
    fn default() -> Self {
        Self { lo: 1e-12, hi: 1e15 }
    }
}

/// Radius `Z₀(t)` solving `F(R) = γ t M^{p+m-3}` with `F` the propagation
/// function.
pub fn z0(
    geom: &ManifoldProfile,
    dens: &DensityProfile,
    exps: &Exponents,
    t: f64,
    mass: f64,
    gamma: f64,
) -> Result<f64> {
    z0_in(geom, dens, exps, t, mass, gamma, Bracket::default())
}

pub fn z0_in(
    geom: &ManifoldProfile,
    dens: &DensityProfile,
    exps: &Exponents,
    t: f64,
    mass: f64,
    gamma: f64,
    bracket: Bracket,
) -> Result<f64> {
    if !(t > 0.0 && mass > 0.0 && gamma > 0.0) {
        return Err(Error::Domain("z0 needs t, mass and gamma positive".into()));
    }
    let target = gamma * t * mass.powf(exps.degeneracy());
    let hi_limit = bracket.hi.min(geom.r_limit());
    let f = |r: f64| propagation_value(geom, dens, exps, r);

    // walk the bracket on a log grid, checking monotonicity up to the root
    let grid = log_grid(bracket.lo, hi_limit, 64);
    let mut prev = f(grid[0])?;
    if prev >= target {
        return Err(Error::Range(format!("root below the bracket start {}", bracket.lo)));
    }
    let mut cell = None;
    for w in grid.windows(2) {
        let v = f(w[1])?;
        if !(v > prev) {
            return Err(Error::Regime(format!("propagation function is not increasing near R = {:.6e}", w[1])));
        }
        if v >= target {
            cell = Some((w[0], w[1]));
            break;
        }
        prev = v;
    }
    let (mut lo, mut hi) = cell.ok_or_else(|| Error::Range(format!("root beyond the bracket end {hi_limit}")))?;
    // bisection in log R
    while hi / lo - 1.0 > 1e-14 {
        let mid = (lo * hi).sqrt();
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationCurve {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub gamma_used: f64,
}

pub fn propagation_curve(
    geom: &ManifoldProfile,
    dens: &DensityProfile,
    exps: &Exponents,
    times: &[f64],
    mass: f64,
    gamma: f64,
) -> Result<PropagationCurve> {
    let radii = times.iter().map(|&t| z0(geom, dens, exps, t, mass, gamma)).collect::<Result<Vec<_>>>()?;
    Ok(PropagationCurve { times: times.to_vec(), radii, gamma_used: gamma })
}

/// Power-law predictions for `ρ = (1+r)^{-α}` in Euclidean space.
///
/// The subcritical exponents are filled in for `α < α*`; above the critical
/// exponent they are not applicable.
pub fn predicted_exponents(exps: &Exponents, alpha: f64) -> Result<RegimeReport> {
    let n = exps.nf();
    let p = exps.p();
    if !(alpha >= 0.0 && alpha <= n) {
        return Err(Error::Domain(format!("alpha must lie in [0, N], got {alpha}")));
    }
    let q = exps.degeneracy();
    let a_star = alpha_star(exps);
    let denom = (n - alpha) * q + p - alpha;
    let (sup, interface) = if alpha < a_star { (Some((n - alpha) / denom), Some(1.0 / denom)) } else { (None, None) };
    let regime = if alpha <= p {
        Regime::Subcritical
    } else if alpha < a_star {
        Regime::SupercriticalDecay
    } else if alpha == a_star {
        Regime::Boundary
    } else {
        Regime::InterfaceBlowUp
    };
    let notes = match regime {
        Regime::SupercriticalDecay => "sup law proved only for alpha < p; universal bound applies".to_string(),
        Regime::Boundary => "critical case alpha = alpha*: no estimate available".to_string(),
        _ => String::new(),
    };
    Ok(RegimeReport {
        alpha_star: a_star,
        regime,
        sup_decay_exp: sup,
        interface_exp: interface,
        universal_exp: 1.0 / q,
        theta_used: None,
        notes,
    })
}

/// `(Z^p ρ(Z) / t)^{1/(p+m-3)}`, the sup bound implied by a support radius `Z`
/// at time `t`.
pub fn sup_bound_from_support(dens: &DensityProfile, exps: &Exponents, z: f64, t: f64) -> f64 {
    (z.powf(exps.p()) * dens.rho(z) / t).powf(1.0 / exps.degeneracy())
}

/// Outcome of the tail-exponent test for `∫^∞ h(r) dr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finiteness {
    Finite,
    Infinite,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    /// Outer end of the tail analysis (capped by tabulated data).
    pub r_max: f64,
    pub per_decade: usize,
    /// Margin on fitted tail exponents.
    pub margin: f64,
    /// Cap on the quasi-monotonicity constant of `ψ`.
    pub quasi_cap: f64,
    /// Largest log-space rms residual accepted for a tail power-law fit.
    pub max_rms: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { r_max: 1e6, per_decade: 256, margin: 0.05, quasi_cap: 2.0, max_rms: 0.02 }
    }
}

/// Decides integrability at infinity from the fitted tail exponent `e` of the
/// integrand: finite below `-1 - margin`, infinite above `-1 + margin`.
pub fn finiteness_from_exponent(e: f64, margin: f64) -> Finiteness {
    if e < -1.0 - margin {
        Finiteness::Finite
    } else if e > -1.0 + margin {
        Finiteness::Infinite
    } else {
        Finiteness::Inconclusive
    }
}

/// θ candidates of the blow-up search: `2^{-k}`, `k = 0..=20`.
pub fn theta_candidates() -> impl Iterator<Item = f64> {
    (0..=20).map(|k| 0.5f64.powi(k))
}

struct Tail<'a> {
    grid: Vec<f64>,
    opts: &'a ClassifyOptions,
}

impl Tail<'_> {
    fn slope(&self, what: &str, f: impl Fn(f64) -> f64) -> Result<f64> {
        let values: Vec<f64> = self.grid.iter().map(|&r| f(r)).collect();
        let (s, rms) = tail_slope(&self.grid, &values)
            .ok_or_else(|| Error::Inconclusive(format!("tail of {what} has too few positive samples")))?;
        if !(rms <= self.opts.max_rms) {
            return Err(Error::Inconclusive(format!("tail of {what} is not a power law (rms residual {rms:.4})")));
        }
        Ok(s)
    }
}

/// Classifies `(geometry, density, exponents)` into the regimes of the
/// theory by checking each hypothesis numerically.
pub fn classify_regime(geom: &ManifoldProfile, dens: &DensityProfile, exps: &Exponents) -> Result<RegimeReport> {
    classify_regime_with(geom, dens, exps, &ClassifyOptions::default())
}

pub fn classify_regime_with(
    geom: &ManifoldProfile,
    dens: &DensityProfile,
    exps: &Exponents,
    opts: &ClassifyOptions,
) -> Result<RegimeReport> {
    let r_max = opts.r_max.min(dens.r_limit()).min(geom.r_limit());
    if !(r_max > 1.0) {
        return Err(Error::Range(format!("tail analysis needs data beyond r = 1, have {r_max}")));
    }
    let range = SampleRange { r_min: r_max * 1e-9, r_max, per_decade: opts.per_decade };
    let tail = Tail { grid: range.grid(), opts };
    let grid = &tail.grid;
    let p = exps.p();
    let q = exps.degeneracy();
    let n = exps.nf();
    let a_star = alpha_star(exps);
    let margin = opts.margin;

    let rho_slope = tail.slope("rho", |r| dens.rho(r))?;
    let alpha_eff = match dens.kind() {
        DensityKind::PowerLaw { alpha } => alpha,
        DensityKind::Tabulated => (-rho_slope).clamp(0.0, n),
    };
    let f_slope = tail.slope("propagation function", |r| propagation_value(geom, dens, exps, r).unwrap_or(f64::NAN))?;
    let psi: Vec<f64> = grid.iter().map(|&s| dens.psi(exps, s)).collect();
    let psi_c = quasi_monotonicity_constant(&psi);
    let psi_slope = tail.slope("psi", |s| dens.psi(exps, s))?;
    let psi_bounded = psi_slope <= margin;

    let mut report = predicted_exponents(exps, alpha_eff)?;
    report.notes.clear();
    let mut notes = vec![format!(
        "tail: rho slope {rho_slope:.4}, propagation slope {f_slope:.4}, psi constant {psi_c:.4} on [{:.3e}, {:.3e}]",
        range.r_min, range.r_max
    )];

    let finalize = |mut report: RegimeReport, regime: Regime, theta: Option<f64>, notes: Vec<String>| {
        report.regime = regime;
        report.theta_used = theta;
        if regime != Regime::Subcritical {
            report.sup_decay_exp = None;
        }
        if matches!(regime, Regime::InterfaceBlowUp | Regime::Boundary) {
            report.interface_exp = None;
        }
        report.notes = notes.join("; ");
        report
    };

    if psi_c <= opts.quasi_cap && f_slope > margin {
        return Ok(finalize(report, Regime::Subcritical, None, notes));
    }
    if f_slope.abs() <= margin {
        notes.push("propagation function is asymptotically flat: critical case".into());
        return Ok(finalize(report, Regime::Boundary, None, notes));
    }

    // blow-up integrals, tail exponents of the integrands times σ(r)
    let mut inconclusive = false;
    for theta in theta_candidates() {
        let e_m = tail.slope("first blow-up integrand", |r| {
            r.powf(p / (q + theta))
                * dens.rho(r).powf((q + 1.0 + theta) / (q + theta))
                * geom.area(r).unwrap_or(f64::NAN)
        })?;
        let fin_m = finiteness_from_exponent(e_m, margin);
        let fin_n = if psi_bounded {
            fin_m
        } else {
            let e_n = tail.slope("second blow-up integrand", |r| {
                r.powf(p * (1.0 + theta) / q)
                    * dens.rho(r).powf((q + 1.0 + theta) / q)
                    * geom.area(r).unwrap_or(f64::NAN)
            })?;
            finiteness_from_exponent(e_n, margin)
        };
        match (fin_m, fin_n) {
            (Finiteness::Finite, Finiteness::Finite) => {
                notes.push(format!(
                    "blow-up integrals finite at theta = {theta} (first integrand tail exponent {e_m:.4}){}",
                    if psi_bounded { ", second implied by bounded psi" } else { "" }
                ));
                return Ok(finalize(report, Regime::InterfaceBlowUp, Some(theta), notes));
            }
            (Finiteness::Inconclusive, _) | (_, Finiteness::Inconclusive) => inconclusive = true,
            _ => {}
        }
    }

    // ψ_a nonincreasing on the tail for some a in (p, α*]
    let a = p + margin;
    if a <= a_star {
        let tail_lo = r_max / 10.0;
        let vals: Vec<f64> = grid.iter().filter(|&&r| r >= tail_lo).map(|&s| dens.psi_with(a, s)).collect();
        if vals.windows(2).all(|w| w[1] <= w[0]) {
            notes.push(format!("psi_a nonincreasing on the last decade for a = {a}"));
            return Ok(finalize(report, Regime::SupercriticalDecay, None, notes));
        }
    }
    notes.push(if inconclusive {
        "blow-up integrals inconclusive within the margin".to_string()
    } else {
        "no hypothesis verified".to_string()
    });
    Ok(finalize(report, Regime::Boundary, None, notes))
}
