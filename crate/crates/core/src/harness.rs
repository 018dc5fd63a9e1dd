//! Long-time experiments: power-law fits of solver observables compared
//! against the closed-form predictions of [`crate::regime`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::linear_fit;
use crate::regime::{classify_regime, Regime, RegimeReport};
use crate::solver::{run, InitialBump, Problem, RunRecord, Sample, SolverConfig};

pub const MIN_FIT_POINTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Least-squares slope of `log y` against `log t`.
    pub exponent: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Fits `y ~ t^exponent` to the samples with `t` inside `window`.
pub fn fit_power_law(samples: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    let inside: Vec<(f64, f64)> = samples.iter().copied().filter(|&(t, _)| t >= lo && t <= hi && t > 0.0).collect();
    if inside.iter().any(|&(_, y)| !(y > 0.0)) {
        return Err(Error::Domain("power-law fit needs positive values".into()));
    }
    if inside.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData { needed: MIN_FIT_POINTS, got: inside.len() });
    }
    let xs: Vec<f64> = inside.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = inside.iter().map(|p| p.1.ln()).collect();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    Ok(DecayFit { exponent: slope, r_squared: r2.clamp(0.0, 1.0), window, n_points: inside.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Worst of two verdicts, with `Inconclusive` dominating `Fail`.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            (Fail, _) | (_, Fail) => Fail,
            _ => Pass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute tolerance on fitted sup-norm exponents.
    pub sup_exponent: f64,
    /// Absolute tolerance on fitted interface exponents.
    pub interface_exponent: f64,
    pub min_r_squared: f64,
    /// Length of the fit window in decades of time.
    pub window_decades: f64,
    /// Cap on the late-time sup ratio between the heavy and light runs.
    pub sup_ratio: f64,
    /// Largest relative weighted-mass drift.
    pub mass_drift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sup_exponent: 0.05,
            interface_exponent: 0.05,
            min_r_squared: 0.99,
            window_decades: 2.0,
            sup_ratio: 1.25,
            mass_drift: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub experiment: String,
    pub measured: DecayFit,
    /// Predicted slope, signed like [`DecayFit::exponent`].
    pub predicted: f64,
    pub abs_error: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub notes: String,
}

/// Which observable of a run to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Sup,
    Interface,
}

fn series(samples: &[Sample], obs: Observable) -> Vec<(f64, f64)> {
    samples.iter().map(|s| (s.t, if obs == Observable::Sup { s.sup } else { s.interface })).collect()
}

/// Fits the last `window_decades` of unflagged samples and compares with
/// `predicted`. Flagged samples inside the nominal window make the verdict
/// inconclusive.
pub fn compare_record(
    name: &str,
    record: &RunRecord,
    obs: Observable,
    predicted: f64,
    tol: &Tolerances,
    exponent_tol: f64,
) -> Result<ComparisonReport> {
    let usable = record.unflagged();
    let last = usable.last().ok_or(Error::InsufficientData { needed: MIN_FIT_POINTS, got: 0 })?.t;
    let t_final = record.samples.last().map(|s| s.t).unwrap_or(last);
    let window = (last / 10f64.powf(tol.window_decades), last);
    let measured = fit_power_law(&series(usable, obs), window)?;
    let abs_error = (measured.exponent - predicted).abs();
    let mut notes = Vec::new();
    let mut verdict = if abs_error <= exponent_tol { Verdict::Pass } else { Verdict::Fail };
    if measured.r_squared < tol.min_r_squared {
        verdict = Verdict::Inconclusive;
        notes.push(format!("r² {:.5} below {}", measured.r_squared, tol.min_r_squared));
    }
    if record.is_flagged() && last < t_final {
        verdict = Verdict::Inconclusive;
        notes.push(format!("interface near the boundary from t = {last:.6e}"));
    }
    Ok(ComparisonReport {
        experiment: name.to_string(),
        measured,
        predicted,
        abs_error,
        tolerance: exponent_tol,
        verdict,
        notes: notes.join("; "),
    })
}

fn require_regime(problem: &Problem, wanted: Regime, what: &str) -> Result<RegimeReport> {
    let report = classify_regime(&problem.geometry, &problem.density, &problem.exponents)?;
    if report.regime != wanted {
        return Err(Error::Hypothesis(format!(
            "{what} needs a {wanted} configuration, classified as {}",
            report.regime
        )));
    }
    Ok(report)
}

/// Sup-norm decay against the subcritical prediction.
pub fn decay_experiment(
    problem: &Problem,
    cfg: &SolverConfig,
    tol: &Tolerances,
) -> Result<(ComparisonReport, RunRecord)> {
    let report = require_regime(problem, Regime::Subcritical, "decay experiment")?;
    let record = run(problem, cfg)?;
    let cmp = compare_decay(&record, &report, tol)?;
    Ok((cmp, record))
}

pub fn compare_decay(record: &RunRecord, report: &RegimeReport, tol: &Tolerances) -> Result<ComparisonReport> {
    let predicted = -report.sup_decay_exp.ok_or_else(|| Error::Hypothesis("no sup decay prediction".into()))?;
    compare_record("decay", record, Observable::Sup, predicted, tol, tol.sup_exponent)
}

/// Interface growth against the subcritical prediction.
pub fn propagation_experiment(
    problem: &Problem,
    cfg: &SolverConfig,
    tol: &Tolerances,
) -> Result<(ComparisonReport, RunRecord)> {
    let report = require_regime(problem, Regime::Subcritical, "propagation experiment")?;
    let record = run(problem, cfg)?;
    let cmp = compare_propagation(&record, &report, tol)?;
    Ok((cmp, record))
}

pub fn compare_propagation(record: &RunRecord, report: &RegimeReport, tol: &Tolerances) -> Result<ComparisonReport> {
    let predicted = report.interface_exp.ok_or_else(|| Error::Hypothesis("no interface prediction".into()))?;
    compare_record("propagation", record, Observable::Interface, predicted, tol, tol.interface_exponent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalBoundReport {
    pub light: ComparisonReport,
    pub heavy: ComparisonReport,
    /// Initial mass ratio of the heavy run to the light one.
    pub mass_factor: f64,
    /// `sup(heavy) / sup(light)` at the last common sample.
    pub sup_ratio: f64,
    pub verdict: Verdict,
}

/// Runs the configured bump and one with ten times its mass, fitting both sup
/// decays against `t^{-1/(p+m-3)}` and comparing their late-time sup norms.
pub fn universal_bound_experiment(
    problem: &Problem,
    cfg: &SolverConfig,
    tol: &Tolerances,
) -> Result<(UniversalBoundReport, [RunRecord; 2])> {
    let report = require_regime(problem, Regime::SupercriticalDecay, "universal bound experiment")?;
    let heavy_cfg =
        SolverConfig { initial: InitialBump { amplitude: 10.0 * cfg.initial.amplitude, ..cfg.initial }, ..*cfg };
    let mut runs = [cfg, &heavy_cfg].par_iter().map(|c| run(problem, c)).collect::<Result<Vec<_>>>()?;
    let heavy_rec = runs.pop().expect("two runs");
    let light_rec = runs.pop().expect("two runs");
    let ub = compare_universal_bound(&light_rec, &heavy_rec, &report, tol)?;
    Ok((ub, [light_rec, heavy_rec]))
}

/// Universal-bound comparison of an existing pair of runs differing only in
/// the initial amplitude.
pub fn compare_universal_bound(
    light_rec: &RunRecord,
    heavy_rec: &RunRecord,
    report: &RegimeReport,
    tol: &Tolerances,
) -> Result<UniversalBoundReport> {
    let predicted = -report.universal_exp;
    let light = compare_record("universal_bound", light_rec, Observable::Sup, predicted, tol, tol.sup_exponent)?;
    let heavy = compare_record("universal_bound_heavy", heavy_rec, Observable::Sup, predicted, tol, tol.sup_exponent)?;
    let k = light_rec.samples.len().min(heavy_rec.samples.len());
    if k == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let sup_ratio = heavy_rec.samples[k - 1].sup / light_rec.samples[k - 1].sup;
    let ratio_verdict = if sup_ratio <= tol.sup_ratio { Verdict::Pass } else { Verdict::Fail };
    let mass_factor = heavy_rec.samples[0].mass / light_rec.samples[0].mass;
    let verdict = light.verdict.and(heavy.verdict).and(ratio_verdict);
    Ok(UniversalBoundReport { light, heavy, mass_factor, sup_ratio, verdict })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassAudit {
    pub max_relative_drift: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

pub fn mass_conservation_audit(record: &RunRecord, tolerance: f64) -> Result<MassAudit> {
    let first = record.samples.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let m0 = first.mass;
    let drift = record.samples.iter().map(|s| ((s.mass - m0) / m0).abs()).fold(0.0, f64::max);
    let verdict = if record.is_flagged() {
        Verdict::Inconclusive
    } else if drift <= tolerance {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(MassAudit { max_relative_drift: drift, tolerance, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProbe {
    pub r_max: f64,
    /// First sample time with the interface near the boundary.
    pub hit_time: Option<f64>,
    pub interface_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub domains: Vec<DomainProbe>,
    /// Interface growth exponent on the largest domain, last decade before the hit.
    pub interface_exponent: f64,
    /// Subcritical interface formula evaluated outside its range of validity.
    pub formal_exponent: f64,
    pub excess: f64,
    /// Slope of the local log-log interface slope against `log t`.
    pub curvature: f64,
    pub superlinear: bool,
    /// `(t, ∫_{B_{R₀}} u ρ dμ)` on the largest domain.
    pub central_mass: Vec<(f64, f64)>,
    pub central_mass_decays: bool,
    pub label: String,
}

pub const BLOWUP_LABEL: &str =
    "consistency signature only: finite-time unboundedness of the support cannot be exhibited by a finite simulation";

/// Runs on `R_max`, `2 R_max`, ... (`doublings + 1` domains), stopping each at
/// the first boundary hit, and reports the signatures of interface blow-up.
pub fn blowup_probe(problem: &Problem, cfg: &SolverConfig, doublings: usize) -> Result<BlowupReport> {
    require_regime(problem, Regime::InterfaceBlowUp, "blow-up probe")?;
    let base = match cfg.domain {
        crate::solver::DomainSize::Fixed(r) => r,
        crate::solver::DomainSize::Auto => 10.0 * cfg.initial.radius,
    };
    let configs: Vec<SolverConfig> = (0..=doublings)
        .map(|k| SolverConfig {
            domain: crate::solver::DomainSize::Fixed(base * 2f64.powi(k as i32)),
            probe_radius: Some(cfg.initial.radius),
            stop_on_flag: true,
            ..*cfg
        })
        .collect();
    let records = configs.par_iter().map(|c| run(problem, c)).collect::<Result<Vec<_>>>()?;

    let interface_fit = |rec: &RunRecord| -> Option<f64> {
        let usable = rec.unflagged();
        let last = usable.last()?.t;
        fit_power_law(&series(usable, Observable::Interface), (last / 10.0, last)).ok().map(|f| f.exponent)
    };
    let domains: Vec<DomainProbe> = records
        .iter()
        .map(|rec| DomainProbe {
            r_max: rec.r_max,
            hit_time: rec.flagged_from.map(|k| rec.samples[k].t),
            interface_exponent: interface_fit(rec),
        })
        .collect();
    let largest = records.last().expect("at least one domain");
    let interface_exponent =
        interface_fit(largest).ok_or(Error::InsufficientData { needed: MIN_FIT_POINTS, got: 0 })?;

    let e = &problem.exponents;
    let alpha = problem.density.alpha_est();
    let denom = (e.nf() - alpha) * e.degeneracy() + e.p() - alpha;
    let formal_exponent = 1.0 / denom;

    // local slopes of log Z against log t where the interface has left the initial support
    let usable: Vec<&Sample> =
        largest.unflagged().iter().filter(|s| s.t > 0.0 && s.interface > cfg.initial.radius * 1.05).collect();
    let mut mids = Vec::new();
    let mut slopes = Vec::new();
    for w in usable.windows(2) {
        let dl = (w[1].t / w[0].t).ln();
        if dl > 0.0 && w[1].interface > w[0].interface {
            mids.push(0.5 * (w[0].t.ln() + w[1].t.ln()));
            slopes.push((w[1].interface / w[0].interface).ln() / dl);
        }
    }
    let curvature = if slopes.len() >= 3 { linear_fit(&mids, &slopes).0 } else { 0.0 };

    let central_mass: Vec<(f64, f64)> =
        largest.samples.iter().zip(&largest.central_mass).map(|(s, &m)| (s.t, m)).collect();
    let central_mass_decays = central_mass.len() >= 2
        && central_mass.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12))
        && central_mass.last().unwrap().1 < 0.5 * central_mass[0].1;
    Ok(BlowupReport {
        domains,
        interface_exponent,
        formal_exponent,
        excess: interface_exponent - formal_exponent,
        curvature,
        superlinear: curvature > 0.0,
        central_mass,
        central_mass_decays,
        label: BLOWUP_LABEL.to_string(),
    })
}

/// Runs independent jobs concurrently; results come back in input order.
pub fn sweep<J, T, F>(jobs: &[J], f: F) -> Vec<Result<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync + Send,
{
    jobs.par_iter().map(f).collect()
}
