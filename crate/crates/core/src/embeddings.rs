//! Numerical bench for the functional inequalities used by the theory:
//! rearrangement, the ω-weighted embeddings, Hardy's inequality, the
//! Euclidean weighted embeddings and the general embedding built on the
//! profile ODE `G(A(s)) = A'(s)^{p/(p-1)}`.
//!
//! Every ratio is `LHS / RHS` with any existential constant set to one, so
//! the interesting quantity is its supremum over a family of test functions.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::audit::quasi_monotonicity_constant;
use crate::density::{DensityKind, DensityProfile};
use crate::error::{Error, Result};
use crate::geometry::{ManifoldProfile, ProfileKind};
use crate::numerics::{dopri45, log_grid};
use crate::solver::RadialGrid;

pub const DEFAULT_SEED: u64 = 42;
/// Start of the integration of the profile ODE; below it the power-law
/// expansion is used.
pub const PROFILE_START: f64 = 1e-6;
const PROFILE_PER_DECADE: usize = 64;
const QUASI_CAP: f64 = 2.0;

/// Nonnegative cell values on a radial grid, vanishing in the last cell.
#[derive(Debug, Clone)]
pub struct RadialTestFunction<'g> {
    grid: &'g RadialGrid,
    values: Vec<f64>,
    support_cells: usize,
}

impl<'g> RadialTestFunction<'g> {
    pub fn new(grid: &'g RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells {
            return Err(Error::Domain(format!("expected {} values, got {}", grid.n_cells, values.len())));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(format!("test function must be finite and nonnegative (cell {i})")));
        }
        if *values.last().unwrap() != 0.0 {
            return Err(Error::Domain("support must end inside the grid".into()));
        }
        let support_cells = values.iter().filter(|&&v| v > 0.0).count();
        Ok(Self { grid, values, support_cells })
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: &'g RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.centers.iter().map(|&r| f(r)).collect())
    }

    pub fn grid(&self) -> &RadialGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support_cells(&self) -> usize {
        self.support_cells
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| lambda * v).collect())
    }

    fn is_zero(&self) -> bool {
        self.support_cells == 0
    }

    /// `∫ φ(u) dμ` by the cell midpoint rule.
    pub fn integral(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.values.iter().zip(&self.grid.cell_weights).map(|(&u, &w)| phi(u) * w).sum()
    }

    /// `∫ φ(u) w(r) dμ` by the cell midpoint rule.
    pub fn weighted_integral(&self, phi: impl Fn(f64) -> f64, weight: impl Fn(f64) -> f64) -> f64 {
        self.values
            .iter()
            .zip(&self.grid.cell_weights)
            .zip(&self.grid.centers)
            .map(|((&u, &w), &r)| if u > 0.0 { phi(u) * weight(r) * w } else { 0.0 })
            .sum()
    }

    /// `∫ |∇u|^p dμ` from center differences across the interior faces.
    pub fn gradient_norm(&self, p: f64) -> f64 {
        let g = self.grid;
        (0..g.n_cells - 1)
            .map(|i| {
                let h = g.face_spacing[i];
                ((self.values[i + 1] - self.values[i]).abs() / h).powf(p) * g.face_areas[i] * h
            })
            .sum()
    }

    /// `μ(supp u)`.
    pub fn support_measure(&self) -> f64 {
        self.integral(|u| if u > 0.0 { 1.0 } else { 0.0 })
    }
}

/// Decreasing rearrangement `u*` as a step function of the measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Rearrangement {
    /// Cumulative measure at the right end of each step.
    pub measure: Vec<f64>,
    /// Nonincreasing step values.
    pub values: Vec<f64>,
}

impl Rearrangement {
    /// `u*(s) = inf{λ : μ_λ < s}`; zero past the support.
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.values.first().copied().unwrap_or(0.0);
        }
        let k = self.measure.partition_point(|&m| m < s);
        self.values.get(k).copied().unwrap_or(0.0)
    }

    /// `∫ (u*)^q ds`.
    pub fn power_integral(&self, q: f64) -> f64 {
        let mut prev = 0.0;
        self.measure
            .iter()
            .zip(&self.values)
            .map(|(&m, &v)| {
                let piece = v.powf(q) * (m - prev);
                prev = m;
                piece
            })
            .sum()
    }
}

pub fn decreasing_rearrangement(f: &RadialTestFunction) -> Rearrangement {
    let mut cells: Vec<(f64, f64)> =
        f.values.iter().zip(&f.grid.cell_weights).filter(|(&u, _)| u > 0.0).map(|(&u, &w)| (u, w)).collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut total = 0.0;
    let (measure, values) = cells
        .into_iter()
        .map(|(u, w)| {
            total += w;
            (total, u)
        })
        .unzip();
    Rearrangement { measure, values }
}

/// `∫ u^p d^{-p} dμ / ∫ |∇u|^p dμ`, evaluating `d` at cell midpoints.
pub fn hardy_ratio(f: &RadialTestFunction, p: f64) -> Result<f64> {
    if f.is_zero() {
        return Err(Error::DegenerateInput("Hardy ratio of the zero function".into()));
    }
    let lhs = f.weighted_integral(|u| u.powf(p), |r| r.powf(-p));
    let rhs = f.gradient_norm(p);
    if !(rhs > 0.0) {
        return Err(Error::DegenerateInput("gradient vanishes".into()));
    }
    Ok(lhs / rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum EmbeddingKind {
    /// `∫u^q ≤ γ ω(E)^q E^{1+q/N-q/p} ‖∇u‖_p^q`.
    EmbOld { q: f64, r: f64 },
    /// `q = p` with `E` bounded by the support measure.
    EmbOldP { r: f64 },
    /// `∫u^p ρ ≤ γ (ψ(R) + ρ(R) ω(|supp u|)^p |supp u|^{p/N}) ∫|∇u|^p`.
    EmbOldWg { radius: f64 },
    /// Euclidean: `∫u^p ρ ≤ γ {ρ(R)^{N/p-1} μ_ρ(supp u) + ∫_{B_R ∩ supp u} ρ^{N/p}}^{p/N} ∫|∇u|^p`.
    EucWg { radius: f64 },
    /// Euclidean: `∫u^{p₁} ρ ≤ γ (∫|∇u|^p)^{p₁/p}`.
    EucSup { p1: f64 },
}

impl EmbeddingKind {
    pub fn name(&self) -> &'static str {
        match self {
            EmbeddingKind::EmbOld { .. } => "emb_old",
            EmbeddingKind::EmbOldP { .. } => "emb_old_p",
            EmbeddingKind::EmbOldWg { .. } => "emb_old_wg",
            EmbeddingKind::EucWg { .. } => "euc_wg",
            EmbeddingKind::EucSup { .. } => "euc_sup",
        }
    }

    pub fn params(&self) -> String {
        match *self {
            EmbeddingKind::EmbOld { q, r } => format!("q={q};r={r}"),
            EmbeddingKind::EmbOldP { r } => format!("r={r}"),
            EmbeddingKind::EmbOldWg { radius } | EmbeddingKind::EucWg { radius } => format!("R={radius}"),
            EmbeddingKind::EucSup { p1 } => format!("p1={p1}"),
        }
    }
}

/// Data shared by the embedding ratios.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingSetting<'a> {
    pub geometry: &'a ManifoldProfile,
    pub density: &'a DensityProfile,
    pub p: f64,
}

fn sobolev_exponent(n: f64, p: f64) -> f64 {
    if p < n {
        n * p / (n - p)
    } else {
        f64::INFINITY
    }
}

fn require_euclidean(geom: &ManifoldProfile, what: &str) -> Result<()> {
    if geom.kind() != ProfileKind::Euclidean {
        return Err(Error::Hypothesis(format!("{what} needs a Euclidean metric")));
    }
    Ok(())
}

/// `ψ(s) = s^p ρ(s)` quasi-nondecreasing.
fn require_psi_nondecreasing(dens: &DensityProfile, p: f64) -> Result<()> {
    let ok = match dens.kind() {
        DensityKind::PowerLaw { alpha } => alpha <= p,
        DensityKind::Tabulated => {
            let hi = if dens.r_limit().is_finite() { dens.r_limit() } else { 1e6 };
            let vals: Vec<f64> = log_grid(1e-3 * hi.min(1.0), hi, 64).iter().map(|&s| dens.psi_with(p, s)).collect();
            quasi_monotonicity_constant(&vals) <= QUASI_CAP
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!("s^p ρ(s) is not nondecreasing for p = {p}")))
    }
}

/// `LHS / RHS` of the chosen embedding with the constant `γ` set to one.
pub fn embedding_ratio(f: &RadialTestFunction, kind: EmbeddingKind, set: &EmbeddingSetting) -> Result<f64> {
    if f.is_zero() {
        return Err(Error::DegenerateInput("embedding ratio of the zero function".into()));
    }
    let p = set.p;
    let n = set.geometry.dim() as f64;
    if !(p > 1.0) {
        return Err(Error::Domain(format!("needs p > 1, got {p}")));
    }
    let p_star = sobolev_exponent(n, p);
    let grad = f.gradient_norm(p);
    let (lhs, rhs) = match kind {
        EmbeddingKind::EmbOld { q, r } => {
            if !(0.0 < r && r < q && q <= p_star) {
                return Err(Error::Domain(format!("needs 0 < r < q <= {p_star}, got r = {r}, q = {q}")));
            }
            let iq = f.integral(|u| u.powf(q));
            let ir = f.integral(|u| u.powf(r));
            let e = ir.powf(q / (q - r)) * iq.powf(-r / (q - r));
            let rhs = set.geometry.omega(e)?.powf(q) * e.powf(1.0 + q / n - q / p) * grad.powf(q / p);
            (iq, rhs)
        }
        EmbeddingKind::EmbOldP { r } => {
            if !(0.0 < r && r < p) {
                return Err(Error::Domain(format!("needs 0 < r < p, got r = {r}")));
            }
            let h = p / (n * (p - r));
            let d = 1.0 + r * h;
            let supp = f.support_measure();
            let ir = f.integral(|u| u.powf(r));
            let rhs = set.geometry.omega(supp)?.powf(p / d) * ir.powf(p * h / d) * grad.powf(1.0 / d);
            (f.integral(|u| u.powf(p)), rhs)
        }
        EmbeddingKind::EmbOldWg { radius } => {
            if !(radius > 0.0) {
                return Err(Error::Domain(format!("needs R > 0, got {radius}")));
            }
            require_psi_nondecreasing(set.density, p)?;
            let supp = f.support_measure();
            let coef = set.density.psi_with(p, radius)
                + set.density.rho(radius) * set.geometry.omega(supp)?.powf(p) * supp.powf(p / n);
            (f.weighted_integral(|u| u.powf(p), |r| set.density.rho(r)), coef * grad)
        }
        EmbeddingKind::EucWg { radius } => {
            if !(radius > 0.0) {
                return Err(Error::Domain(format!("needs R > 0, got {radius}")));
            }
            require_euclidean(set.geometry, "the Euclidean weighted embedding")?;
            let rho = |r: f64| set.density.rho(r);
            let mu_rho = f.weighted_integral(|_| 1.0, rho);
            let inner = f.weighted_integral(|_| 1.0, |r| if r < radius { rho(r).powf(n / p) } else { 0.0 });
            let braces = rho(radius).powf(n / p - 1.0) * mu_rho + inner;
            (f.weighted_integral(|u| u.powf(p), rho), braces.powf(p / n) * grad)
        }
        EmbeddingKind::EucSup { p1 } => {
            require_euclidean(set.geometry, "the Euclidean sup embedding")?;
            if !(p < n) {
                return Err(Error::Domain(format!("needs p < N, got p = {p}")));
            }
            if !(0.0 < p1 && p1 < p_star) {
                return Err(Error::Domain(format!("needs 0 < p1 < {p_star}, got {p1}")));
            }
            let alpha = set.density.alpha_est();
            if !(p <= alpha && alpha <= n) {
                return Err(Error::Hypothesis(format!("decay exponent {alpha} outside [p, N]")));
            }
            let tail = alpha * p_star / (p_star - p1);
            if !(tail > n) {
                return Err(Error::Hypothesis(format!(
                    "ρ^(p*/(p*-p1)) decays like r^-{tail:.6}, not integrable in dimension {n}"
                )));
            }
            (f.weighted_integral(|u| u.powf(p1), |r| set.density.rho(r)), grad.powf(p1 / p))
        }
    };
    let ratio = lhs / rhs;
    if !ratio.is_finite() {
        return Err(Error::DegenerateInput(format!("{} ratio is not finite", kind.name())));
    }
    Ok(ratio)
}

pub type GFunction = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Inverse of an increasing function on `(0, ∞)` by bisection in `log x`.
fn invert_increasing(f: &dyn Fn(f64) -> f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (-690.0f64, 690.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// `G = g^{(-1)}` for the isoperimetric function `g` of `geom`. For the
/// Euclidean profile this is the sharp `G(s) = (s / (N ω_N^{1/N}))^{N/(N-1)}`,
/// with the constant read off the unit ball.
pub fn isoperimetric_g(geom: &ManifoldProfile) -> Result<GFunction> {
    let n = geom.dim() as f64;
    match geom.kind() {
        ProfileKind::Euclidean => {
            let c = geom.area(1.0)? / geom.volume(1.0)?.powf((n - 1.0) / n);
            Ok(Arc::new(move |s: f64| if s <= 0.0 { 0.0 } else { (s / c).powf(n / (n - 1.0)) }))
        }
        ProfileKind::Tabulated => {
            let geom = geom.clone();
            let v_max = geom.volume_limit();
            Ok(Arc::new(move |s: f64| {
                if s <= 0.0 {
                    return 0.0;
                }
                let g = |v: f64| if v >= v_max { f64::INFINITY } else { geom.iso_g(v).unwrap_or(f64::NAN) };
                invert_increasing(&g, s)
            }))
        }
    }
}

/// Tabulated maximal solution of `G(A) = A'^{p/(p-1)}`, `A(0) = 0`, with the
/// derived `B(s) = G(A(s^{1/p}))` and `S(s) = G^{(-1)}(s)^p s^{1-p}`.
#[derive(Clone)]
pub struct GeneralEmbeddingProfile {
    g: GFunction,
    p: f64,
    /// Tabulation radii, starting at 0.
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub a_prime: Vec<f64>,
    /// Smallest `C` with `A' ≤ C A / s` on the tabulation grid.
    pub c_ap: f64,
    /// Exponent of the expansion `A(s) ≈ k s^e` used near the origin.
    pub start_exponent: f64,
    pub checks: ProfileChecks,
}

impl std::fmt::Debug for GeneralEmbeddingProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneralEmbeddingProfile")
            .field("p", &self.p)
            .field("points", &self.s.len())
            .field("c_ap", &self.c_ap)
            .field("checks", &self.checks)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileChecks {
    /// `A(s)/s ≤ A'(s)` at every knot.
    pub ap_lower: bool,
    /// `C^{-p} s ≤ S(B(s)) ≤ s` at every knot.
    pub sofeef: bool,
    /// Discrete convexity of `B`.
    pub b_convex: bool,
}

/// Local power `k` and coefficient `c` of `G(x) ≈ c x^k` at the origin.
fn power_at_origin(g: &dyn Fn(f64) -> f64) -> Option<(f64, f64)> {
    let (x1, x2) = (1e-12, 1e-10);
    let (g1, g2) = (g(x1), g(x2));
    if !(g1 > 0.0 && g2 > g1 && g2.is_finite()) {
        return None;
    }
    let k = (g2 / g1).ln() / (x2 / x1).ln();
    Some((k, g2 / x2.powf(k)))
}

pub fn solve_profile_ode(g: GFunction, p: f64, s_max: f64) -> Result<GeneralEmbeddingProfile> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("needs p > 1, got {p}")));
    }
    if !(s_max > PROFILE_START) {
        return Err(Error::Domain(format!("s_max must exceed {PROFILE_START}")));
    }
    let (k, c) = power_at_origin(&*g).ok_or_else(|| Error::Branch("G does not behave like a power at 0".into()))?;
    let beta = k * (p - 1.0) / p;
    if !(beta < 1.0) {
        return Err(Error::Branch(format!("G ~ s^{k:.4} at 0 admits only A ≡ 0 for p = {p}")));
    }
    let e = 1.0 / (1.0 - beta);
    let a0 = ((1.0 - beta) * c.powf((p - 1.0) / p) * PROFILE_START).powf(e);
    if !(a0 > 0.0) {
        return Err(Error::Branch("start value underflows".into()));
    }
    let gamma = (p - 1.0) / p;
    let gp = g.clone();
    // log variables: x = ln s, y = ln A, y' = s G(A)^{(p-1)/p} / A
    let rhs = move |x: f64, y: f64| (x + gamma * gp(y.exp()).ln() - y).exp();
    let s_grid = log_grid(PROFILE_START, s_max, PROFILE_PER_DECADE);
    let xs: Vec<f64> = s_grid.iter().map(|s| s.ln()).collect();
    let ys = dopri45(rhs, xs[0], a0.ln(), &xs, 1e-11, 1e-12)
        .ok_or_else(|| Error::Branch("integration of the profile ODE failed".into()))?;
    let a_tab: Vec<f64> = ys.iter().map(|y| y.exp()).collect();
    if a_tab.windows(2).any(|w| !(w[1] > w[0])) || !a_tab.iter().all(|a| a.is_finite() && *a > 0.0) {
        return Err(Error::Branch("profile collapsed to the trivial branch".into()));
    }
    let mut s = vec![0.0];
    s.extend_from_slice(&s_grid);
    let mut a = vec![0.0];
    a.extend_from_slice(&a_tab);
    let mut a_prime = vec![if e > 1.0 { 0.0 } else { f64::INFINITY }];
    a_prime.extend(a_tab.iter().map(|&v| g(v).powf(gamma)));
    let c_ap = (1..s.len()).map(|i| s[i] * a_prime[i] / a[i]).fold(1.0, f64::max);
    let mut prof = GeneralEmbeddingProfile {
        g,
        p,
        s,
        a,
        a_prime,
        c_ap,
        start_exponent: e,
        checks: ProfileChecks { ap_lower: true, sofeef: true, b_convex: true },
    };
    prof.checks = prof.run_checks();
    Ok(prof)
}

impl GeneralEmbeddingProfile {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn g(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn g_inverse(&self, y: f64) -> f64 {
        invert_increasing(&*self.g, y)
    }

    /// `A(s)`, log-log interpolated between knots and extended by the end
    /// slopes outside the table.
    pub fn a(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        loglog(&self.s[1..], &self.a[1..], s)
    }

    pub fn a_inverse(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        loglog(&self.a[1..], &self.s[1..], v)
    }

    pub fn b(&self, s: f64) -> f64 {
        self.g(self.a(s.abs().powf(1.0 / self.p)))
    }

    pub fn b_inverse(&self, v: f64) -> f64 {
        self.a_inverse(self.g_inverse(v)).powf(self.p)
    }

    pub fn s_fn(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        self.g_inverse(v).powf(self.p) * v.powf(1.0 - self.p)
    }

    fn run_checks(&self) -> ProfileChecks {
        const TOL: f64 = 1e-7;
        let p = self.p;
        let ap_lower = (1..self.s.len()).all(|i| self.a[i] / self.s[i] <= self.a_prime[i] * (1.0 + TOL));
        let cp = self.c_ap.powf(-p);
        let sofeef = (1..self.s.len()).all(|i| {
            let t = self.s[i].powf(p);
            let sb = self.s_fn(self.g(self.a[i]));
            sb <= t * (1.0 + TOL) && sb >= cp * t * (1.0 - TOL)
        });
        let ts: Vec<f64> = self.s.iter().map(|s| s.powf(p)).collect();
        let bs: Vec<f64> = self.a.iter().map(|&a| self.g(a)).collect();
        let slopes: Vec<f64> = (0..ts.len() - 1).map(|i| (bs[i + 1] - bs[i]) / (ts[i + 1] - ts[i])).collect();
        let b_convex = slopes.windows(2).all(|w| w[1] >= w[0] * (1.0 - TOL));
        ProfileChecks { ap_lower, sofeef, b_convex }
    }
}

fn loglog(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = xs.partition_point(|&v| v < x).clamp(1, n - 1) - 1;
    let t = (x / xs[i]).ln() / (xs[i + 1] / xs[i]).ln();
    (ys[i].ln() + t * (ys[i + 1] / ys[i]).ln()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneralEmbeddingRatios {
    /// `S(∫ G(A(u)) dμ) / ∫|∇u|^p`.
    pub emb_p: f64,
    /// `∫u^p / (v B^{-1}(v^{-1} B(C^p ∫|∇u|^p)))`, `v = |supp u|`.
    pub faber_krahn: f64,
    /// Weighted version with `γ = 1`; present when a density and radius are given.
    pub weighted: Option<f64>,
}

pub fn general_embedding_check(
    f: &RadialTestFunction,
    geom: &ManifoldProfile,
    prof: &GeneralEmbeddingProfile,
    weighted: Option<(&DensityProfile, f64)>,
) -> Result<GeneralEmbeddingRatios> {
    require_euclidean(geom, "the general embedding")?;
    if f.is_zero() {
        return Err(Error::DegenerateInput("embedding ratio of the zero function".into()));
    }
    let p = prof.p;
    let grad = f.gradient_norm(p);
    let emb_p = prof.s_fn(f.integral(|u| prof.g(prof.a(u)))) / grad;
    let v = f.support_measure();
    let scaled = prof.c_ap.powf(p) * grad;
    let lp = f.integral(|u| u.powf(p));
    let faber_krahn = lp / (v * prof.b_inverse(prof.b(scaled) / v));
    let weighted = match weighted {
        None => None,
        Some((dens, radius)) => {
            if !(radius > 0.0) {
                return Err(Error::Domain(format!("needs R > 0, got {radius}")));
            }
            require_psi_nondecreasing(dens, p)?;
            let lhs = f.weighted_integral(|u| u.powf(p), |r| dens.rho(r));
            let mu_out = f.weighted_integral(|_| 1.0, |r| if r >= radius { dens.rho(r) } else { 0.0 });
            let outer =
                if mu_out > 0.0 { mu_out * prof.b_inverse(dens.rho(radius) / mu_out * prof.b(scaled)) } else { 0.0 };
            Some(lhs / (dens.psi_with(p, radius) * grad + outer))
        }
    };
    Ok(GeneralEmbeddingRatios { emb_p, faber_krahn, weighted })
}

/// Member `index` of the reproducible family of piecewise-linear radial
/// profiles: 3 to 10 knots in `[0, R_max/2]`, values in `[0, 1]`, zero at
/// the last knot.
pub fn random_test_function(grid: &RadialGrid, seed: u64, index: u64) -> Result<RadialTestFunction<'_>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let knots = rng.random_range(3..=10usize);
    let half = 0.5 * grid.r_max;
    let mut radii: Vec<f64> = (0..knots - 1).map(|_| rng.random_range(0.0..half)).collect();
    radii.push(0.0);
    radii.sort_by(f64::total_cmp);
    let mut values: Vec<f64> = (0..knots).map(|_| rng.random_range(0.0..=1.0)).collect();
    values[knots - 1] = 0.0;
    if values.iter().all(|&v| v == 0.0) {
        values[0] = 1.0;
    }
    let end = radii[knots - 1];
    RadialTestFunction::from_fn(grid, |r| {
        if r >= end {
            return 0.0;
        }
        let i = radii.partition_point(|&x| x <= r).clamp(1, knots - 1) - 1;
        let w = radii[i + 1] - radii[i];
        if w <= 0.0 {
            values[i + 1]
        } else {
            values[i] + (values[i + 1] - values[i]) * (r - radii[i]) / w
        }
    })
}

/// Running maximum of the Hardy ratio over the first `count` members of the
/// random family; entry `k` covers members `0..=k`.
pub fn empirical_hardy_constant(grid: &RadialGrid, p: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    let ratios = (0..count as u64)
        .into_par_iter()
        .map(|i| random_test_function(grid, seed, i).and_then(|f| hardy_ratio(&f, p)))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = f64::NEG_INFINITY;
    Ok(ratios
        .into_iter()
        .map(|r| {
            best = best.max(r);
            best
        })
        .collect())
}
