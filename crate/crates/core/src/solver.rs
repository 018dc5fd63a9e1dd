//! Conservative explicit finite-volume integrator for the radial equation
//! `ρ(r) u_t = σ(r)⁻¹ ∂_r(σ(r) u^{m-1} |u_r|^{p-2} u_r)`.
//!
//! Cells are uniform in `r` with exact volume-shell weights; fluxes act on the
//! interior faces and vanish at the origin and at `R_max`, so the weighted
//! mass `Σ ρ_i w_i u_i` changes only by round-off.

use serde::{Deserialize, Serialize};

use crate::density::DensityProfile;
use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::geometry::ManifoldProfile;
use crate::regime::{classify_regime, z0, Regime};

pub const MIN_CELLS: usize = 16;
pub const MAX_HALVINGS: u32 = 40;
/// Guards the time-step quotient on empty states.
pub const DT_FLOOR: f64 = 1e-300;
/// Fraction of `R_max` at which the interface is considered near the boundary.
pub const BOUNDARY_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub n_cells: usize,
    /// Width of the innermost cell; the common width on a uniform grid.
    pub dr: f64,
    pub r_max: f64,
    /// Cell boundaries `0 = e_0 < ... < e_n = R_max`.
    pub edges: Vec<f64>,
    /// Midpoints of the cells, `(i + ½) dr` on a uniform grid.
    pub centers: Vec<f64>,
    /// `V(e_{i+1}) - V(e_i)`
    pub cell_weights: Vec<f64>,
    /// `σ(e_{i+1})` for the `n_cells - 1` interior faces.
    pub face_areas: Vec<f64>,
    /// Distance between the centers adjacent to each interior face.
    pub face_spacing: Vec<f64>,
}

impl RadialGrid {
    pub fn is_uniform(&self) -> bool {
        self.face_spacing.iter().all(|&h| (h - self.dr).abs() <= 1e-12 * self.dr)
    }
}

/// Uniform grid of `n_cells` shells on `[0, R_max]`.
pub fn build_grid(geom: &ManifoldProfile, r_max: f64, n_cells: usize) -> Result<RadialGrid> {
    check_grid_request(r_max, n_cells)?;
    shell_grid(geom, r_max, n_cells)
}

/// Grid with edges `c sinh(b i/n)`, `sinh b = R_max / c`: nearly uniform
/// with spacing `c b / n` inside radius `c`, geometric beyond.
pub fn build_stretched_grid(geom: &ManifoldProfile, r_max: f64, n_cells: usize, core: f64) -> Result<RadialGrid> {
    check_grid_request(r_max, n_cells)?;
    if !(core > 0.0 && core <= r_max) {
        return Err(Error::Config(format!("stretch core must lie in (0, R_max], got {core}")));
    }
    let b = (r_max / core).asinh();
    let n = n_cells as f64;
    let edges = (0..=n_cells).map(|i| if i == n_cells { r_max } else { core * (b * i as f64 / n).sinh() }).collect();
    grid_from_edges(geom, edges)
}

fn check_grid_request(r_max: f64, n_cells: usize) -> Result<()> {
    if n_cells < MIN_CELLS {
        return Err(Error::Config(format!("n_cells must be at least {MIN_CELLS}, got {n_cells}")));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::Config(format!("R_max must be positive, got {r_max}")));
    }
    Ok(())
}

pub(crate) fn shell_grid(geom: &ManifoldProfile, r_max: f64, n_cells: usize) -> Result<RadialGrid> {
    let dr = r_max / n_cells as f64;
    let edges = (0..=n_cells).map(|i| if i == n_cells { r_max } else { i as f64 * dr }).collect();
    let mut grid = grid_from_edges(geom, edges)?;
    grid.centers = (0..n_cells).map(|i| (i as f64 + 0.5) * dr).collect();
    grid.face_spacing = vec![dr; n_cells - 1];
    grid.dr = dr;
    Ok(grid)
}

fn grid_from_edges(geom: &ManifoldProfile, edges: Vec<f64>) -> Result<RadialGrid> {
    let n_cells = edges.len() - 1;
    if edges[0] != 0.0 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("grid edges must start at 0 and increase".into()));
    }
    let volumes = edges.iter().map(|&e| geom.volume(e)).collect::<Result<Vec<_>>>()?;
    let cell_weights: Vec<f64> = volumes.windows(2).map(|w| w[1] - w[0]).collect();
    if cell_weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Domain("cell weights must be positive".into()));
    }
    let face_areas = edges[1..n_cells].iter().map(|&e| geom.area(e)).collect::<Result<Vec<_>>>()?;
    let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let face_spacing = centers.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(RadialGrid {
        n_cells,
        dr: edges[1],
        r_max: edges[n_cells],
        edges,
        centers,
        cell_weights,
        face_areas,
        face_spacing,
    })
}

/// `ū^{m-1} (D² + eps²)^{(p-2)/2} D` with `D = (u_r - u_l)/dr`, `ū` the mean.
#[inline]
pub fn numerical_flux(u_left: f64, u_right: f64, dr: f64, exps: &Exponents, eps_reg: f64) -> f64 {
    let d = (u_right - u_left) / dr;
    let mean = 0.5 * (u_left + u_right);
    if d == 0.0 || mean == 0.0 {
        return 0.0;
    }
    mean.powf(exps.m() - 1.0) * gradient_factor(d, exps.p(), eps_reg) * d
}

#[inline]
fn gradient_factor(d: f64, p: f64, eps: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else {
        (d * d + eps * eps).powf(0.5 * (p - 2.0))
    }
}

/// Bound on `dr · |∂F/∂u|` for the face flux, the effective diffusivity used
/// by [`stable_dt`].
#[inline]
pub fn face_diffusivity(u_left: f64, u_right: f64, dr: f64, exps: &Exponents, eps_reg: f64) -> f64 {
    let mean = 0.5 * (u_left + u_right);
    let jump = (u_right - u_left).abs();
    if mean == 0.0 || (jump == 0.0 && eps_reg == 0.0 && exps.p() < 2.0) {
        return 0.0;
    }
    let m = exps.m();
    let g = gradient_factor(jump / dr, exps.p(), eps_reg);
    let pm = (exps.p() - 1.0).max(1.0);
    g * mean.powf(m - 2.0) * (pm * mean + 0.5 * (m - 1.0).max(0.0) * jump)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub interface_near_boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub field: Vec<f64>,
    pub time: f64,
    pub dt: f64,
    pub steps: u64,
    pub flags: Flags,
    /// Index of the outermost nonzero cell.
    support_end: usize,
}

impl SolverState {
    pub fn new(field: Vec<f64>) -> Result<Self> {
        if field.iter().any(|&u| !(u >= 0.0 && u.is_finite())) {
            return Err(Error::Domain("field values must be finite and nonnegative".into()));
        }
        let support_end = field.iter().rposition(|&u| u > 0.0).unwrap_or(0);
        Ok(Self { field, time: 0.0, dt: 0.0, steps: 0, flags: Flags::default(), support_end })
    }
}

/// Grid, cell densities and exponents prepared for stepping.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub grid: RadialGrid,
    pub exps: Exponents,
    pub eps_reg: f64,
    /// `ρ(r_i)`
    pub rho: Vec<f64>,
    inv_capacity: Vec<f64>,
    /// `σ_j / h_j` per interior face.
    face_conductance: Vec<f64>,
    face_flux: Vec<f64>,
    face_diff: Vec<f64>,
    boundary_cell: usize,
    boundary_threshold: f64,
    rates: Vec<f64>,
}

impl Scheme {
    /// `support_threshold` is the level above which a cell counts as occupied
    /// for the boundary flag.
    pub fn new(
        grid: RadialGrid,
        dens: &DensityProfile,
        exps: Exponents,
        eps_reg: f64,
        support_threshold: f64,
    ) -> Result<Self> {
        if !(eps_reg >= 0.0) {
            return Err(Error::Config(format!("eps_reg must be nonnegative, got {eps_reg}")));
        }
        if grid.r_max > dens.r_limit() * (1.0 + 1e-12) {
            return Err(Error::Range(format!("density defined up to {} but R_max is {}", dens.r_limit(), grid.r_max)));
        }
        let rho: Vec<f64> = grid.centers.iter().map(|&r| dens.rho(r)).collect();
        let inv_capacity = rho.iter().zip(&grid.cell_weights).map(|(r, w)| 1.0 / (r * w)).collect();
        let face_conductance = grid.face_areas.iter().zip(&grid.face_spacing).map(|(s, h)| s / h).collect();
        let boundary_cell = grid.centers.partition_point(|&c| c < BOUNDARY_FRACTION * grid.r_max);
        let n = grid.n_cells;
        Ok(Self {
            grid,
            exps,
            eps_reg,
            rho,
            inv_capacity,
            face_conductance,
            boundary_cell,
            boundary_threshold: support_threshold,
            face_flux: vec![0.0; n + 1],
            face_diff: vec![0.0; n + 1],
            rates: vec![0.0; n],
        })
    }

    pub fn weighted_mass(&self, field: &[f64]) -> f64 {
        field.iter().zip(&self.rho).zip(&self.grid.cell_weights).map(|((u, r), w)| u * r * w).sum()
    }

    fn active_faces(&self, state: &SolverState) -> usize {
        (state.support_end + 1).min(self.grid.n_cells - 1)
    }
}

/// `cfl · min_i ρ_i w_i / (σ_{i-½} a_{i-½} / h_{i-½} + σ_{i+½} a_{i+½} / h_{i+½})`,
/// capped by `dt_max`, with `h` the center spacing across each face. On a
/// uniform grid away from the origin this is `cfl · ρ_i dr² / (2 a_i)`.
pub fn stable_dt(state: &SolverState, scheme: &Scheme, cfl: f64, dt_max: f64) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::Config(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    let g = &scheme.grid;
    let u = &state.field;
    let faces = scheme.active_faces(state);
    let mut worst: f64 = 0.0;
    let mut left = 0.0;
    for i in 0..=faces.min(g.n_cells - 1) {
        let right = if i < faces {
            scheme.face_conductance[i]
                * face_diffusivity(u[i], u[i + 1], g.face_spacing[i], &scheme.exps, scheme.eps_reg)
        } else {
            0.0
        };
        worst = worst.max((left + right) * scheme.inv_capacity[i]);
        left = right;
    }
    Ok((cfl / (worst + DT_FLOOR)).min(dt_max))
}

/// Fills face fluxes and cell rates for the active range; returns the number
/// of active cells and the largest `(σ₋a₋ + σ₊a₊)/(ρ_i w_i)`.
fn prepare(state: &SolverState, scheme: &mut Scheme) -> Result<(usize, f64)> {
    let faces = scheme.active_faces(state);
    let g = &scheme.grid;
    let (exps, eps) = (scheme.exps, scheme.eps_reg);
    let u = &state.field;
    let cells = faces + 1;
    // face arrays carry the closed origin face at index 0
    let flux = &mut scheme.face_flux[..cells + 1];
    let diff = &mut scheme.face_diff[..cells + 1];
    flux[cells] = 0.0;
    diff[cells] = 0.0;
    let pairs = u[..cells].windows(2).zip(&scheme.face_conductance[..faces]);
    if exps.p() == 2.0 && exps.m() == 2.0 {
        for (((w, k), f), d) in pairs.zip(&mut flux[1..cells]).zip(&mut diff[1..cells]) {
            let (a, b) = (w[0], w[1]);
            *f = 0.5 * k * (b * b - a * a);
            *d = k * a.max(b);
        }
    } else {
        for ((((w, k), h), f), d) in
            pairs.zip(&g.face_spacing[..faces]).zip(&mut flux[1..cells]).zip(&mut diff[1..cells])
        {
            *f = k * h * numerical_flux(w[0], w[1], *h, &exps, eps);
            *d = k * face_diffusivity(w[0], w[1], *h, &exps, eps);
        }
    }
    let mut worst: f64 = 0.0;
    let mut total = 0.0;
    for (((r, ic), f), d) in
        scheme.rates[..cells].iter_mut().zip(&scheme.inv_capacity[..cells]).zip(flux.windows(2)).zip(diff.windows(2))
    {
        *r = (f[1] - f[0]) * ic;
        total += r.abs();
        let q = (d[0] + d[1]) * ic;
        worst = if q > worst { q } else { worst };
    }
    if !(total + worst).is_finite() {
        return Err(Error::Stability { time: state.time, halvings: 0 });
    }
    Ok((cells, worst))
}

fn apply(state: &mut SolverState, scheme: &Scheme, cells: usize, dt: f64) -> Result<()> {
    let mut dt = dt;
    let mut halvings = 0;
    let rates = &scheme.rates[..cells];
    loop {
        let mut lowest = f64::INFINITY;
        for (u, r) in state.field[..cells].iter().zip(rates) {
            let v = u + dt * r;
            if v < lowest {
                lowest = v;
            }
        }
        if lowest >= 0.0 {
            break;
        }
        halvings += 1;
        if halvings > MAX_HALVINGS {
            return Err(Error::Stability { time: state.time, halvings: MAX_HALVINGS });
        }
        dt *= 0.5;
    }
    for (u, r) in state.field[..cells].iter_mut().zip(rates) {
        *u += dt * r;
    }
    if cells > state.support_end + 1 && state.field[cells - 1] > 0.0 {
        state.support_end = cells - 1;
    }
    if state.support_end >= scheme.boundary_cell
        && state.field[scheme.boundary_cell..=state.support_end].iter().any(|&v| v > scheme.boundary_threshold)
    {
        state.flags.interface_near_boundary = true;
    }
    state.time += dt;
    state.dt = dt;
    state.steps += 1;
    Ok(())
}

/// Advances `state` by `dt`, halving on negative values.
pub fn step(state: &mut SolverState, scheme: &mut Scheme, dt: f64) -> Result<()> {
    let (cells, _) = prepare(state, scheme)?;
    apply(state, scheme, cells, dt)
}

/// One step with the stable time step, landing exactly on `t_target` when
/// it is within reach.
pub fn advance(state: &mut SolverState, scheme: &mut Scheme, cfl: f64, dt_max: f64, t_target: f64) -> Result<()> {
    let (cells, worst) = prepare(state, scheme)?;
    let dt = (cfl / (worst + DT_FLOOR)).min(dt_max);
    let remaining = t_target - state.time;
    if dt >= remaining {
        apply(state, scheme, cells, remaining)?;
        if state.dt == remaining {
            state.time = t_target;
        }
        Ok(())
    } else {
        apply(state, scheme, cells, dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub sup_norm: f64,
    pub weighted_mass: f64,
    pub interface_radius: f64,
}

/// Sup norm, weighted mass, and the outermost center with
/// `u > eps_supp · amplitude`.
pub fn observables(field: &[f64], grid: &RadialGrid, rho: &[f64], eps_supp: f64, amplitude: f64) -> Observables {
    let sup_norm = field.iter().copied().fold(0.0, f64::max);
    let weighted_mass = field.iter().zip(rho).zip(&grid.cell_weights).map(|((u, r), w)| u * r * w).sum();
    let threshold = eps_supp * amplitude;
    let interface_radius = match field.iter().rposition(|&u| u > threshold) {
        Some(i) if sup_norm > 0.0 => grid.centers[i],
        _ => 0.0,
    };
    Observables { sup_norm, weighted_mass, interface_radius }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub geometry: ManifoldProfile,
    pub density: DensityProfile,
    pub exponents: Exponents,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainSize {
    Fixed(f64),
    /// `max(3 Z₀(t_final), 10 R₀)` for subcritical configurations.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridKind {
    Uniform,
    /// See [`build_stretched_grid`].
    Stretched {
        core: f64,
    },
}

/// `u₀(r) = amplitude · max(1 - (r/radius)², 0)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialBump {
    pub amplitude: f64,
    pub radius: f64,
}

impl InitialBump {
    pub fn eval(&self, r: f64) -> f64 {
        let s = 1.0 - (r / self.radius).powi(2);
        if s > 0.0 {
            self.amplitude * s * s
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n_cells: usize,
    pub domain: DomainSize,
    pub grid: GridKind,
    pub cfl: f64,
    pub eps_supp: f64,
    /// `None` selects 0 for `p ≥ 2` and `1e-8 · A / R₀` otherwise.
    pub eps_reg: Option<f64>,
    pub t_final: f64,
    pub dt_max: f64,
    /// First positive sample time; later ones follow `t₀ 2^{k/4}`.
    pub t_first: f64,
    pub initial: InitialBump,
    /// Radius of the ball whose weighted mass is recorded at each sample.
    pub probe_radius: Option<f64>,
    /// End the run at the first flagged sample.
    pub stop_on_flag: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_cells: 2000,
            domain: DomainSize::Auto,
            grid: GridKind::Uniform,
            cfl: 0.45,
            eps_supp: 1e-6,
            eps_reg: None,
            t_final: 1.0,
            dt_max: 1.0,
            t_first: 1e-3,
            initial: InitialBump { amplitude: 1.0, radius: 1.0 },
            probe_radius: None,
            stop_on_flag: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_cells < MIN_CELLS {
            return bad(format!("n_cells must be at least {MIN_CELLS}"));
        }
        if let DomainSize::Fixed(r) = self.domain {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("R_max must be positive, got {r}"));
            }
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.eps_supp > 0.0) {
            return bad("eps_supp must be positive".into());
        }
        if let Some(e) = self.eps_reg {
            if !(e >= 0.0) {
                return bad("eps_reg must be nonnegative".into());
            }
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad("t_final must be finite and nonnegative".into());
        }
        if !(self.dt_max > 0.0) {
            return bad("dt_max must be positive".into());
        }
        if !(self.t_first > 0.0) {
            return bad("t_first must be positive".into());
        }
        if !(self.initial.amplitude > 0.0 && self.initial.radius > 0.0) {
            return bad("initial amplitude and radius must be positive".into());
        }
        Ok(())
    }

    pub fn resolved_eps_reg(&self, exps: &Exponents) -> f64 {
        self.eps_reg.unwrap_or(if exps.p() >= 2.0 { 0.0 } else { 1e-8 * self.initial.amplitude / self.initial.radius })
    }

    /// `0`, then `t₀ 2^{k/4}` below `t_final`, then `t_final`.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut times = vec![0.0];
        if self.t_final > 0.0 {
            let mut k = 0;
            loop {
                let t = self.t_first * 2f64.powf(k as f64 / 4.0);
                if t >= self.t_final * (1.0 - 1e-12) {
                    break;
                }
                times.push(t);
                k += 1;
            }
            times.push(self.t_final);
        }
        times
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub sup: f64,
    pub mass: f64,
    pub interface: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub samples: Vec<Sample>,
    /// Index of the first sample taken with the interface near the boundary.
    pub flagged_from: Option<usize>,
    pub r_max: f64,
    pub n_cells: usize,
    pub steps: u64,
    /// Weighted mass inside the probe radius at each sample, if requested.
    pub central_mass: Vec<f64>,
    pub centers: Vec<f64>,
    pub final_field: Vec<f64>,
    pub final_state_path: Option<String>,
}

impl RunRecord {
    pub fn unflagged(&self) -> &[Sample] {
        &self.samples[..self.flagged_from.unwrap_or(self.samples.len())]
    }

    pub fn is_flagged(&self) -> bool {
        self.flagged_from.is_some()
    }
}

/// Resolves the computational radius for `cfg`.
pub fn resolve_domain(problem: &Problem, cfg: &SolverConfig) -> Result<f64> {
    match cfg.domain {
        DomainSize::Fixed(r) => Ok(r),
        DomainSize::Auto => {
            let floor = 10.0 * cfg.initial.radius;
            if cfg.t_final == 0.0 {
                return Ok(floor);
            }
            let report = classify_regime(&problem.geometry, &problem.density, &problem.exponents)?;
            if report.regime != Regime::Subcritical {
                return Err(Error::Config(format!(
                    "automatic R_max needs a subcritical configuration, classified as {}",
                    report.regime
                )));
            }
            let mass = initial_mass(problem, cfg)?;
            let z = z0(&problem.geometry, &problem.density, &problem.exponents, cfg.t_final, mass, 1.0)?;
            Ok((3.0 * z).max(floor))
        }
    }
}

/// Weighted mass of the initial bump, `∫ u₀ ρ dμ`.
pub fn initial_mass(problem: &Problem, cfg: &SolverConfig) -> Result<f64> {
    let b = cfg.initial;
    let geom = &problem.geometry;
    let dens = &problem.density;
    let rb = b.radius.min(geom.r_limit());
    let f = |r: f64| b.eval(r) * dens.rho(r) * geom.area(r).unwrap_or(0.0);
    Ok(crate::numerics::adaptive_simpson(f, 0.0, rb))
}

pub fn initial_state(scheme: &Scheme, bump: &InitialBump) -> Result<SolverState> {
    SolverState::new(scheme.grid.centers.iter().map(|&r| bump.eval(r)).collect())
}

/// Integrates from the initial bump to `t_final`, sampling at geometric times.
pub fn run(problem: &Problem, cfg: &SolverConfig) -> Result<RunRecord> {
    run_observed(problem, cfg, |_, _| {})
}

/// [`run`] with a callback invoked after every sample.
pub fn run_observed<F: FnMut(&Sample, &SolverState)>(
    problem: &Problem,
    cfg: &SolverConfig,
    mut on_sample: F,
) -> Result<RunRecord> {
    cfg.validate()?;
    let r_max = resolve_domain(problem, cfg)?;
    let grid = match cfg.grid {
        GridKind::Uniform => build_grid(&problem.geometry, r_max, cfg.n_cells)?,
        GridKind::Stretched { core } => build_stretched_grid(&problem.geometry, r_max, cfg.n_cells, core)?,
    };
    let amplitude = cfg.initial.amplitude;
    let mut scheme = Scheme::new(
        grid,
        &problem.density,
        problem.exponents,
        cfg.resolved_eps_reg(&problem.exponents),
        cfg.eps_supp * amplitude,
    )?;
    let mut state = initial_state(&scheme, &cfg.initial)?;
    let probe_cells = cfg.probe_radius.map(|r| scheme.grid.centers.partition_point(|&c| c < r));

    let times = cfg.sample_times();
    let mut samples = Vec::with_capacity(times.len());
    let mut central_mass = Vec::new();
    let mut flagged_from = None;
    for (k, &t_next) in times.iter().enumerate() {
        while state.time < t_next {
            advance(&mut state, &mut scheme, cfg.cfl, cfg.dt_max, t_next)?;
        }
        let obs = observables(&state.field, &scheme.grid, &scheme.rho, cfg.eps_supp, amplitude);
        if obs.interface_radius >= BOUNDARY_FRACTION * r_max {
            state.flags.interface_near_boundary = true;
        }
        if state.flags.interface_near_boundary && flagged_from.is_none() {
            flagged_from = Some(k);
        }
        if let Some(nc) = probe_cells {
            central_mass.push(scheme.weighted_mass(&state.field[..nc]));
        }
        let sample = Sample { t: t_next, sup: obs.sup_norm, mass: obs.weighted_mass, interface: obs.interface_radius };
        on_sample(&sample, &state);
        samples.push(sample);
        if cfg.stop_on_flag && flagged_from.is_some() {
            break;
        }
    }
    Ok(RunRecord {
        config_digest: String::new(),
        samples,
        flagged_from,
        r_max,
        n_cells: cfg.n_cells,
        steps: state.steps,
        central_mass,
        centers: scheme.grid.centers.clone(),
        final_field: state.field,
        final_state_path: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn e(n: usize, p: f64, m: f64) -> Exponents {
        Exponents::new(n, p, m).unwrap()
    }

    fn euclid_problem(alpha: f64) -> Problem {
        Problem {
            geometry: ManifoldProfile::euclidean(3),
            density: DensityProfile::power_law(alpha).unwrap(),
            exponents: e(3, 2.0, 2.0),
        }
    }

    #[test]
    fn two_cell_shells() {
        let g = shell_grid(&ManifoldProfile::euclidean(3), 1.0, 2).unwrap();
        assert_relative_eq!(g.cell_weights[0], 4.0 * PI / 3.0 / 8.0, max_relative = 1e-15);
        assert_relative_eq!(g.cell_weights[1], 4.0 * PI / 3.0 * 7.0 / 8.0, max_relative = 1e-15);
        assert_relative_eq!(g.face_areas[0], PI, max_relative = 1e-15);
        assert!(matches!(build_grid(&ManifoldProfile::euclidean(3), 1.0, 2), Err(Error::Config(_))));
    }

    #[test]
    fn flux_examples() {
        assert_eq!(numerical_flux(1.0, 0.0, 0.5, &e(4, 3.0, 2.0), 0.0), -2.0);
        assert_eq!(numerical_flux(0.3, 0.3, 0.1, &e(3, 2.0, 2.0), 0.0), 0.0);
        assert_eq!(numerical_flux(0.0, 0.0, 0.1, &e(3, 1.5, 2.0), 1e-3), 0.0);
    }

    #[test]
    fn dt_scaling() {
        let p = euclid_problem(0.0);
        let mk = |n| Scheme::new(build_grid(&p.geometry, 2.0, n).unwrap(), &p.density, p.exponents, 0.0, 1e-6).unwrap();
        let (s1, s2) = (mk(64), mk(128));
        let st =
            |s: &Scheme, lam: f64| SolverState::new(s.grid.centers.iter().map(|&r| lam * (2.0 - r)).collect()).unwrap();
        let d1 = stable_dt(&st(&s1, 1.0), &s1, 0.45, 1e9).unwrap();
        let d2 = stable_dt(&st(&s2, 1.0), &s2, 0.45, 1e9).unwrap();
        assert_relative_eq!(d1 / d2, 4.0, max_relative = 0.05);
        let d3 = stable_dt(&st(&s1, 2.0), &s1, 0.45, 1e9).unwrap();
        assert_relative_eq!(d1 / d3, 2.0, max_relative = 1e-12);
        let zero = SolverState::new(vec![0.0; 64]).unwrap();
        assert_eq!(stable_dt(&zero, &s1, 0.45, 0.25).unwrap(), 0.25);
    }

    #[test]
    fn constant_field_is_steady() {
        let p = euclid_problem(1.0);
        let mut s = Scheme::new(build_grid(&p.geometry, 3.0, 32).unwrap(), &p.density, p.exponents, 0.0, 1e-6).unwrap();
        let mut st = SolverState::new(vec![0.7; 32]).unwrap();
        step(&mut st, &mut s, 1e-3).unwrap();
        assert!(st.field.iter().all(|&u| u == 0.7));
        assert_eq!(st.time, 1e-3);
    }

    #[test]
    fn single_step_conserves_mass() {
        for (alpha, exps) in [(0.0, e(3, 2.0, 2.0)), (1.0, e(4, 3.0, 1.5)), (0.5, e(2, 1.5, 2.0))] {
            let p = Problem {
                geometry: ManifoldProfile::euclidean(exps.n()),
                density: DensityProfile::power_law(alpha).unwrap(),
                exponents: exps,
            };
            let mut s = Scheme::new(build_grid(&p.geometry, 2.0, 40).unwrap(), &p.density, exps, 1e-8, 1e-6).unwrap();
            let mut field = vec![0.0; 40];
            field[0] = 1.0;
            let mut st = SolverState::new(field).unwrap();
            let before = s.weighted_mass(&st.field);
            let dt = stable_dt(&st, &s, 0.45, 1.0).unwrap();
            step(&mut st, &mut s, dt).unwrap();
            assert_relative_eq!(s.weighted_mass(&st.field), before, max_relative = 1e-14);
        }
    }

    #[test]
    fn porous_medium_step_matches_scalar_reference() {
        let p = euclid_problem(0.0);
        let g = build_grid(&p.geometry, 1.0, MIN_CELLS).unwrap();
        let mut s = Scheme::new(g, &p.density, p.exponents, 0.0, 1e-6).unwrap();
        let u0: Vec<f64> = (0..16).map(|i| if i < 8 { 1.0 - i as f64 / 8.0 } else { 0.0 }).collect();
        let mut st = SolverState::new(u0.clone()).unwrap();
        let dt = 1e-4;
        step(&mut st, &mut s, dt).unwrap();
        // Δ(u²/2) in spherical shells, written out cell by cell
        let h = 1.0 / 16.0;
        for i in 0..9 {
            let vol = 4.0 * PI / 3.0 * (((i + 1) as f64 * h).powi(3) - (i as f64 * h).powi(3));
            let out = if i < 15 {
                4.0 * PI * ((i + 1) as f64 * h).powi(2) * (u0[i + 1].powi(2) - u0[i].powi(2)) / (2.0 * h)
            } else {
                0.0
            };
            let inn = if i > 0 {
                4.0 * PI * (i as f64 * h).powi(2) * (u0[i].powi(2) - u0[i - 1].powi(2)) / (2.0 * h)
            } else {
                0.0
            };
            assert_relative_eq!(st.field[i], u0[i] + dt * (out - inn) / vol, max_relative = 1e-13, epsilon = 1e-300);
        }
    }

    #[test]
    fn observables_examples() {
        let p = euclid_problem(0.0);
        let g = build_grid(&p.geometry, 2.0, 4000).unwrap();
        let rho = vec![1.0; 4000];
        let o = observables(&vec![0.0; 4000], &g, &rho, 1e-6, 1.0);
        assert_eq!((o.sup_norm, o.weighted_mass, o.interface_radius), (0.0, 0.0, 0.0));
        let bump = InitialBump { amplitude: 1.0, radius: 1.0 };
        let f: Vec<f64> = g.centers.iter().map(|&r| bump.eval(r)).collect();
        let o = observables(&f, &g, &rho, 1e-6, 1.0);
        assert_relative_eq!(o.weighted_mass, 32.0 * PI / 105.0, max_relative = 1e-5);
        let ind: Vec<f64> = g.centers.iter().map(|&r| if r < 0.5 { 1.0 } else { 0.0 }).collect();
        let o = observables(&ind, &g, &rho, 1e-6, 1.0);
        assert!((o.interface_radius - 0.5).abs() <= g.dr);
    }

    #[test]
    fn zero_final_time_gives_initial_sample() {
        let cfg = SolverConfig { t_final: 0.0, n_cells: 200, ..SolverConfig::default() };
        let rec = run(&euclid_problem(0.0), &cfg).unwrap();
        assert_eq!(rec.samples.len(), 1);
        let s = rec.samples[0];
        let dr = 10.0 / 200.0;
        assert!((s.sup - 1.0).abs() <= dr * dr);
        assert!((s.interface - 1.0).abs() <= dr);
    }

    #[test]
    fn sample_schedule() {
        let cfg = SolverConfig { t_first: 1.0, t_final: 4.0, ..SolverConfig::default() };
        let t = cfg.sample_times();
        assert_eq!(t.len(), 1 + 8 + 1);
        assert_eq!(*t.last().unwrap(), 4.0);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn short_run_is_monotone_and_conservative() {
        let cfg =
            SolverConfig { t_final: 2.0, n_cells: 400, domain: DomainSize::Fixed(6.0), ..SolverConfig::default() };
        let rec = run(&euclid_problem(0.0), &cfg).unwrap();
        assert!(!rec.is_flagged());
        let m0 = rec.samples[0].mass;
        for w in rec.samples.windows(2) {
            assert!(w[1].sup <= w[0].sup * (1.0 + 1e-12));
            assert!(w[1].interface >= w[0].interface - 6.0 / 400.0);
        }
        for s in &rec.samples {
            assert!(((s.mass - m0) / m0).abs() < 1e-12);
        }
        assert!(rec.final_field.iter().all(|&u| u >= 0.0));
    }

    #[test]
    fn auto_domain_refuses_non_subcritical() {
        let cfg = SolverConfig { t_final: 1.0, ..SolverConfig::default() };
        assert!(matches!(resolve_domain(&euclid_problem(2.8), &cfg), Err(Error::Config(_))));
        let r = resolve_domain(&euclid_problem(0.0), &SolverConfig { t_final: 1e4, ..cfg }).unwrap();
        assert!(r > 10.0);
    }
}
