//! Subcommand implementations. Each returns the overall verdict and the JSON
//! lines it appended to `report.jsonl`.

use std::fmt::Write as _;
use std::path::Path;

use densflow_core::density::verify_density_assumptions;
use densflow_core::embeddings::{
    decreasing_rearrangement, embedding_ratio, empirical_hardy_constant, general_embedding_check, hardy_ratio,
    isoperimetric_g, solve_profile_ode, EmbeddingKind, EmbeddingSetting, RadialTestFunction,
};
use densflow_core::geometry::verify_geometry_assumptions;
use densflow_core::harness::{
    blowup_probe, compare_decay, compare_propagation, mass_conservation_audit, sweep, universal_bound_experiment,
    Verdict,
};
use densflow_core::numerics::linear_fit;
use densflow_core::regime::{classify_regime, Regime, RegimeReport};
use densflow_core::solver::{build_grid, run, Problem, RunRecord, SolverConfig};
use densflow_core::Error;
use serde::Serialize;

use crate::config::{Config, ExperimentKind, RMax};
use crate::error::CliError;
use crate::record::write_run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Classify,
    Solve,
    Asymptotics,
    VerifyEmbeddings,
    CheckAssumptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub verdict: Verdict,
    pub lines: Vec<String>,
}

pub fn exit_code(result: &Result<Outcome, CliError>) -> i32 {
    match result {
        Ok(Outcome { verdict: Verdict::Pass, .. }) => 0,
        Ok(Outcome { verdict: Verdict::Fail, .. }) => 1,
        _ => 2,
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report serializes")
}

fn append_report(dir: &Path, lines: &[String]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut text = String::new();
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    std::fs::write(dir.join("report.jsonl"), text)?;
    Ok(())
}

pub fn dispatch(cmd: Subcommand, cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let outcome = match cmd {
        Subcommand::Classify => classify(cfg)?,
        Subcommand::Solve => solve(cfg, out)?,
        Subcommand::Asymptotics => asymptotics(cfg, out)?,
        Subcommand::VerifyEmbeddings => verify_embeddings(cfg, out)?,
        Subcommand::CheckAssumptions => check_assumptions(cfg)?,
    };
    append_report(out, &outcome.lines)?;
    Ok(outcome)
}

fn classify(cfg: &Config) -> Result<Outcome, CliError> {
    let p = cfg.problem()?;
    let report = classify_regime(&p.geometry, &p.density, &p.exponents)?;
    Ok(Outcome { verdict: Verdict::Pass, lines: vec![json(&report)] })
}

fn audit_radius(cfg: &Config) -> f64 {
    match cfg.solver.r_max {
        RMax::Fixed(r) => r,
        RMax::Auto => 1e4,
    }
}

fn check_assumptions(cfg: &Config) -> Result<Outcome, CliError> {
    let p = cfg.problem()?;
    let r_max = audit_radius(cfg).min(p.geometry.r_limit()).min(p.density.r_limit());
    let geometry = verify_geometry_assumptions(&p.geometry, &p.exponents, r_max)?;
    let density = verify_density_assumptions(&p.density, &p.geometry, &p.exponents, r_max)?;
    let verdict = if geometry.all_passed() && density.all_passed() { Verdict::Pass } else { Verdict::Fail };
    #[derive(Serialize)]
    struct Line<'a> {
        r_max: f64,
        geometry: &'a densflow_core::AssumptionReport,
        density: &'a densflow_core::AssumptionReport,
    }
    Ok(Outcome { verdict, lines: vec![json(&Line { r_max, geometry: &geometry, density: &density })] })
}

fn run_with_digest(cfg: &Config, problem: &Problem, solver: &SolverConfig) -> Result<RunRecord, CliError> {
    let mut record = run(problem, solver)?;
    record.config_digest = cfg.digest();
    Ok(record)
}

fn solve(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let problem = cfg.problem()?;
    let record = run_with_digest(cfg, &problem, &cfg.solver_config())?;
    write_run(out, "run", cfg, &record, true)?;
    #[derive(Serialize)]
    struct Line<'a> {
        config_digest: &'a str,
        samples: usize,
        steps: u64,
        r_max: f64,
        flagged: bool,
    }
    let line = Line {
        config_digest: &record.config_digest,
        samples: record.samples.len(),
        steps: record.steps,
        r_max: record.r_max,
        flagged: record.is_flagged(),
    };
    Ok(Outcome { verdict: Verdict::Pass, lines: vec![json(&line)] })
}

fn require_regime(problem: &Problem, wanted: Regime) -> Result<RegimeReport, CliError> {
    let report = classify_regime(&problem.geometry, &problem.density, &problem.exponents)?;
    if report.regime != wanted {
        return Err(Error::Hypothesis(format!(
            "experiment needs a {wanted} configuration, classified as {}",
            report.regime
        ))
        .into());
    }
    Ok(report)
}

/// One experiment on one config; `stem` names its run files.
fn experiment(cfg: &Config, out: &Path, stem: &str, with_field: bool) -> Result<Outcome, CliError> {
    let problem = cfg.problem()?;
    let solver = cfg.solver_config();
    let tol = &cfg.experiment.tolerances;
    let mut lines = Vec::new();
    let mut verdict = Verdict::Pass;
    match cfg.experiment.kind {
        kind @ (ExperimentKind::Subcritical
        | ExperimentKind::Decay
        | ExperimentKind::Propagation
        | ExperimentKind::Mass) => {
            let report = require_regime(&problem, Regime::Subcritical)?;
            let record = run_with_digest(cfg, &problem, &solver)?;
            write_run(out, stem, cfg, &record, with_field)?;
            if matches!(kind, ExperimentKind::Subcritical | ExperimentKind::Decay) {
                let c = compare_decay(&record, &report, tol)?;
                verdict = verdict.and(c.verdict);
                lines.push(json(&c));
            }
            if matches!(kind, ExperimentKind::Subcritical | ExperimentKind::Propagation) {
                let c = compare_propagation(&record, &report, tol)?;
                verdict = verdict.and(c.verdict);
                lines.push(json(&c));
            }
            if matches!(kind, ExperimentKind::Subcritical | ExperimentKind::Mass) {
                let a = mass_conservation_audit(&record, tol.mass_drift)?;
                verdict = verdict.and(a.verdict);
                lines.push(json(&a));
            }
        }
        ExperimentKind::UniversalBound => {
            let (report, [light, heavy]) = universal_bound_experiment(&problem, &solver, tol)?;
            let light = light.with_digest(cfg.digest());
            let heavy = heavy.with_digest(cfg.digest());
            write_run(out, stem, cfg, &light, with_field)?;
            write_run(out, &format!("{stem}_heavy"), cfg, &heavy, false)?;
            verdict = report.verdict;
            lines.push(json(&report));
        }
        ExperimentKind::BlowupProbe => {
            let report = blowup_probe(&problem, &solver, cfg.experiment.doublings)?;
            verdict =
                if report.excess > 0.0 && report.central_mass_decays { Verdict::Pass } else { Verdict::Inconclusive };
            lines.push(json(&report));
        }
    }
    Ok(Outcome { verdict, lines })
}

trait WithDigest {
    fn with_digest(self, digest: String) -> Self;
}

impl WithDigest for RunRecord {
    fn with_digest(mut self, digest: String) -> Self {
        self.config_digest = digest;
        self
    }
}

fn asymptotics(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    if cfg.experiment.sweep_alpha.is_empty() {
        return experiment(cfg, out, "run", true);
    }
    let jobs: Vec<(f64, Config)> = cfg.experiment.sweep_alpha.iter().map(|&a| (a, cfg.with_alpha(a))).collect();
    let results = sweep(&jobs, |(alpha, c)| {
        experiment(c, out, &format!("run_alpha_{alpha}"), false).map_err(|e| match e {
            CliError::Core(err) => err,
            other => Error::Config(other.to_string()),
        })
    });
    let mut verdict = Verdict::Pass;
    let mut lines = Vec::new();
    for ((alpha, _), r) in jobs.iter().zip(results) {
        match r {
            Ok(o) => {
                verdict = verdict.and(o.verdict);
                lines.extend(o.lines.into_iter().map(|l| format!("{{\"alpha\":{alpha},\"report\":{l}}}")));
            }
            Err(e) => {
                verdict = verdict.and(Verdict::Inconclusive);
                lines.push(format!("{{\"alpha\":{alpha},\"error\":{}}}", serde_json::Value::String(e.to_string())));
            }
        }
    }
    Ok(Outcome { verdict, lines })
}

#[derive(Debug, Clone, Serialize)]
struct EmbeddingRow {
    kind: String,
    params: String,
    ratio: f64,
    grid_cells: usize,
}

pub const EMBEDDING_HEADER: &str = "kind,params,ratio,grid_cells";
/// Largest relative shift of the empirical Hardy constant under refinement.
pub const REFINEMENT_SHIFT: f64 = 0.02;

fn verify_embeddings(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let problem = cfg.problem()?;
    let e = &cfg.embeddings;
    let p = problem.exponents.p();
    let n = problem.exponents.nf();
    let geom = &problem.geometry;
    let fine = build_grid(geom, e.r_max, e.n_cells)?;
    let coarse = build_grid(geom, e.r_max, e.n_cells / 2)?;
    let half = 0.5 * e.r_max;
    let cone = |g| RadialTestFunction::from_fn(g, |r| (1.0 - r / half).max(0.0));
    let f = cone(&fine)?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut verdict = Verdict::Pass;
    let mut row = |kind: &str, params: String, ratio: f64, cells: usize| {
        rows.push(EmbeddingRow { kind: kind.into(), params, ratio, grid_cells: cells })
    };

    let rs = decreasing_rearrangement(&f);
    for q in [1.0, p, 2.0 * p] {
        let direct = f.integral(|u| u.powf(q));
        row("equimeasurability", format!("q={q}"), rs.power_integral(q) / direct, e.n_cells);
    }
    row("hardy", format!("cone;R={half}"), hardy_ratio(&f, p)?, e.n_cells);

    let p_star = if p < n { n * p / (n - p) } else { f64::INFINITY };
    let alpha = problem.density.alpha_est();
    let p1 = e.p1.unwrap_or_else(|| 0.5 * (p * (n - alpha).max(0.0) / (n - p) + p_star));
    let kinds = [
        EmbeddingKind::EmbOld { q: p, r: 1.0f64.min(0.5 * p) },
        EmbeddingKind::EmbOldP { r: 1.0f64.min(0.5 * p) },
        EmbeddingKind::EmbOldWg { radius: e.split_radius },
        EmbeddingKind::EucWg { radius: e.split_radius },
        EmbeddingKind::EucSup { p1 },
    ];
    let set = EmbeddingSetting { geometry: geom, density: &problem.density, p };
    for kind in kinds {
        match embedding_ratio(&f, kind, &set) {
            Ok(r) => {
                let rc = embedding_ratio(&cone(&coarse)?, kind, &set)?;
                row(kind.name(), kind.params(), r, e.n_cells);
                row(kind.name(), kind.params(), rc, coarse.n_cells);
            }
            Err(err @ (Error::Hypothesis(_) | Error::Domain(_))) => {
                lines.push(format!(
                    "{{\"kind\":\"{}\",\"skipped\":{}}}",
                    kind.name(),
                    serde_json::Value::String(err.to_string())
                ));
            }
            Err(err) => return Err(err.into()),
        }
    }

    let best_fine = *empirical_hardy_constant(&fine, p, e.family_size, cfg.seed)?.last().unwrap_or(&f64::NAN);
    let best_coarse = *empirical_hardy_constant(&coarse, p, e.family_size, cfg.seed)?.last().unwrap_or(&f64::NAN);
    let family = format!("count={};seed={}", e.family_size, cfg.seed);
    row("hardy_family_max", family.clone(), best_fine, e.n_cells);
    row("hardy_family_max", family, best_coarse, coarse.n_cells);
    let shift = ((best_fine - best_coarse) / best_fine).abs();
    if !(best_fine.is_finite() && shift < REFINEMENT_SHIFT) {
        verdict = verdict.and(Verdict::Fail);
    }

    if geom.kind() == densflow_core::ProfileKind::Euclidean {
        let prof = solve_profile_ode(isoperimetric_g(geom)?, p, e.profile_s_max)?;
        let fit = |xs: &[f64], ys: &[f64]| {
            let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
            let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
            linear_fit(&lx, &ly).0
        };
        let ts: Vec<f64> = prof.s[1..].iter().map(|s| s.powf(p)).collect();
        let bs: Vec<f64> = ts.iter().map(|&t| prof.b(t)).collect();
        row("profile_a_exponent", format!("p={p}"), fit(&prof.s[1..], &prof.a[1..]), prof.s.len());
        row("profile_b_exponent", format!("p={p}"), fit(&ts, &bs), prof.s.len());
        let weighted = (problem.density.alpha_est() <= p).then_some((&problem.density, e.split_radius));
        let g = general_embedding_check(&f, geom, &prof, weighted)?;
        row("general_emb_p", String::new(), g.emb_p, e.n_cells);
        row("general_faber_krahn", String::new(), g.faber_krahn, e.n_cells);
        if let Some(w) = g.weighted {
            row("general_weighted", format!("R={}", e.split_radius), w, e.n_cells);
        }
        if !(prof.checks.ap_lower && prof.checks.sofeef && g.emb_p <= 1.0 && g.faber_krahn <= 1.0) {
            verdict = verdict.and(Verdict::Fail);
        }
        lines.push(json(&prof.checks));
    }

    let mut csv = String::from(EMBEDDING_HEADER);
    csv.push('\n');
    for r in &rows {
        let _ = writeln!(csv, "{},{},{:.16e},{}", r.kind, r.params, r.ratio, r.grid_cells);
        lines.push(json(r));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("embeddings.csv"), csv)?;
    Ok(Outcome { verdict, lines })
}
