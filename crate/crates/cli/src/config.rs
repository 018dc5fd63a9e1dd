//! Experiment configuration files.
//!
//! A config is TOML with dotted sections. Every section except
//! `[exponents]` may be omitted; unknown keys are rejected.

use std::path::{Path, PathBuf};

use densflow_core::geometry::IsoFunction;
use densflow_core::harness::Tolerances;
use densflow_core::solver::{resolve_domain, DomainSize, GridKind, InitialBump, Problem, SolverConfig};
use densflow_core::{DensityProfile, Exponents, ManifoldProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub exponents: ExponentsSpec,
    #[serde(default)]
    pub density: DensitySpec,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub embeddings: EmbeddingsSpec,
    /// Directory that relative table paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsSpec {
    pub n: usize,
    pub p: f64,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    #[default]
    Constant,
    PowerLaw {
        alpha: f64,
    },
    /// Two-column CSV with header `r,rho`.
    Table {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    #[default]
    Euclidean,
    /// Two-column CSV with header `r,sigma`; balls are taken as isoperimetric sets.
    Table { path: PathBuf },
}

/// `r_max = "auto"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RMax {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for RMax {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            RMax::Auto => s.serialize_str("auto"),
            RMax::Fixed(r) => s.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for RMax {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) => Ok(RMax::Fixed(r)),
            Raw::Int(r) => Ok(RMax::Fixed(r as f64)),
            Raw::Text(t) if t == "auto" => Ok(RMax::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("r_max must be a number or \"auto\", got \"{t}\""))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    #[default]
    Uniform,
    Stretched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub n_cells: usize,
    pub r_max: RMax,
    pub grid: GridSpec,
    /// Radius inside which a stretched grid stays nearly uniform.
    pub stretch_core: f64,
    pub cfl: f64,
    pub eps_supp: f64,
    pub eps_reg: Option<f64>,
    pub t_final: f64,
    pub dt_max: f64,
    pub t_first: f64,
    pub amplitude: f64,
    pub radius: f64,
    pub probe_radius: Option<f64>,
    pub stop_on_flag: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            n_cells: d.n_cells,
            r_max: RMax::Auto,
            grid: GridSpec::Uniform,
            stretch_core: 1.0,
            cfl: d.cfl,
            eps_supp: d.eps_supp,
            eps_reg: d.eps_reg,
            t_final: d.t_final,
            dt_max: d.dt_max,
            t_first: d.t_first,
            amplitude: d.initial.amplitude,
            radius: d.initial.radius,
            probe_radius: d.probe_radius,
            stop_on_flag: d.stop_on_flag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Decay and propagation fits plus the mass audit, from one run.
    #[default]
    Subcritical,
    Decay,
    Propagation,
    Mass,
    UniversalBound,
    BlowupProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Domain doublings of the blow-up probe.
    pub doublings: usize,
    /// Runs the experiment once per density exponent, concurrently.
    pub sweep_alpha: Vec<f64>,
    pub tolerances: Tolerances,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::default(),
            doublings: 3,
            sweep_alpha: Vec::new(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingsSpec {
    pub n_cells: usize,
    pub r_max: f64,
    pub family_size: usize,
    pub profile_s_max: f64,
    /// Splitting radius of the weighted embeddings.
    pub split_radius: f64,
    /// Exponent of the sup embedding; defaults to the middle of its range.
    pub p1: Option<f64>,
}

impl Default for EmbeddingsSpec {
    fn default() -> Self {
        Self { n_cells: 4000, r_max: 2.0, family_size: 1000, profile_s_max: 1e3, split_radius: 0.5, p1: None }
    }
}

impl Config {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn exponents(&self) -> Result<Exponents, CliError> {
        let e = self.exponents;
        Exponents::new(e.n, e.p, e.m).map_err(|err| CliError::Config(err.to_string()))
    }

    fn read_table(&self, path: &Path) -> Result<String, CliError> {
        let full = self.base_dir.join(path);
        std::fs::read_to_string(&full).map_err(|e| CliError::Io(format!("{}: {e}", full.display())))
    }

    pub fn density(&self) -> Result<DensityProfile, CliError> {
        Ok(match &self.density {
            DensitySpec::Constant => DensityProfile::constant(),
            DensitySpec::PowerLaw { alpha } => DensityProfile::power_law(*alpha)?,
            DensitySpec::Table { path } => DensityProfile::from_csv(&self.read_table(path)?)?,
        })
    }

    pub fn geometry(&self) -> Result<ManifoldProfile, CliError> {
        Ok(match &self.geometry {
            GeometrySpec::Euclidean => ManifoldProfile::euclidean(self.exponents.n),
            GeometrySpec::Table { path } => {
                ManifoldProfile::from_csv(self.exponents.n, &self.read_table(path)?, IsoFunction::Balls)?
            }
        })
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        Ok(Problem { geometry: self.geometry()?, density: self.density()?, exponents: self.exponents()? })
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            n_cells: s.n_cells,
            domain: match s.r_max {
                RMax::Auto => DomainSize::Auto,
                RMax::Fixed(r) => DomainSize::Fixed(r),
            },
            grid: match s.grid {
                GridSpec::Uniform => GridKind::Uniform,
                GridSpec::Stretched => GridKind::Stretched { core: s.stretch_core },
            },
            cfl: s.cfl,
            eps_supp: s.eps_supp,
            eps_reg: s.eps_reg,
            t_final: s.t_final,
            dt_max: s.dt_max,
            t_first: s.t_first,
            initial: InitialBump { amplitude: s.amplitude, radius: s.radius },
            probe_radius: s.probe_radius,
            stop_on_flag: s.stop_on_flag,
        }
    }

    /// Checks every block against the invariants of the types it builds.
    pub fn validate(&self) -> Result<(), CliError> {
        self.exponents()?;
        let problem = self.problem()?;
        let solver = self.solver_config();
        solver.validate()?;
        if let (GridSpec::Stretched, false) = (self.solver.grid, self.solver.stretch_core > 0.0) {
            return Err(CliError::Config("stretch_core must be positive".into()));
        }
        let t = &self.experiment.tolerances;
        if ![t.sup_exponent, t.interface_exponent, t.window_decades, t.sup_ratio, t.mass_drift].iter().all(|v| *v > 0.0)
        {
            return Err(CliError::Config("tolerances must be positive".into()));
        }
        if !(0.0..=1.0).contains(&t.min_r_squared) {
            return Err(CliError::Config("min_r_squared must lie in [0, 1]".into()));
        }
        if self.experiment.sweep_alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(CliError::Config("sweep_alpha entries must be nonnegative".into()));
        }
        let e = &self.embeddings;
        if e.n_cells < 16 || !(e.r_max > 0.0) || !(e.profile_s_max > 0.0) || !(e.split_radius > 0.0) {
            return Err(CliError::Config("embeddings block needs n_cells >= 16 and positive radii".into()));
        }
        if solver.domain == DomainSize::Auto && self.wants_auto_domain() {
            resolve_domain(&problem, &solver)?;
        }
        Ok(())
    }

    /// Auto domains only matter for experiments that run the solver on the
    /// configured problem directly.
    fn wants_auto_domain(&self) -> bool {
        matches!(
            self.experiment.kind,
            ExperimentKind::Subcritical | ExperimentKind::Decay | ExperimentKind::Propagation | ExperimentKind::Mass
        ) && self.experiment.sweep_alpha.is_empty()
    }

    /// Copy with a power-law density of exponent `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Config {
        Config {
            density: DensitySpec::PowerLaw { alpha },
            experiment: ExperimentSpec { sweep_alpha: Vec::new(), ..self.experiment.clone() },
            ..self.clone()
        }
    }
}

pub fn parse_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Config::from_toml(&text, &base)
}
