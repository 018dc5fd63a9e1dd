//! Simulation and analysis of `ρ(x) u_t = div(u^{m-1} |∇u|^{p-2} ∇u)` on
//! radially symmetric model manifolds with a decaying density `ρ`.
//!
//! The crate is split along the questions one asks of the equation:
//!
//! * [`geometry`] and [`density`] describe the data and audit the structural
//!   conditions on volume growth, isoperimetry and the density;
//! * [`regime`] evaluates the closed-form predictions (critical exponent,
//!   propagation radius, decay rates) and classifies a configuration;
//! * [`solver`] integrates the radial equation with a conservative explicit
//!   finite-volume scheme;
//! * [`harness`] turns solver runs into exponent fits and compares them with
//!   the predictions;
//! * [`embeddings`] checks the functional inequalities numerically.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod density;
pub mod embeddings;
pub mod error;
pub mod exponents;
pub mod geometry;
pub mod harness;
pub mod numerics;
pub mod regime;
pub mod solver;
pub mod table;

pub use audit::{AssumptionCheck, AssumptionReport};
pub use density::{DensityKind, DensityProfile};
pub use error::{Error, Result};
pub use exponents::Exponents;
pub use geometry::{IsoFunction, ManifoldProfile, ProfileKind};
pub use harness::{ComparisonReport, DecayFit, Tolerances, Verdict};
pub use regime::{Regime, RegimeReport};
pub use solver::{Problem, RadialGrid, RunRecord, Sample, SolverConfig};
