//! Declarative run configuration.
//!
//! A run is described by one JSON document with strict field checking and
//! defaults for everything but the physics choices:
//!
//! ```text
//! {
//!   "equation": "heat" | "schrodinger",
//!   "grid": { "n_x": 16, "n_theta": 16 },
//!   "metric": { "kind": "static-flat" }
//!           | { "kind": "breathing", "amplitude": a, "omega": w }
//!           | { "kind": "table", ... },
//!   "nonlinearity": { "kind": "none" }
//!               | { "kind": "power", "alpha": a, "beta": b, "P": p, "P_b": q }
//!               | { "kind": "custom", "name": "saturating" },
//!   "initial": { "profile": "constant" | "gaussian-bump" | "random", ... },
//!   "solver": { "dt": ..., "T": ..., "picard_tol": ..., "M0": ..., ... },
//!   "seed": 0,
//!   "output": "runs/demo",
//!   "sweep": { "parameter": "dt", "values": [...] }
//! }
//! ```
//!
//! [`RunConfig::from_json`] parses and validates; the `build_*` methods
//! construct the concrete grid, metric, reaction term, and seeded initial
//! state. Validation failures carry the offending field and value so a CLI
//! can print them verbatim.

use crate::evolution::{EvolutionError, EvolveConfig};
use crate::geometry::{weights_at, GeometryError, Grid, Metric};
use crate::nonlinearity::{lookup_custom, Nonlinearity, NonlinearityError};
use crate::state::{seeded_rng, Kappa, StateVector};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("configuration does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Solver(#[from] EvolutionError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Mesh resolution: `n_x` axial layers (the first and last are the two
/// boundary circles) by `n_theta` angular nodes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_x: usize,
    pub n_theta: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_x: 16, n_theta: 16 }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, ConfigError> {
        Ok(Grid::build(self.n_x, self.n_theta)?)
    }
}

/// Reaction-term schema. The power-law coefficients are spelled `P` (bulk)
/// and `P_b` (boundary) in the JSON document.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    #[default]
    None,
    Power {
        alpha: f64,
        beta: f64,
        #[serde(rename = "P")]
        p: f64,
        #[serde(rename = "P_b")]
        p_b: f64,
    },
    Custom {
        name: String,
    },
}

impl NonlinearitySpec {
    /// Resolves the schema to a concrete term, checking the growth
    /// admissibility bounds and the custom registry.
    pub fn build(&self) -> Result<Nonlinearity, ConfigError> {
        let term = match self {
            NonlinearitySpec::None => Nonlinearity::None,
            NonlinearitySpec::Power { alpha, beta, p, p_b } => {
                Nonlinearity::Power { alpha: *alpha, beta: *beta, p: *p, p_b: *p_b }
            }
            NonlinearitySpec::Custom { name } => Nonlinearity::Custom(lookup_custom(name)?),
        };
        term.validate_growth(2)?;
        Ok(term)
    }
}

fn default_center_x() -> f64 {
    0.5
}
fn default_width() -> f64 {
    0.2
}
fn default_unit() -> f64 {
    1.0
}

/// Initial-state schema. Random profiles draw from the run seed, so a
/// recorded configuration reproduces the state bit-for-bit.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Spatially constant real value.
    Constant { value: f64 },
    /// Real Gaussian bump; the angular offset uses the shortest periodic
    /// distance, so bumps centered near θ = 0 wrap smoothly.
    GaussianBump {
        #[serde(default = "default_center_x")]
        center_x: f64,
        #[serde(default)]
        center_theta: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "default_unit")]
        amplitude: f64,
    },
    /// Seeded complex random state rescaled to the given reference U-norm.
    Random {
        #[serde(default = "default_unit")]
        norm: f64,
    },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::GaussianBump {
            center_x: default_center_x(),
            center_theta: 0.0,
            width: default_width(),
            amplitude: default_unit(),
        }
    }
}

impl InitialSpec {
    pub fn build(
        &self,
        grid: &Grid,
        metric: &Metric,
        seed: u64,
    ) -> Result<StateVector, ConfigError> {
        match self {
            InitialSpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(ConfigError::Invalid(format!(
                        "initial constant must be finite, got {value}"
                    )));
                }
                Ok(StateVector::constant(grid, C64::new(*value, 0.0)))
            }
            InitialSpec::GaussianBump { center_x, center_theta, width, amplitude } => {
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(ConfigError::Invalid(format!(
                        "bump width must be positive and finite, got {width}"
                    )));
                }
                if !(amplitude.is_finite() && center_x.is_finite() && center_theta.is_finite()) {
                    return Err(ConfigError::Invalid(
                        "bump amplitude and center must be finite".into(),
                    ));
                }
                let inv_two_w2 = 1.0 / (2.0 * width * width);
                Ok(StateVector::from_fn(grid, |x, th| {
                    let dx = x - center_x;
                    let wrapped = (th - center_theta).rem_euclid(TAU);
                    let dth = wrapped.min(TAU - wrapped);
                    debug_assert!((0.0..=PI + 1e-12).contains(&dth));
                    C64::new(amplitude * (-(dx * dx + dth * dth) * inv_two_w2).exp(), 0.0)
                }))
            }
            InitialSpec::Random { norm } => {
                if !(*norm > 0.0 && norm.is_finite()) {
                    return Err(ConfigError::Invalid(format!(
                        "random initial norm must be positive and finite, got {norm}"
                    )));
                }
                let w = weights_at(0.0, grid, metric)?;
                Ok(StateVector::random_with_norm(grid, &mut seeded_rng(seed), &w, *norm))
            }
        }
    }
}

/// Which axis a parameter sweep ranges over.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Step size; the sweep reports the temporal convergence order.
    Dt,
    /// Square grid resolution n (meaning an n×n mesh); reports the spatial
    /// convergence order.
    Grid,
    /// Bulk growth exponent of a power-law term; reports aggregated
    /// trajectory certificates per point.
    Alpha,
    /// Breathing-metric amplitude; reports aggregated trajectory
    /// certificates per point.
    Amplitude,
}

/// A one-parameter family of runs derived from the base configuration.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.values.is_empty() {
            return Err(ConfigError::Invalid("sweep range is empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "sweep values must be finite, got {:?}",
                self.values
            )));
        }
        match self.parameter {
            SweepParameter::Dt => {
                if self.values.iter().any(|&v| v <= 0.0) {
                    return Err(ConfigError::Invalid(
                        "step-size sweep values must be positive".into(),
                    ));
                }
            }
            SweepParameter::Grid => {
                if self.values.iter().any(|&v| v < 3.0 || v.fract() != 0.0) {
                    return Err(ConfigError::Invalid(
                        "grid sweep values must be integers >= 3".into(),
                    ));
                }
            }
            SweepParameter::Alpha => {
                if self.values.iter().any(|&v| v < 1.0) {
                    return Err(ConfigError::Invalid(
                        "growth-exponent sweep values must be >= 1".into(),
                    ));
                }
            }
            SweepParameter::Amplitude => {
                if self.values.iter().any(|&v| v.abs() >= 1.0) {
                    return Err(ConfigError::Invalid(
                        "amplitude sweep values must keep the profile positive (|a| < 1)".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The complete description of one run (or one sweep of runs).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub equation: Kappa,
    pub grid: GridSpec,
    pub metric: Metric,
    pub nonlinearity: NonlinearitySpec,
    pub initial: InitialSpec,
    pub solver: EvolveConfig,
    pub seed: u64,
    /// Output directory; None lets the caller choose.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            equation: Kappa::Heat,
            grid: GridSpec::default(),
            metric: Metric::StaticFlat,
            nonlinearity: NonlinearitySpec::default(),
            initial: InitialSpec::default(),
            solver: EvolveConfig::default(),
            seed: 0,
            output: None,
            sweep: None,
        }
    }
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field validation beyond what the schema enforces.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.metric.validate()?;
        self.grid.build()?;
        self.nonlinearity.build()?;
        self.solver.validate()?;
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
            if matches!(sweep.parameter, SweepParameter::Alpha)
                && !matches!(self.nonlinearity, NonlinearitySpec::Power { .. })
            {
                return Err(ConfigError::Invalid(
                    "a growth-exponent sweep needs a power-law nonlinearity".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid, ConfigError> {
        self.grid.build()
    }

    pub fn build_nonlinearity(&self) -> Result<Nonlinearity, ConfigError> {
        self.nonlinearity.build()
    }

    pub fn build_initial(&self, grid: &Grid) -> Result<StateVector, ConfigError> {
        self.initial.build(grid, &self.metric, self.seed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serialization cannot fail")
    }

    /// A small nonlinear demonstration run on a breathing metric.
    pub fn example() -> RunConfig {
        RunConfig {
            equation: Kappa::Heat,
            grid: GridSpec { n_x: 12, n_theta: 16 },
            metric: Metric::Breathing { amplitude: 0.2, omega: TAU },
            nonlinearity: NonlinearitySpec::Power { alpha: 2.0, beta: 2.0, p: -1.0, p_b: -0.5 },
            initial: InitialSpec::default(),
            solver: EvolveConfig { dt: 5e-3, t_final: 0.5, ..Default::default() },
            seed: 7,
            output: None,
            sweep: None,
        }
    }
}
