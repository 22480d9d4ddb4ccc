//! TOML run configuration (`thermal-kms/config/v1`) and model construction.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::greens::{Argument, GreenFunctional, MixtureSpec, QuasiFreeSpec};
use crate::kernel::{Atom, CovarianceKernel, KernelError, MatsubaraSeries, SpectralMeasure, ThermalCircle, TimeProfile};
use crate::spectral::{Dispersion, DispersionKind, MomentumGrid, NodeRecord, TestFunction, TestFunctionRecord};

pub const CONFIG_SCHEMA: &str = "thermal-kms/config/v1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn invalid(field: impl Into<String>, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    pub beta: f64,
    pub model: ModelConfig,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionConfig>,
    pub points: Vec<PointConfig>,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Free {
        dispersion: DispersionKind,
        mu: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<String>,
    },
    GeneralizedFree {
        dispersion: DispersionKind,
        floor: f64,
        atoms: Vec<Atom>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<String>,
    },
    Mixture {
        dispersion: DispersionKind,
        floor: f64,
        atoms: Vec<Atom>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionConfig {
    /// Normalized Gaussian packet on a trapezoid grid.
    Packet {
        name: String,
        dim: usize,
        center: Vec<f64>,
        width: f64,
        #[serde(default = "default_nodes")]
        nodes_per_axis: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    /// Explicit `(k, weight, value)` nodes.
    Nodes {
        name: String,
        dim: usize,
        #[serde(default)]
        real: bool,
        nodes: Vec<NodeRecord>,
    },
}

fn default_nodes() -> usize {
    33
}

impl TestFunctionConfig {
    pub fn name(&self) -> &str {
        match self {
            Self::Packet { name, .. } | Self::Nodes { name, .. } => name,
        }
    }
}

/// One argument; exactly one of `tau`, `delta_comb`, `series` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub test_function: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// `[[tau, weight], ...]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_comb: Option<Vec<(f64, f64)>>,
    /// Matsubara coefficients `c_0, c_1, ...` as `[re, im]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Time shifts for the invariance audit; defaults to `k beta / 7`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Vec<f64>>,
}

fn default_samples() -> usize {
    200_000
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: default_samples(),
            tolerances: Tolerances::default(),
            shifts: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative PSD tolerance of Gram reports.
    pub psd: f64,
    /// Absolute deviation allowed by the invariance audit.
    pub invariance: f64,
    /// Relative gap between the pairing and finite-difference moments.
    pub derivative: f64,
    /// Relative size below which a cumulant counts as zero.
    pub cumulant: f64,
    /// Standard errors allowed in Monte Carlo comparisons.
    pub sigma: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            psd: 1e-10,
            invariance: 1e-11,
            derivative: 1e-6,
            cumulant: 1e-10,
            sigma: 4.0,
        }
    }
}

/// The Green functional a config describes.
#[derive(Clone, Debug)]
pub enum Model {
    QuasiFree(QuasiFreeSpec),
    Mixture(MixtureSpec),
}

impl Model {
    pub fn functional(&self) -> &dyn GreenFunctional {
        match self {
            Self::QuasiFree(s) => s,
            Self::Mixture(m) => m,
        }
    }

    pub fn circle(&self) -> ThermalCircle {
        *self.functional().circle()
    }

    /// Covariance form: `B` itself, or the second-moment kernel of a mixture.
    pub fn kernel(&self) -> CovarianceKernel {
        match self {
            Self::QuasiFree(s) => s.covariance.clone(),
            Self::Mixture(m) => CovarianceKernel::Mixed {
                measure: m.measure.clone(),
                kind: m.kind,
            },
        }
    }

    /// Whether all cumulants above order two must vanish.
    pub fn expects_quasi_free(&self) -> bool {
        match self {
            Self::QuasiFree(_) => true,
            Self::Mixture(m) => !m.measure.has_distinct_atoms(),
        }
    }

    /// Dispersion used for the `-1` Sobolev norm.
    pub fn norm_dispersion(&self) -> Dispersion {
        let (kind, mu) = match self.kernel() {
            CovarianceKernel::Free(d) => return d,
            CovarianceKernel::Mixed { measure, kind } => (kind, measure.floor()),
        };
        Dispersion { kind, mu }
    }
}

/// A parsed config with its model and arguments built.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: Config,
    pub model: Model,
    pub points: Vec<Argument>,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        if config.schema != CONFIG_SCHEMA {
            return Err(invalid("schema", format!("expected `{CONFIG_SCHEMA}`, got `{}`", config.schema)));
        }
        Ok(config)
    }

    pub fn shifts(&self) -> Vec<f64> {
        self.run
            .shifts
            .clone()
            .unwrap_or_else(|| (1..7).map(|k| k as f64 * self.beta / 7.0).collect())
    }

    pub fn load(self) -> Result<Loaded> {
        let circle = ThermalCircle::new(self.beta).map_err(|e| invalid("beta", e))?;
        let functions = self.build_test_functions()?;
        let lookup = |field: String, name: &str| {
            functions
                .get(name)
                .cloned()
                .ok_or_else(|| invalid(field, format!("unknown test function `{name}`")))
        };
        let model = match &self.model {
            ModelConfig::Free { dispersion, mu, mean } => {
                let d = Dispersion::new(*dispersion, *mu).map_err(|e| invalid("model.mu", e))?;
                let mut spec = QuasiFreeSpec::free(d, circle);
                if let Some(m) = mean {
                    spec = spec.with_mean(lookup("model.mean".into(), m)?);
                }
                Model::QuasiFree(spec)
            }
            ModelConfig::GeneralizedFree {
                dispersion,
                floor,
                atoms,
                mean,
            } => {
                let measure = build_measure(*floor, atoms)?;
                let mut spec = QuasiFreeSpec::generalized_free(measure, *dispersion, circle);
                if let Some(m) = mean {
                    spec = spec.with_mean(lookup("model.mean".into(), m)?);
                }
                Model::QuasiFree(spec)
            }
            ModelConfig::Mixture { dispersion, floor, atoms } => {
                Model::Mixture(MixtureSpec::new(build_measure(*floor, atoms)?, *dispersion, circle))
            }
        };
        if self.points.is_empty() {
            return Err(invalid("points", "at least one point is required"));
        }
        let mut points = Vec::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            let field = format!("points[{i}]");
            let f = lookup(format!("{field}.test_function"), &p.test_function)?;
            let profile = build_profile(p, &circle, &field)?;
            if let Some(first) = points.first().map(|a: &Argument| &a.f) {
                if !f.compatible(first) {
                    return Err(invalid(format!("{field}.test_function"), "grid differs from points[0]"));
                }
            }
            points.push(Argument::new(profile, f));
        }
        if let Some(mean) = match &self.model {
            ModelConfig::Free { mean, .. } | ModelConfig::GeneralizedFree { mean, .. } => mean.as_ref(),
            ModelConfig::Mixture { .. } => None,
        } {
            if !functions[mean].compatible(&points[0].f) {
                return Err(invalid("model.mean", "grid differs from the points"));
            }
        }
        Ok(Loaded {
            config: self,
            model,
            points,
        })
    }

    fn build_test_functions(&self) -> Result<BTreeMap<String, TestFunction>> {
        let mut out = BTreeMap::new();
        // packets with equal grid parameters share one grid
        let mut grids: Vec<((usize, usize, u64), Arc<MomentumGrid>)> = Vec::new();
        for (i, tf) in self.test_functions.iter().enumerate() {
            let field = format!("test_functions[{i}]");
            let f = match tf {
                TestFunctionConfig::Packet {
                    dim,
                    center,
                    width,
                    nodes_per_axis,
                    cutoff,
                    ..
                } => {
                    if center.len() != *dim {
                        return Err(invalid(format!("{field}.center"), format!("expected {dim} components")));
                    }
                    let cutoff = cutoff.unwrap_or_else(|| TestFunction::default_cutoff(center, *width));
                    let key = (*dim, *nodes_per_axis, cutoff.to_bits());
                    let grid = match grids.iter().find(|(k, _)| *k == key) {
                        Some((_, g)) => g.clone(),
                        None => {
                            let g = Arc::new(
                                MomentumGrid::trapezoid(*dim, *nodes_per_axis, cutoff)
                                    .map_err(|e| invalid(field.clone(), e))?,
                            );
                            grids.push((key, g.clone()));
                            g
                        }
                    };
                    TestFunction::gaussian_packet_on(grid, center, *width).map_err(|e| invalid(field.clone(), e))?
                }
                TestFunctionConfig::Nodes { dim, real, nodes, .. } => TestFunction::from_record(&TestFunctionRecord {
                    dim: *dim,
                    real: *real,
                    nodes: nodes.clone(),
                })
                .map_err(|e| invalid(format!("{field}.nodes"), e))?,
            };
            if out.insert(tf.name().to_string(), f).is_some() {
                return Err(invalid(format!("{field}.name"), format!("duplicate name `{}`", tf.name())));
            }
        }
        Ok(out)
    }
}

fn build_measure(floor: f64, atoms: &[Atom]) -> Result<SpectralMeasure> {
    SpectralMeasure::new(floor, atoms.to_vec()).map_err(|e| match e {
        KernelError::InvalidMeasure { field, reason } => invalid(format!("model.{field}"), reason),
        KernelError::EmptyMeasure => invalid("model.atoms", e),
        other => invalid("model", other),
    })
}

fn build_profile(p: &PointConfig, circle: &ThermalCircle, field: &str) -> Result<TimeProfile> {
    let profile = match (p.tau, &p.delta_comb, &p.series) {
        (Some(tau), None, None) => TimeProfile::delta_comb(circle, vec![(tau, 1.0)])
            .map_err(|e| invalid(format!("{field}.tau"), e))?,
        (None, Some(terms), None) => TimeProfile::delta_comb(circle, terms.clone())
            .map_err(|e| invalid(format!("{field}.delta_comb"), e))?,
        (None, None, Some(coeffs)) => {
            let c: Vec<Complex64> = coeffs.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
            TimeProfile::MatsubaraSeries(
                MatsubaraSeries::from_nonnegative(&c).map_err(|e| invalid(format!("{field}.series"), e))?,
            )
        }
        _ => return Err(invalid(field, "exactly one of `tau`, `delta_comb`, `series` is required")),
    };
    Ok(profile)
}
