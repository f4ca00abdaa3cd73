//! Experiment configuration.
//!
//! A flat TOML document with a single `[domain]` table:
//!
//! ```toml
//! kind = "asymptotics"
//! samples = 2000000
//! seed = 7
//! d_schedule = [0.05, 0.1, 0.2]
//! directions = ["normal", "tangential", "explicit:1+0i;0.5-0.5i"]
//!
//! [domain]
//! name = "ellipsoid"
//! weights = [1.0, 4.0]
//! ```
//!
//! Every key except `kind` and `[domain]` has a default.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bergman_lab::{
    Complex64, DomainKind, DomainSpec, EnvelopeRegime, GramSettings, KappaConvention, MVariant,
    NormalTermConvention, SamplingMode,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SAMPLES: u64 = 2_000_000;
pub const DEFAULT_BLOCKS: usize = 16;
pub const DEFAULT_SCHEDULE: [f64; 6] = [0.05, 0.075, 0.1, 0.15, 0.2, 0.3];
pub const DEFAULT_COMPARE_RADII: [f64; 4] = [0.0, 0.3, 0.6, 0.9];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Kernel,
    Metric,
    Squeeze,
    Asymptotics,
    Compare,
    All,
}

impl ExperimentKind {
    pub fn includes(self, part: ExperimentKind) -> bool {
        self == part || self == ExperimentKind::All
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Tabular,
    Structured,
}

/// How the Bergman metric is computed from a Gram model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MetricRoute {
    #[default]
    Hessian,
    Quotient,
}

/// Where metric values for the asymptotic and comparison experiments come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MetricSource {
    /// Closed form on balls, Gram model elsewhere.
    #[default]
    Auto,
    Model,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainName {
    Ball,
    Disc,
    Ellipsoid,
    PerturbedBall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub name: DomainName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collar_width: Option<f64>,
}

impl DomainConfig {
    pub fn build(&self) -> Result<DomainSpec, ConfigError> {
        let unused = |field: &str, present: bool| {
            if present {
                Err(ConfigError::invalid(format!("domain.{field}"), format!("not a parameter of {:?}", self.name)))
            } else {
                Ok(())
            }
        };
        let err = |field: &'static str| move |e: bergman_lab::DomainError| ConfigError::invalid(format!("domain.{field}"), e.to_string());
        let domain = match self.name {
            DomainName::Ball | DomainName::Disc => {
                unused("weights", self.weights.is_some())?;
                unused("epsilon", self.epsilon.is_some())?;
                let n = match (self.name, self.dimension) {
                    (DomainName::Disc, None | Some(1)) => 1,
                    (DomainName::Disc, Some(_)) => {
                        return Err(ConfigError::invalid("domain.dimension", "a disc has dimension 1"))
                    }
                    (_, n) => n.unwrap_or(2),
                };
                if n == 0 {
                    return Err(ConfigError::invalid("domain.dimension", "must be at least 1"));
                }
                let radius = self.radius.unwrap_or(1.0);
                DomainSpec::ball(n, radius).map_err(err("radius"))?
            }
            DomainName::Ellipsoid => {
                unused("radius", self.radius.is_some())?;
                unused("epsilon", self.epsilon.is_some())?;
                let weights = self.weights.clone().unwrap_or_else(|| vec![1.0, 4.0]);
                if let Some(n) = self.dimension {
                    if n != weights.len() {
                        return Err(ConfigError::invalid(
                            "domain.dimension",
                            format!("{n} does not match the {} weights", weights.len()),
                        ));
                    }
                }
                DomainSpec::ellipsoid(&weights).map_err(err("weights"))?
            }
            DomainName::PerturbedBall => {
                unused("radius", self.radius.is_some())?;
                unused("weights", self.weights.is_some())?;
                let n = self.dimension.unwrap_or(2);
                if n == 0 {
                    return Err(ConfigError::invalid("domain.dimension", "must be at least 1"));
                }
                DomainSpec::perturbed_ball(n, self.epsilon.unwrap_or(0.05)).map_err(err("epsilon"))?
            }
        };
        match self.collar_width {
            Some(w) => domain.with_collar_width(w).map_err(err("collar_width")),
            None => Ok(domain),
        }
    }
}

/// A tangent vector, given relative to the boundary frame it is used at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DirectionSpec {
    /// Unit complex normal.
    Normal,
    /// First vector of the orthonormal complex tangent basis.
    Tangential,
    /// `(normal + tangential)/√2`.
    Mixed,
    /// Fixed coordinates.
    Explicit(Vec<Complex64>),
}

impl fmt::Display for DirectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectionSpec::Normal => f.write_str("normal"),
            DirectionSpec::Tangential => f.write_str("tangential"),
            DirectionSpec::Mixed => f.write_str("mixed"),
            DirectionSpec::Explicit(v) => {
                let parts: Vec<String> = v.iter().map(|c| format!("{}{:+}i", c.re, c.im)).collect();
                write!(f, "explicit:{}", parts.join(";"))
            }
        }
    }
}

impl FromStr for DirectionSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(DirectionSpec::Normal),
            "tangential" => Ok(DirectionSpec::Tangential),
            "mixed" => Ok(DirectionSpec::Mixed),
            _ => {
                let body = s
                    .strip_prefix("explicit:")
                    .ok_or_else(|| format!("unknown direction `{s}` (normal, tangential, mixed, explicit:<c1>;<c2>...)"))?;
                let coords = body
                    .split(';')
                    .map(|c| Complex64::from_str(c.trim()).map_err(|_| format!("bad complex number `{c}`")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(DirectionSpec::Explicit(coords))
            }
        }
    }
}

impl TryFrom<String> for DirectionSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DirectionSpec> for String {
    fn from(d: DirectionSpec) -> Self {
        d.to_string()
    }
}

fn default_samples() -> u64 {
    DEFAULT_SAMPLES
}
fn default_blocks() -> usize {
    DEFAULT_BLOCKS
}
fn default_schedule() -> Vec<f64> {
    DEFAULT_SCHEDULE.to_vec()
}
fn default_directions() -> Vec<DirectionSpec> {
    vec![DirectionSpec::Normal, DirectionSpec::Tangential, DirectionSpec::Mixed]
}
fn default_random_directions() -> usize {
    10
}
fn default_truncation() -> f64 {
    GramSettings::default().truncation_threshold
}
fn default_cutoff() -> f64 {
    GramSettings::default().condition_cutoff
}
fn default_envelope_tolerance() -> f64 {
    0.3
}
fn default_metric_tolerance() -> f64 {
    0.02
}
fn default_kernel_tolerance() -> f64 {
    0.01
}
fn default_sigmas() -> f64 {
    3.0
}
fn default_squeeze_constant() -> f64 {
    1.0
}
fn default_regularity() -> u32 {
    4
}
fn default_compare_radii() -> Vec<f64> {
    DEFAULT_COMPARE_RADII.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Maximal monomial degree; 10 for n = 1, 8 for n = 2, 6 above when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default)]
    pub sampling: SamplingMode,
    /// Boundary distances `|δ|` along the inner normal through the exposed point.
    #[serde(default = "default_schedule")]
    pub d_schedule: Vec<f64>,
    #[serde(default = "default_directions")]
    pub directions: Vec<DirectionSpec>,
    /// Extra seeded directions used at the reference point.
    #[serde(default = "default_random_directions")]
    pub random_directions: usize,
    #[serde(default)]
    pub kappa: KappaConvention,
    #[serde(default)]
    pub normal_term: NormalTermConvention,
    #[serde(default)]
    pub m_variant: MVariant,
    #[serde(default)]
    pub method: MetricRoute,
    #[serde(default)]
    pub metric_source: MetricSource,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_truncation")]
    pub truncation_threshold: f64,
    #[serde(default = "default_cutoff")]
    pub condition_cutoff: f64,
    /// Linear unless the domain is only C³ at the exposed point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_regime: Option<EnvelopeRegime>,
    #[serde(default = "default_envelope_tolerance")]
    pub envelope_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_max_constant: Option<f64>,
    #[serde(default = "default_metric_tolerance")]
    pub metric_tolerance: f64,
    #[serde(default = "default_kernel_tolerance")]
    pub kernel_tolerance: f64,
    /// Width of Monte-Carlo error bars in standard errors.
    #[serde(default = "default_sigmas")]
    pub sandwich_sigmas: f64,
    #[serde(default = "default_squeeze_constant")]
    pub squeeze_constant: f64,
    #[serde(default = "default_regularity")]
    pub regularity: u32,
    /// Points `(ρ·R, 0, …)` of a ball of radius `R` for the comparison experiment.
    #[serde(default = "default_compare_radii")]
    pub compare_radii: Vec<f64>,
    pub domain: DomainConfig,
}

impl ExperimentConfig {
    /// A config with every default filled in.
    pub fn new(kind: ExperimentKind, domain: DomainConfig) -> Self {
        Self {
            kind,
            degree: None,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            blocks: DEFAULT_BLOCKS,
            sampling: SamplingMode::default(),
            d_schedule: default_schedule(),
            directions: default_directions(),
            random_directions: default_random_directions(),
            kappa: KappaConvention::default(),
            normal_term: NormalTermConvention::default(),
            m_variant: MVariant::default(),
            method: MetricRoute::default(),
            metric_source: MetricSource::default(),
            format: OutputFormat::default(),
            out: None,
            truncation_threshold: default_truncation(),
            condition_cutoff: default_cutoff(),
            envelope_regime: None,
            envelope_tolerance: default_envelope_tolerance(),
            envelope_max_constant: None,
            metric_tolerance: default_metric_tolerance(),
            kernel_tolerance: default_kernel_tolerance(),
            sandwich_sigmas: default_sigmas(),
            squeeze_constant: default_squeeze_constant(),
            regularity: default_regularity(),
            compare_radii: default_compare_radii(),
            domain,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let config = Self::from_toml(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn domain_spec(&self) -> Result<DomainSpec, ConfigError> {
        self.domain.build()
    }

    pub fn degree_for(&self, n: usize) -> u32 {
        self.degree.unwrap_or(match n {
            1 => 10,
            2 => 8,
            _ => 6,
        })
    }

    pub fn gram_settings(&self) -> GramSettings {
        GramSettings { truncation_threshold: self.truncation_threshold, condition_cutoff: self.condition_cutoff }
    }

    pub fn regime_for(&self, domain: &DomainSpec) -> EnvelopeRegime {
        self.envelope_regime.unwrap_or(match domain.kind() {
            DomainKind::PerturbedBall { epsilon } if *epsilon > 0.0 => EnvelopeRegime::Sqrt,
            _ => EnvelopeRegime::Linear,
        })
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let domain = self.domain_spec()?;
        let n = domain.dimension();
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must be a positive finite number, got {v}")))
            }
        };
        if self.degree == Some(0) {
            return Err(ConfigError::invalid("degree", "must be at least 1"));
        }
        if self.samples == 0 {
            return Err(ConfigError::invalid("samples", "must be positive"));
        }
        if self.blocks == 0 || self.blocks as u64 > self.samples {
            return Err(ConfigError::invalid("blocks", format!("must lie in [1, samples], got {}", self.blocks)));
        }
        if self.d_schedule.is_empty() {
            return Err(ConfigError::invalid("d_schedule", "must not be empty"));
        }
        let collar = domain.collar_width();
        for (i, &d) in self.d_schedule.iter().enumerate() {
            if !(d.is_finite() && d > 0.0 && d <= collar) {
                return Err(ConfigError::invalid(
                    format!("d_schedule[{i}]"),
                    format!("{d} is outside (0, {collar}] (collar width)"),
                ));
            }
        }
        if self.directions.is_empty() {
            return Err(ConfigError::invalid("directions", "must not be empty"));
        }
        for (i, dir) in self.directions.iter().enumerate() {
            if let DirectionSpec::Explicit(v) = dir {
                if v.len() != n {
                    return Err(ConfigError::invalid(
                        format!("directions[{i}]"),
                        format!("has {} coordinates, the domain has dimension {n}", v.len()),
                    ));
                }
                if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) || v.iter().all(|c| c.norm() == 0.0) {
                    return Err(ConfigError::invalid(format!("directions[{i}]"), "must be finite and nonzero"));
                }
            }
        }
        if !(self.truncation_threshold > 0.0 && self.truncation_threshold < 1.0) {
            return Err(ConfigError::invalid("truncation_threshold", "must lie in (0, 1)"));
        }
        if !(self.condition_cutoff > 1.0) {
            return Err(ConfigError::invalid("condition_cutoff", "must exceed 1"));
        }
        positive("envelope_tolerance", self.envelope_tolerance)?;
        if let Some(c) = self.envelope_max_constant {
            positive("envelope_max_constant", c)?;
        }
        positive("metric_tolerance", self.metric_tolerance)?;
        positive("kernel_tolerance", self.kernel_tolerance)?;
        positive("sandwich_sigmas", self.sandwich_sigmas)?;
        positive("squeeze_constant", self.squeeze_constant)?;
        if !matches!(self.regularity, 3 | 4) {
            return Err(ConfigError::invalid("regularity", format!("must be 3 or 4, got {}", self.regularity)));
        }
        for (i, &r) in self.compare_radii.iter().enumerate() {
            if !(0.0..1.0).contains(&r) {
                return Err(ConfigError::invalid(format!("compare_radii[{i}]"), format!("{r} is outside [0, 1)")));
            }
        }
        if self.metric_source == MetricSource::ClosedForm && bergman_lab::kernel_exact(&domain, &domain.reference_point()).is_none() {
            return Err(ConfigError::invalid("metric_source", format!("no closed form on {}", domain.id())));
        }
        Ok(())
    }
}

/// Parses a kebab-case enum value the same way the config file does.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).map_err(|e| e.to_string())
}
