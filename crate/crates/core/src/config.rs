//! Problem configuration: strict JSON schema and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{Arity, ExponentField, FieldError, DEFAULT_SCAN_RESOLUTION, DEFAULT_ZETA_TOL};
use crate::kernel::KernelOptions;
use crate::spaces::{DEFAULT_DICTIONARY_SIZE, DEFAULT_SAFETY_FACTOR};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl ConfigError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_gauss")]
    pub gauss_order: usize,
    #[serde(default = "default_grading")]
    pub grading_depth: usize,
    /// `null` means `10 |Ω|`.
    #[serde(default)]
    pub tail_radius: Option<f64>,
    #[serde(default = "default_budget")]
    pub node_budget: usize,
}

fn default_gauss() -> usize {
    4
}
fn default_grading() -> usize {
    6
}
fn default_budget() -> usize {
    8_000_000
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            gauss_order: default_gauss(),
            grading_depth: default_grading(),
            tail_radius: None,
            node_budget: default_budget(),
        }
    }
}

impl QuadratureConfig {
    pub fn kernel_options(&self) -> KernelOptions {
        KernelOptions {
            gauss_order: self.gauss_order,
            grading_depth: self.grading_depth,
            tail_radius: self.tail_radius,
            node_budget: self.node_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol_residual: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_path_points")]
    pub path_points: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_tol() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    5000
}
fn default_path_points() -> usize {
    41
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_residual: default_tol(),
            max_iters: default_max_iters(),
            path_points: default_path_points(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default = "default_dictionary")]
    pub dictionary_size: usize,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
}

fn default_dictionary() -> usize {
    DEFAULT_DICTIONARY_SIZE
}
fn default_safety() -> f64 {
    DEFAULT_SAFETY_FACTOR
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dictionary_size: default_dictionary(),
            safety_factor: default_safety(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub omega: [f64; 2],
    #[serde(default = "default_dimension")]
    pub n: usize,
    pub p: String,
    pub q: String,
    pub s: String,
    pub k: String,
    #[serde(rename = "V")]
    pub v: String,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Number of grid cells `N`.
    pub grid: usize,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default = "default_resolution")]
    pub scan_resolution: usize,
    #[serde(default = "default_zeta")]
    pub zeta_tol: f64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_dimension() -> usize {
    1
}
fn default_resolution() -> usize {
    DEFAULT_SCAN_RESOLUTION
}
fn default_zeta() -> f64 {
    DEFAULT_ZETA_TOL
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Parsed exponent fields of a configuration.
#[derive(Debug, Clone)]
pub struct Fields {
    pub p: ExponentField,
    pub q: ExponentField,
    pub s: ExponentField,
    pub k: ExponentField,
    pub v: ExponentField,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ProblemConfig = serde_json::from_str(text).map_err(|e| ConfigError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.omega[0], self.omega[1])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let [a, b] = self.omega;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(ConfigError::invalid("omega", "must satisfy a < b"));
        }
        if self.n != 1 {
            return Err(ConfigError::invalid("n", "only n = 1 is supported"));
        }
        if self.grid < 64 || !self.grid.is_power_of_two() {
            return Err(ConfigError::invalid("grid", "must be a power of two and at least 64"));
        }
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta), ("lambda", self.lambda)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::invalid(name, format!("{name} must be > 0")));
            }
        }
        let qc = &self.quadrature;
        if qc.gauss_order == 0 {
            return Err(ConfigError::invalid("quadrature.gauss_order", "must be at least 1"));
        }
        if let Some(r) = qc.tail_radius {
            if !(r > 0.5 * (b - a)) {
                return Err(ConfigError::invalid(
                    "quadrature.tail_radius",
                    "must exceed half the length of omega",
                ));
            }
        }
        let sc = &self.solver;
        if !(sc.tol_residual > 0.0) {
            return Err(ConfigError::invalid("solver.tol_residual", "must be > 0"));
        }
        if sc.path_points < 3 {
            return Err(ConfigError::invalid("solver.path_points", "must be at least 3"));
        }
        if self.embedding.dictionary_size == 0 {
            return Err(ConfigError::invalid("embedding.dictionary_size", "must be at least 1"));
        }
        if !(self.embedding.safety_factor > 0.0) {
            return Err(ConfigError::invalid("embedding.safety_factor", "must be > 0"));
        }
        if self.scan_resolution < 2 {
            return Err(ConfigError::invalid("scan_resolution", "must be at least 2"));
        }
        if !(self.zeta_tol > 0.0) {
            return Err(ConfigError::invalid("zeta_tol", "must be > 0"));
        }
        self.fields()?;
        Ok(())
    }

    /// Parse all expressions on `Ω`.
    pub fn fields(&self) -> Result<Fields, ConfigError> {
        let dom = self.domain();
        let r = self.scan_resolution;
        // two-variable fields are scanned on a coarser grid per axis
        let r2 = r.min(129);
        Ok(Fields {
            p: ExponentField::parse("p", &self.p, Arity::One, dom, r)?,
            q: ExponentField::parse("q", &self.q, Arity::Two, dom, r2)?,
            s: ExponentField::parse("s", &self.s, Arity::Two, dom, r2)?,
            k: ExponentField::parse("k", &self.k, Arity::One, dom, r)?,
            v: ExponentField::parse("V", &self.v, Arity::One, dom, r)?,
        })
    }
}
