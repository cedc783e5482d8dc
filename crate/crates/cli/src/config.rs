//! Experiment configuration: a single JSON file describing the water
//! column, the sound speed model, the noise model, the sweep grid and the
//! output paths. Relative output paths resolve against the directory that
//! holds the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use uwcrb::ssp::{uniform_depths, BasisFunction, NoiseModel, SoundSpeedProfile};

/// The bundled preset: 10 km by 2 km column, demo profile, ten CTD samples.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.json");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config field `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Self::Validation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    fn missing(field: &str) -> Self {
        Self::invalid(field, "missing")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    environment: Option<RawEnvironment>,
    source_depth: Option<f64>,
    grid: Option<RawGrid>,
    profile: Option<RawProfile>,
    noise: Option<RawNoise>,
    monte_carlo: Option<RawPoint>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    horizontal_extent: Option<f64>,
    depth: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n_h: Option<usize>,
    n_z: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    nominal: Option<BasisFunction>,
    basis: Option<Vec<BasisFunction>>,
    coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    sigma_t_sq: Option<f64>,
    sigma_z_sq: Option<f64>,
    sigma_c_sq: Option<f64>,
    samples: Option<SampleRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    h: Option<f64>,
    z_d: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    sweep_csv: Option<PathBuf>,
    point_json: Option<PathBuf>,
    mc_csv: Option<PathBuf>,
    mc_json: Option<PathBuf>,
}

/// Where the CTD samples are taken.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleRule {
    /// `z_m = m · depth / count` for `m = 1..=count`.
    Uniform { count: usize },
    Explicit { depths: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub sweep_csv: PathBuf,
    pub point_json: PathBuf,
    pub mc_csv: PathBuf,
    pub mc_json: PathBuf,
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub horizontal_extent: f64,
    pub depth: f64,
    pub source_depth: f64,
    pub n_h: usize,
    pub n_z: usize,
    pub profile: SoundSpeedProfile,
    pub noise: NoiseModel,
    /// Destination `(h, z_d)` used as ground truth by the Monte Carlo run.
    pub monte_carlo: Option<(f64, f64)>,
    pub output: OutputPaths,
}

impl SweepConfig {
    /// The bundled preset with outputs relative to `base_dir`.
    pub fn preset(base_dir: &Path) -> Self {
        parse_config(DEFAULT_CONFIG, base_dir).expect("bundled preset is valid")
    }

    /// Horizontal grid coordinates, both ends included.
    pub fn h_values(&self) -> Vec<f64> {
        linspace(self.horizontal_extent, self.n_h)
    }

    /// Destination depth grid coordinates, both ends included.
    pub fn z_values(&self) -> Vec<f64> {
        linspace(self.depth, self.n_z)
    }
}

fn linspace(extent: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| extent * i as f64 / (n - 1) as f64).collect()
}

pub fn load_config(path: &Path) -> Result<SweepConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<SweepConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate(raw, base_dir)
}

fn positive(field: &str, v: Option<f64>) -> Result<f64, ConfigError> {
    let v = v.ok_or_else(|| ConfigError::missing(field))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn validate(raw: RawConfig, base_dir: &Path) -> Result<SweepConfig, ConfigError> {
    let env = raw.environment.ok_or_else(|| ConfigError::missing("environment"))?;
    let horizontal_extent = positive("environment.horizontal_extent", env.horizontal_extent)?;
    let depth = positive("environment.depth", env.depth)?;

    let source_depth = raw.source_depth.ok_or_else(|| ConfigError::missing("source_depth"))?;
    if !(0.0..=depth).contains(&source_depth) {
        return Err(ConfigError::invalid("source_depth", format!("must lie in [0, {depth}]")));
    }

    let (n_h, n_z) = match raw.grid {
        Some(g) => (g.n_h.unwrap_or(200), g.n_z.unwrap_or(100)),
        None => (200, 100),
    };
    if n_h < 2 {
        return Err(ConfigError::invalid("grid.n_h", "must be at least 2"));
    }
    if n_z < 2 {
        return Err(ConfigError::invalid("grid.n_z", "must be at least 2"));
    }

    let p = raw.profile.ok_or_else(|| ConfigError::missing("profile"))?;
    let nominal = p.nominal.ok_or_else(|| ConfigError::missing("profile.nominal"))?;
    let basis = p.basis.unwrap_or_default();
    let coefficients = p.coefficients.unwrap_or_else(|| vec![0.0; basis.len()]);
    let profile = SoundSpeedProfile::new(depth, nominal, basis, coefficients)
        .map_err(|e| ConfigError::invalid("profile", e.to_string()))?;

    let n = raw.noise.ok_or_else(|| ConfigError::missing("noise"))?;
    let sigma_t_sq = positive("noise.sigma_t_sq", n.sigma_t_sq)?;
    let sigma_z_sq = positive("noise.sigma_z_sq", n.sigma_z_sq)?;
    let sigma_c_sq = positive("noise.sigma_c_sq", n.sigma_c_sq)?;
    let sample_depths = match n.samples.ok_or_else(|| ConfigError::missing("noise.samples"))? {
        SampleRule::Uniform { count } => {
            if count == 0 {
                return Err(ConfigError::invalid("noise.samples.count", "must be at least 1"));
            }
            uniform_depths(0.0, depth, count)
        }
        SampleRule::Explicit { depths } => depths,
    };
    let noise = NoiseModel {
        sigma_t_sq,
        sigma_z_sq,
        sigma_c_sq,
        sample_depths,
    };
    noise
        .validate(&profile)
        .map_err(|e| ConfigError::invalid("noise.samples", e.to_string()))?;
    uwcrb::ssp::build_sampling_matrix(&profile, &noise.sample_depths)
        .map_err(|e| ConfigError::invalid("noise.samples", e.to_string()))?;

    let monte_carlo = match raw.monte_carlo {
        None => None,
        Some(pt) => {
            let h = pt.h.ok_or_else(|| ConfigError::missing("monte_carlo.h"))?;
            let z_d = pt.z_d.ok_or_else(|| ConfigError::missing("monte_carlo.z_d"))?;
            if !(h > 0.0 && h <= horizontal_extent) {
                return Err(ConfigError::invalid("monte_carlo.h", format!("must lie in (0, {horizontal_extent}]")));
            }
            if !(0.0..=depth).contains(&z_d) {
                return Err(ConfigError::invalid("monte_carlo.z_d", format!("must lie in [0, {depth}]")));
            }
            Some((h, z_d))
        }
    };

    let out = raw.output.unwrap_or_default();
    let resolve = |p: Option<PathBuf>, default: &str| base_dir.join(p.unwrap_or_else(|| PathBuf::from(default)));
    let output = OutputPaths {
        sweep_csv: resolve(out.sweep_csv, "sweep.csv"),
        point_json: resolve(out.point_json, "point.json"),
        mc_csv: resolve(out.mc_csv, "mc.csv"),
        mc_json: resolve(out.mc_json, "mc.json"),
    };

    Ok(SweepConfig {
        horizontal_extent,
        depth,
        source_depth,
        n_h,
        n_z,
        profile,
        noise,
        monte_carlo,
        output,
    })
}
