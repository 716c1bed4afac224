//! Experiment configuration: a TOML tree, optionally patched with `key=value`
//! overrides, deserialized into [`ExperimentConfig`].
//!
//! ```toml
//! master_seed = 2019
//! n = 10
//! d = 2.0
//! iterations = 5000
//! repetitions = 10
//! p_values = [0.0, 0.5, 0.9]
//! nu_values = [1]
//! schemes = ["sgc", "bgc", { kind = "erasurehead" }]
//!
//! [data]
//! source = "synthetic"
//! m = 1000
//! ell = 100
//!
//! [schedule]
//! type = "empirical"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgc_core::experiment::Instance;
use sgc_core::rng;
use sgc_core::{ProjectionSpec, SchemeKind, SchemeSpec, StepSchedule, SynthConfig};
use thiserror::Error;

/// Master seed used when neither the config nor `--seed` provides one.
pub const DEFAULT_SEED: u64 = 2019;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("override {key:?}: {message}")]
    Override { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    /// Number of workers.
    pub n: usize,
    /// Target average redundancy.
    pub d: f64,
    /// Iterations per run (`T`).
    pub iterations: usize,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default = "default_window")]
    pub floor_window: usize,
    pub p_values: Vec<f64>,
    #[serde(default = "default_nu")]
    pub nu_values: Vec<usize>,
    pub schemes: Vec<SchemeEntry>,
    pub data: DataConfig,
    /// Schedule for schemes that do not name their own.
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn one() -> usize {
    1
}
fn default_window() -> usize {
    sgc_core::metrics::FLOOR_WINDOW
}
fn default_nu() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    Synthetic(SyntheticData),
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    #[serde(default = "recipe_m")]
    pub m: usize,
    #[serde(default = "recipe_ell")]
    pub ell: usize,
    #[serde(default = "recipe_feature_std")]
    pub feature_std: f64,
    #[serde(default = "recipe_noise")]
    pub label_noise_std: f64,
    #[serde(default = "recipe_low")]
    pub coeff_low: i64,
    #[serde(default = "recipe_high")]
    pub coeff_high: i64,
    #[serde(default)]
    pub unit_rows: bool,
    /// Data seed; derived from the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn recipe_m() -> usize {
    SynthConfig::reference_recipe(0).m
}
fn recipe_ell() -> usize {
    SynthConfig::reference_recipe(0).ell
}
fn recipe_feature_std() -> f64 {
    SynthConfig::reference_recipe(0).feature_std
}
fn recipe_noise() -> f64 {
    SynthConfig::reference_recipe(0).label_noise_std
}
fn recipe_low() -> i64 {
    SynthConfig::reference_recipe(0).coeff_low
}
fn recipe_high() -> i64 {
    SynthConfig::reference_recipe(0).coeff_high
}

impl SyntheticData {
    pub fn to_synth(&self, master_seed: u64) -> SynthConfig {
        SynthConfig {
            m: self.m,
            ell: self.ell,
            feature_std: self.feature_std,
            label_noise_std: self.label_noise_std,
            coeff_low: self.coeff_low,
            coeff_high: self.coeff_high,
            unit_rows: self.unit_rows,
            seed: self
                .seed
                .unwrap_or_else(|| rng::derive_seed(master_seed, rng::tag::DATA, &[])),
        }
    }
}

/// Step-size schedule as written in a config. Constants left out are taken from the
/// instance: the empirical normalizer defaults to `‖XᵀX‖₂`, the l2 schedule spectral
/// norm to `‖XᵀX‖₂/m` and `λ` to `λ_min(XᵀX)/m` (the mean-loss constants).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Empirical {
        #[serde(default = "empirical_scale")]
        scale: f64,
        #[serde(default = "empirical_power")]
        power: f64,
        #[serde(default = "empirical_log")]
        log_base_exponent: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normalizer: Option<f64>,
    },
    TheoremL2 {
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spectral_norm: Option<f64>,
    },
    InverseLambdaT {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
}

fn empirical_scale() -> f64 {
    7.0
}
fn empirical_power() -> f64 {
    0.7
}
fn empirical_log() -> f64 {
    100.0
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::Empirical {
            scale: empirical_scale(),
            power: empirical_power(),
            log_base_exponent: empirical_log(),
            normalizer: None,
        }
    }
}

impl ScheduleConfig {
    pub fn resolve(&self, inst: &Instance) -> StepSchedule {
        match *self {
            ScheduleConfig::Empirical {
                scale,
                power,
                log_base_exponent,
                normalizer,
            } => StepSchedule::Empirical {
                scale,
                power,
                log_base_exponent,
                normalizer: normalizer.unwrap_or(inst.spectral.spectral_norm),
            },
            ScheduleConfig::TheoremL2 {
                epsilon,
                spectral_norm,
            } => StepSchedule::TheoremL2 {
                epsilon,
                spectral_norm: spectral_norm.unwrap_or_else(|| inst.mean_smoothness()),
            },
            ScheduleConfig::InverseLambdaT { lambda } => StepSchedule::InverseLambdaT {
                lambda: lambda.unwrap_or_else(|| inst.mean_strong_convexity()),
            },
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let ok = match *self {
            ScheduleConfig::Empirical {
                scale,
                power,
                log_base_exponent,
                normalizer,
            } => {
                positive(scale)
                    && power.is_finite()
                    && positive(log_base_exponent)
                    && normalizer.is_none_or(positive)
            }
            ScheduleConfig::TheoremL2 {
                epsilon,
                spectral_norm,
            } => epsilon > 0.0 && epsilon < 1.0 && spectral_norm.is_none_or(positive),
            ScheduleConfig::InverseLambdaT { lambda } => lambda.is_none_or(positive),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("schedule constants out of range: {self:?}")))
        }
    }
}

/// A scheme given either by name or as a table with its own schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemeEntry {
    Name(String),
    Full(SchemeConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_assumed: Option<f64>,
}

impl SchemeEntry {
    pub fn kind(&self) -> Result<SchemeKind, ConfigError> {
        let name = match self {
            SchemeEntry::Name(s) => s,
            SchemeEntry::Full(c) => &c.kind,
        };
        name.parse().map_err(|e| invalid(format!("{e}")))
    }

    fn schedule(&self) -> Option<&ScheduleConfig> {
        match self {
            SchemeEntry::Name(_) => None,
            SchemeEntry::Full(c) => c.schedule.as_ref(),
        }
    }

    fn p_assumed(&self) -> Option<f64> {
        match self {
            SchemeEntry::Name(_) => None,
            SchemeEntry::Full(c) => c.p_assumed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    /// Radius of the ℓ2 ball iterates are projected onto; absent means unconstrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

/// Constants for the `bounds` command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Overrides `λ_min(XᵀX)` in the strongly convex bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Overrides the closed-form per-row gradient bound `C²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_sq: Option<f64>,
}

fn default_epsilon() -> f64 {
    0.1
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            lambda: None,
            c_sq: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides in order, then validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut tree: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut tree, ov)?;
        }
        let cfg: ExperimentConfig = tree
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative CSV data path is resolved against the
    /// directory holding the config.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        if let DataConfig::Csv { path: data, .. } = &mut cfg.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(invalid("n must be >= 1"));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(invalid("d must be positive"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions must be >= 1"));
        }
        if self.floor_window == 0 {
            return Err(invalid("floor_window must be >= 1"));
        }
        if self.p_values.is_empty() {
            return Err(invalid("p_values is empty"));
        }
        if let Some(p) = self.p_values.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(invalid(format!("p = {p} is outside [0, 1)")));
        }
        if self.nu_values.is_empty() || self.nu_values.contains(&0) {
            return Err(invalid("nu_values must be non-empty and >= 1"));
        }
        if self.schemes.is_empty() {
            return Err(invalid("schemes is empty"));
        }
        for s in &self.schemes {
            s.kind()?;
            if let Some(sched) = s.schedule() {
                sched.validate()?;
            }
            if let Some(p) = s.p_assumed() {
                if !(0.0..1.0).contains(&p) {
                    return Err(invalid(format!("p_assumed = {p} is outside [0, 1)")));
                }
            }
        }
        self.schedule.validate()?;
        if let Some(r) = self.projection.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("projection radius must be positive"));
            }
        }
        if !(self.bounds.epsilon > 0.0 && self.bounds.epsilon < 1.0) {
            return Err(invalid("bounds.epsilon must lie in (0, 1)"));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(invalid("master_seed must fit in a signed 64-bit integer"));
        }
        if let DataConfig::Synthetic(s) = &self.data {
            s.to_synth(self.master_seed)
                .validate()
                .map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn scheme_kinds(&self) -> Vec<SchemeKind> {
        self.schemes.iter().map(|s| s.kind().expect("validated")).collect()
    }

    /// Concrete scheme specs for an instance, in config order.
    pub fn scheme_specs(&self, inst: &Instance) -> Vec<SchemeSpec> {
        self.schemes
            .iter()
            .map(|s| SchemeSpec {
                kind: s.kind().expect("validated"),
                schedule: s.schedule().unwrap_or(&self.schedule).resolve(inst),
                p_assumed: s.p_assumed(),
            })
            .collect()
    }

    pub fn projection_spec(&self) -> ProjectionSpec {
        ProjectionSpec {
            radius: self.projection.radius,
        }
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML value and
/// falls back to a bare string; array elements are addressed by index.
pub fn apply_override(tree: &mut toml::Value, assignment: &str) -> Result<(), ConfigError> {
    let err = |message: &str| ConfigError::Override {
        key: assignment.to_string(),
        message: message.to_string(),
    };
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| err("expected key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(err("empty key segment"));
    }
    let value = parse_value(raw.trim());
    let segments: Vec<&str> = key.split('.').collect();
    let (last, parents) = segments.split_last().expect("non-empty");

    let mut node = tree;
    for seg in parents {
        node = match node {
            toml::Value::Table(t) => t
                .entry(seg.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let i: usize = seg.parse().map_err(|_| err("array index expected"))?;
                a.get_mut(i).ok_or_else(|| err("array index out of range"))?
            }
            _ => return Err(err("path descends into a scalar")),
        };
    }
    match node {
        toml::Value::Table(t) => {
            t.insert(last.to_string(), value);
        }
        toml::Value::Array(a) => {
            let i: usize = last.parse().map_err(|_| err("array index expected"))?;
            *a.get_mut(i).ok_or_else(|| err("array index out of range"))? = value;
        }
        _ => return Err(err("path descends into a scalar")),
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
