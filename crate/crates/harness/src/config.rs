//! Experiment configuration: a JSON document where every field has a
//! default, so `{}` is a complete configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use wf_core::densities::{DensityModel, GridSpec};
use wf_core::diffusion::DiffusionSpec;
use wf_core::kde::KdeConfig;

use crate::error::{HarnessError, Result};

/// Environment variable naming the directory relative output paths live under.
pub const OUTPUT_ROOT_ENV: &str = "WFDENS_OUTPUT_ROOT";

/// Discrete simulation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub two_n: u32,
    pub n_gen: u32,
    pub x0: Vec<f64>,
    pub n_traj: usize,
    /// Also write `trajectory,generation,count` CSVs next to the binaries.
    pub export_csv: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            two_n: 1000,
            n_gen: 500,
            x0: (1..=9).map(|k| k as f64 / 10.0).collect(),
            n_traj: 100,
            export_csv: false,
        }
    }
}

/// Bridge Monte Carlo settings for `ExactMC` densities requested by name
/// (the `density` command and figures). Entries of `models` carry their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McParams {
    pub n_paths: usize,
    pub k_steps: usize,
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            n_paths: wf_core::bridge::DEFAULT_N_PATHS,
            k_steps: wf_core::bridge::DEFAULT_K_STEPS,
        }
    }
}

/// Figure layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    pub bins: usize,
    pub panel_x0: Vec<f64>,
    pub panel_t: Vec<f64>,
    pub exact_x0: f64,
    pub exact_t: Vec<f64>,
    /// Grid points for curves drawn from the bridge Monte Carlo.
    pub exact_points: usize,
    /// Embed a generation timestamp; off keeps SVGs byte-stable.
    pub timestamp: bool,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            bins: 50,
            panel_x0: vec![0.1, 0.3, 0.5],
            panel_t: vec![0.1, 0.25, 0.45],
            exact_x0: 0.5,
            exact_t: vec![0.1, 0.3, 0.5],
            exact_points: 201,
            timestamp: false,
        }
    }
}

/// `n` log-spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: DiffusionSpec,
    pub protocol: Protocol,
    pub t: Vec<f64>,
    pub models: Vec<DensityModel>,
    pub mc: McParams,
    pub kde: KdeConfig,
    pub quadrature: GridSpec,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub figures: FigureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spec: DiffusionSpec::neutral(),
            protocol: Protocol::default(),
            t: log_grid(0.001, 0.5, 50),
            models: DensityModel::comparison_set(),
            mc: McParams::default(),
            kde: KdeConfig::default(),
            quadrature: GridSpec::default(),
            seed: 20_240_601,
            output_dir: PathBuf::from("wfdens-out"),
            figures: FigureConfig::default(),
        }
    }
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: {msg}"))
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `path.to.field` inside a JSON object, creating objects on the way.
/// Numeric segments index into arrays.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(field_err(path, "empty path segment"));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| field_err(path, format!("'{part}' is not an array index")))?;
                let len = items.len();
                items.get_mut(idx).ok_or_else(|| {
                    field_err(path, format!("index {idx} out of range (length {len})"))
                })?
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert(Value::Null),
            other => {
                if other.is_null() {
                    *other = Value::Object(Default::default());
                    other
                        .as_object_mut()
                        .unwrap()
                        .entry(part.to_string())
                        .or_insert(Value::Null)
                } else {
                    return Err(field_err(path, format!("cannot descend into '{part}'")));
                }
            }
        };
        if last {
            *cur = value;
            return Ok(());
        }
    }
    unreachable!("path has at least one segment")
}

impl ExperimentConfig {
    /// Parses a configuration document, reporting the offending field path.
    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            field_err(if path == "." { "config" } else { &path }, e.into_inner())
        })?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config: {e}")))?;
        Self::from_value(value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Applies `path.to.field=value` overrides. Values are read as JSON when
    /// they parse, otherwise as strings.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut value =
            serde_json::to_value(&self).map_err(|e| HarnessError::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (path, raw) = item.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("override '{item}' is not path=value"))
            })?;
            set_path(&mut value, path.trim(), parse_value(raw.trim()))?;
        }
        Self::from_value(value)
    }

    /// Resolves a relative output directory under `root`.
    pub fn resolve_output(&mut self, root: Option<&Path>) {
        if let Some(root) = root {
            if self.output_dir.is_relative() {
                self.output_dir = root.join(&self.output_dir);
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Checks every field, naming the first invalid one.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate().map_err(|e| field_err("spec", e))?;
        let p = &self.protocol;
        if !(2..=u16::MAX as u32).contains(&p.two_n) {
            return Err(field_err(
                "protocol.two_n",
                format!("{} is outside [2, {}]", p.two_n, u16::MAX),
            ));
        }
        if p.n_gen == 0 {
            return Err(field_err("protocol.n_gen", "must be positive"));
        }
        if p.n_traj == 0 {
            return Err(field_err("protocol.n_traj", "must be positive"));
        }
        if p.x0.is_empty() {
            return Err(field_err("protocol.x0", "needs at least one value"));
        }
        if let Some((i, v)) =
            p.x0.iter()
                .enumerate()
                .find(|(_, v)| !(**v > 0.0 && **v < 1.0))
        {
            return Err(field_err(
                &format!("protocol.x0.{i}"),
                format!("{v} is outside (0, 1)"),
            ));
        }
        if self.t.is_empty() {
            return Err(field_err("t", "needs at least one value"));
        }
        let t_max = p.n_gen as f64 / p.two_n as f64;
        if let Some((i, v)) = self
            .t
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && (**v * p.two_n as f64).round() <= p.n_gen as f64))
        {
            return Err(field_err(
                &format!("t.{i}"),
                format!("{v} is outside (0, {t_max}]"),
            ));
        }
        if self.models.is_empty() {
            return Err(field_err("models", "needs at least one model"));
        }
        if self.mc.n_paths < 2 {
            return Err(field_err("mc.n_paths", "must be at least 2"));
        }
        if self.mc.k_steps < 2 {
            return Err(field_err("mc.k_steps", "must be at least 2"));
        }
        self.kde.validate().map_err(|e| field_err("kde", e))?;
        self.quadrature
            .validate()
            .map_err(|e| field_err("quadrature", e))?;
        let f = &self.figures;
        if f.bins == 0 {
            return Err(field_err("figures.bins", "must be positive"));
        }
        if f.exact_points < 3 {
            return Err(field_err("figures.exact_points", "must be at least 3"));
        }
        if !(f.exact_x0 > 0.0 && f.exact_x0 < 1.0) {
            return Err(field_err("figures.exact_x0", "must lie in (0, 1)"));
        }
        Ok(())
    }
}
