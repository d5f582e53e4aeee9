//! Beta-kernel density estimation on `[0, 1]` with Lepski bandwidth choice.
//!
//! The kernel at evaluation point `t` is the Beta(t/b + 1, (1-t)/b + 1)
//! density in the sample variable. Sample values at exactly 0 or 1 add
//! nothing to the sum but still count towards `n`, so boundary atoms leave
//! the estimate with total mass below one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{ln_beta, GridDensity};
use crate::error::{Error, Result};
use crate::quad::{self, linspace};

pub const DEFAULT_B_MAX: f64 = 0.5;
pub const DEFAULT_LEVELS: usize = 12;
pub const DEFAULT_LEPSKI_C: f64 = 1.0;
pub const DEFAULT_EVAL_POINTS: usize = 512;

/// Beta kernel `K_{t,b}(x)`; zero outside the open unit interval.
pub fn beta_kernel(t: f64, b: f64, x: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return 0.0;
    }
    let (p, q) = (t / b + 1.0, (1.0 - t) / b + 1.0);
    ((p - 1.0) * x.ln() + (q - 1.0) * (-x).ln_1p() - ln_beta(p, q)).exp()
}

/// Interior sample points with cached logarithms.
struct PreparedSample {
    n: usize,
    ln_x: Vec<f64>,
    ln_1mx: Vec<f64>,
}

impl PreparedSample {
    fn new(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(&bad) = sample.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain("sample value", bad, "[0, 1]"));
        }
        let interior: Vec<f64> = sample
            .iter()
            .copied()
            .filter(|&x| x > 0.0 && x < 1.0)
            .collect();
        Ok(Self {
            n: sample.len(),
            ln_x: interior.iter().map(|x| x.ln()).collect(),
            ln_1mx: interior.iter().map(|x| (-x).ln_1p()).collect(),
        })
    }

    fn evaluate(&self, b: f64, grid: &[f64]) -> Vec<f64> {
        let n = self.n as f64;
        grid.par_iter()
            .map(|&t| {
                let (a1, b1) = (t / b, (1.0 - t) / b);
                let ln_norm = ln_beta(a1 + 1.0, b1 + 1.0);
                let sum: f64 = self
                    .ln_x
                    .iter()
                    .zip(&self.ln_1mx)
                    .map(|(lx, l1x)| (a1 * lx + b1 * l1x - ln_norm).exp())
                    .sum();
                sum / n
            })
            .collect()
    }
}

/// Scale of the tolerance in the Lepski comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Majorant {
    /// `C * sqrt(ln n / (n sqrt(b')))` at every evaluation point.
    #[default]
    Global,
    /// The global tolerance times `sqrt(rho(t, b'))`, where
    /// `rho = sqrt(pi b') * ∫ K_{t,b'}²` is the kernel's squared L² norm
    /// relative to its value at `t = 1/2`. It grows near 0 and 1 where the
    /// estimator variance is of order `1 / (n b')` rather than `1 / (n sqrt(b'))`.
    Local,
}

impl std::str::FromStr for Majorant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Self::Global),
            "local" => Ok(Self::Local),
            other => Err(Error::InvalidParameter(format!(
                "unknown majorant '{other}'"
            ))),
        }
    }
}

/// `sqrt(pi b) * ∫ K_{t,b}(x)² dx`, close to 1 at `t = 1/2` for small `b`.
pub fn kernel_norm_ratio(t: f64, b: f64) -> f64 {
    let (p, q) = (t / b + 1.0, (1.0 - t) / b + 1.0);
    let l2 = (ln_beta(2.0 * p - 1.0, 2.0 * q - 1.0) - 2.0 * ln_beta(p, q)).exp();
    (std::f64::consts::PI * b).sqrt() * l2
}

/// Settings for [`lepski_select`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdeConfig {
    pub b_max: f64,
    pub levels: usize,
    /// Explicit candidate list; overrides `b_max` and `levels` when set.
    pub b_grid: Option<Vec<f64>>,
    pub c: f64,
    pub eval_points: usize,
    pub majorant: Majorant,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            b_max: DEFAULT_B_MAX,
            levels: DEFAULT_LEVELS,
            b_grid: None,
            c: DEFAULT_LEPSKI_C,
            eval_points: DEFAULT_EVAL_POINTS,
            majorant: Majorant::Global,
        }
    }
}

impl KdeConfig {
    /// Candidates in decreasing order, `b_max * 2^-k` by default.
    pub fn candidates(&self) -> Vec<f64> {
        match &self.b_grid {
            Some(grid) => {
                let mut g = grid.clone();
                g.sort_by(|a, b| b.total_cmp(a));
                g.dedup();
                g
            }
            None => (0..self.levels)
                .map(|k| self.b_max * 0.5f64.powi(k as i32))
                .collect(),
        }
    }

    pub fn eval_grid(&self) -> Vec<f64> {
        linspace(0.0, 1.0, self.eval_points)
    }

    pub fn validate(&self) -> Result<()> {
        let cands = self.candidates();
        if cands.is_empty() {
            return Err(Error::InvalidParameter(
                "the bandwidth grid is empty".into(),
            ));
        }
        if let Some(&b) = cands.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::domain("b", b, "(0, inf)"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::domain("C", self.c, "(0, inf)"));
        }
        if self.eval_points < 3 {
            return Err(Error::InvalidParameter(
                "need at least 3 evaluation points".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the Lepski comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LepskiRow {
    pub b: f64,
    /// `C * sqrt(ln n / (n sqrt(b)))`, the tolerance when this `b` is the
    /// finer one (before any pointwise scaling).
    pub threshold: f64,
    /// Largest `sup|f_b - f_b'| / threshold(b')` over finer `b'`; 0 for the finest.
    pub worst_ratio: f64,
    pub passed: bool,
}

/// A Beta-kernel estimate together with how its bandwidth was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaKernelEstimate {
    pub sample_size: usize,
    pub b: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub b_grid: Vec<f64>,
    pub selected_index: usize,
    /// Set when only the finest bandwidth passed the comparison.
    pub fallback: bool,
    pub table: Vec<LepskiRow>,
}

impl BetaKernelEstimate {
    pub fn integral(&self) -> f64 {
        quad::simpson(&self.grid, &self.values)
    }

    /// The estimate as an (unnormalized) grid density labelled ADE.
    pub fn to_grid_density(&self) -> Result<GridDensity> {
        GridDensity::from_values(self.grid.clone(), self.values.clone())
    }
}

/// Estimate with a fixed bandwidth.
pub fn kde_evaluate(sample: &[f64], b: f64, grid: &[f64]) -> Result<BetaKernelEstimate> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::domain("b", b, "(0, inf)"));
    }
    let prepared = PreparedSample::new(sample)?;
    Ok(BetaKernelEstimate {
        sample_size: sample.len(),
        b,
        grid: grid.to_vec(),
        values: prepared.evaluate(b, grid),
        b_grid: vec![b],
        selected_index: 0,
        fallback: false,
        table: Vec::new(),
    })
}

/// Picks the largest `b` whose estimate stays within the tolerance of every
/// finer candidate, and returns the estimate at that `b`.
pub fn lepski_select(sample: &[f64], cfg: &KdeConfig) -> Result<BetaKernelEstimate> {
    cfg.validate()?;
    let prepared = PreparedSample::new(sample)?;
    let b_grid = cfg.candidates();
    let grid = cfg.eval_grid();
    let estimates: Vec<Vec<f64>> = b_grid
        .iter()
        .map(|&b| prepared.evaluate(b, &grid))
        .collect();

    let n = prepared.n as f64;
    let thresholds: Vec<f64> = b_grid
        .iter()
        .map(|&b| cfg.c * (n.ln() / (n * b.sqrt())).sqrt())
        .collect();

    let scale: Vec<Vec<f64>> = b_grid
        .iter()
        .map(|&b| match cfg.majorant {
            Majorant::Global => vec![1.0; grid.len()],
            Majorant::Local => grid
                .iter()
                .map(|&t| kernel_norm_ratio(t, b).sqrt())
                .collect(),
        })
        .collect();

    let table: Vec<LepskiRow> = (0..b_grid.len())
        .map(|k| {
            let worst_ratio = (k + 1..b_grid.len())
                .map(|j| {
                    estimates[k]
                        .iter()
                        .zip(&estimates[j])
                        .zip(&scale[j])
                        .map(|((a, b), s)| {
                            let d = (a - b).abs();
                            let tol = thresholds[j] * s;
                            if tol > 0.0 {
                                d / tol
                            } else if d == 0.0 {
                                0.0
                            } else {
                                f64::INFINITY
                            }
                        })
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            LepskiRow {
                b: b_grid[k],
                threshold: thresholds[k],
                worst_ratio,
                passed: worst_ratio <= 1.0,
            }
        })
        .collect();

    // The finest candidate has nothing to compare against and always passes.
    let last = b_grid.len() - 1;
    let selected_index = table.iter().position(|r| r.passed).unwrap_or(last);
    let fallback = selected_index == last;
    let values = estimates
        .into_iter()
        .nth(selected_index)
        .expect("index in range");
    Ok(BetaKernelEstimate {
        sample_size: prepared.n,
        b: b_grid[selected_index],
        grid,
        values,
        b_grid,
        selected_index,
        fallback,
        table,
    })
}

/// The selected bandwidth alone.
pub fn lepski_select_b(sample: &[f64], cfg: &KdeConfig) -> Result<f64> {
    lepski_select(sample, cfg).map(|e| e.b)
}
