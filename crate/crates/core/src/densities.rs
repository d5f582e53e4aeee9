//! Closed-form candidate densities for the W-F transition density and their
//! normalization on a grid.
//!
//! All closed forms here are for the Wright-Fisher volatility
//! `sigma(x) = sqrt(x(1-x))`, whose Lamperti transform is `2 asin(sqrt x)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bridge::{BridgeEnsemble, McConfig};
use crate::diffusion::{wf_lamperti, DiffusionSpec};
use crate::error::{Error, Result};
use crate::quad;

/// Sub-intervals of the composite Simpson rule for the chord average of `nu`.
pub const CHORD_SIMPSON_INTERVALS: usize = 64;
/// Default `c` in the GaussA validity test `|x - x0| <= c t`.
pub const GAUSSA_VALIDITY_C: f64 = 5.0;

/// Which expression is used for the variance of the discrete chain after
/// rescaled time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceForm {
    /// `(1 - e^{-t}) x0 (1 - x0)`, the limit of `(1 - (1 - 1/2N)^n) x0(1-x0)`.
    #[default]
    Derived,
    /// `e^{-t} x0 (1 - x0)`, a decaying form sometimes quoted for the same moment.
    Decaying,
}

impl VarianceForm {
    pub fn variance(self, x0: f64, t: f64) -> f64 {
        let factor = match self {
            VarianceForm::Derived => -(-t).exp_m1(),
            VarianceForm::Decaying => (-t).exp(),
        };
        factor * x0 * (1.0 - x0)
    }
}

impl FromStr for VarianceForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "derived" => Ok(Self::Derived),
            "decaying" => Ok(Self::Decaying),
            other => Err(Error::InvalidParameter(format!(
                "unknown variance form '{other}' (expected derived | decaying)"
            ))),
        }
    }
}

/// How Beta parameters are obtained from `(E, Var)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaParameterization {
    /// `alpha = (E(1-E)/Var) E`, `beta = (E(1-E)/Var)(1-E)`.
    #[default]
    TwoStep,
    /// `alpha = (E(1-E)/Var - 1) E`, `beta = (E(1-E)/Var - 1)(1-E)`; the
    /// resulting Beta has exactly mean `E` and variance `Var`.
    ExactMoments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DensityModel {
    #[serde(rename = "ExactMC")]
    ExactMc {
        #[serde(default = "default_n_paths")]
        n_paths: usize,
        #[serde(default = "default_k_steps")]
        k_steps: usize,
        #[serde(default)]
        seed: u64,
    },
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "AECorrected")]
    AeCorrected,
    GaussA,
    GaussianMoment {
        #[serde(default)]
        variance_form: VarianceForm,
    },
    BetaMoment {
        #[serde(default)]
        variance_form: VarianceForm,
        #[serde(default)]
        parameterization: BetaParameterization,
    },
    #[serde(rename = "MutationAE")]
    MutationAe {
        beta1: f64,
        beta2: f64,
    },
    #[serde(rename = "SelectionAE")]
    SelectionAe {
        alpha: f64,
        h: f64,
    },
}

fn default_n_paths() -> usize {
    crate::bridge::DEFAULT_N_PATHS
}

fn default_k_steps() -> usize {
    crate::bridge::DEFAULT_K_STEPS
}

impl DensityModel {
    pub fn name(&self) -> &'static str {
        match self {
            DensityModel::ExactMc { .. } => "ExactMC",
            DensityModel::Ae => "AE",
            DensityModel::AeCorrected => "AECorrected",
            DensityModel::GaussA => "GaussA",
            DensityModel::GaussianMoment { .. } => "GaussianMoment",
            DensityModel::BetaMoment { .. } => "BetaMoment",
            DensityModel::MutationAe { .. } => "MutationAE",
            DensityModel::SelectionAe { .. } => "SelectionAE",
        }
    }

    /// The four models of the simulation comparison: AE, GaussA,
    /// moment-matched Beta and moment-matched Gaussian.
    pub fn comparison_set() -> Vec<DensityModel> {
        vec![
            DensityModel::Ae,
            DensityModel::GaussA,
            DensityModel::BetaMoment {
                variance_form: VarianceForm::Derived,
                parameterization: BetaParameterization::TwoStep,
            },
            DensityModel::GaussianMoment {
                variance_form: VarianceForm::Derived,
            },
        ]
    }

    /// Unnormalized density value at `x`. `ExactMC` is not available
    /// pointwise; use [`evaluate_model`].
    pub fn density(&self, x0: f64, x: f64, t: f64) -> Result<f64> {
        match *self {
            DensityModel::Ae => ae_density(x0, x, t),
            DensityModel::AeCorrected => ae_corrected_density(x0, x, t),
            DensityModel::GaussA => gauss_approx_density(x0, x, t),
            DensityModel::GaussianMoment { variance_form } => {
                gaussian_moment_density_with(x0, x, t, variance_form)
            }
            DensityModel::BetaMoment {
                variance_form,
                parameterization,
            } => {
                let (a, b) = beta_moment_params(x0, t, variance_form, parameterization)?;
                check_unit_interior("x", x)?;
                Ok(beta_pdf(x, a, b))
            }
            DensityModel::MutationAe { beta1, beta2 } => {
                mutation_ae_density(x0, x, t, beta1, beta2)
            }
            DensityModel::SelectionAe { alpha, h } => selection_ae_density(x0, x, t, alpha, h),
            DensityModel::ExactMc { .. } => Err(Error::Unsupported(
                "ExactMC densities are evaluated on a grid with a shared bridge ensemble".into(),
            )),
        }
    }
}

impl fmt::Display for DensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DensityModel {
    type Err = Error;

    /// Parses a bare model name with default parameters (zero mutation and
    /// selection rates for the drifted AE variants).
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ExactMC" => DensityModel::ExactMc {
                n_paths: default_n_paths(),
                k_steps: default_k_steps(),
                seed: 0,
            },
            "AE" => DensityModel::Ae,
            "AECorrected" => DensityModel::AeCorrected,
            "GaussA" => DensityModel::GaussA,
            "GaussianMoment" => DensityModel::GaussianMoment {
                variance_form: VarianceForm::default(),
            },
            "BetaMoment" => DensityModel::BetaMoment {
                variance_form: VarianceForm::default(),
                parameterization: BetaParameterization::default(),
            },
            "MutationAE" => DensityModel::MutationAe {
                beta1: 0.0,
                beta2: 0.0,
            },
            "SelectionAE" => DensityModel::SelectionAe { alpha: 0.0, h: 0.0 },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown density model '{other}'"
                )))
            }
        })
    }
}

fn check_unit_interior(what: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::domain(what, v, "(0, 1)"));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain("t", t, "(0, inf)"));
    }
    Ok(())
}

/// Exponents of an AE-type prefactor
/// `x0^{p0} (1-x0)^{q0} / (x^{p} (1-x)^{q})`.
#[derive(Debug, Clone, Copy)]
struct AeExponents {
    start_left: f64,
    start_right: f64,
    end_left: f64,
    end_right: f64,
}

impl AeExponents {
    const NEUTRAL: AeExponents = AeExponents {
        start_left: 0.25,
        start_right: 0.25,
        end_left: 0.75,
        end_right: 0.75,
    };
}

fn ae_family(x0: f64, x: f64, t: f64, e: AeExponents) -> Result<f64> {
    check_unit_interior("x0", x0)?;
    check_unit_interior("x", x)?;
    check_time(t)?;
    let dy = wf_lamperti(x) - wf_lamperti(x0);
    let prefactor = x0.powf(e.start_left) * (1.0 - x0).powf(e.start_right)
        / (x.powf(e.end_left) * (1.0 - x).powf(e.end_right));
    Ok(prefactor * (-dy * dy / (2.0 * t)).exp() / (2.0 * PI * t).sqrt())
}

/// AE without the `O(t)` term:
/// `(2 pi t)^{-1/2} (x0(1-x0))^{1/4} / (x(1-x))^{3/4} exp(-(F(x) - F(x0))^2 / 2t)`.
pub fn ae_density(x0: f64, x: f64, t: f64) -> Result<f64> {
    ae_family(x0, x, t, AeExponents::NEUTRAL)
}

/// `1 - (t/2) * mean of nu over the chord [F(x0), F(x)]`, clamped below at 0.
/// At `x = x0` the chord mean is `nu(F(x0))`.
pub fn ae_correction_factor(x0: f64, x: f64, t: f64) -> Result<f64> {
    check_unit_interior("x0", x0)?;
    check_unit_interior("x", x)?;
    check_time(t)?;
    let wf = DiffusionSpec::neutral();
    let y0 = wf_lamperti(x0);
    let y = wf_lamperti(x);
    let nu = |u: f64| wf.nu_with_cap(u, f64::INFINITY).unwrap_or(f64::INFINITY);
    let mean_nu = if (y - y0).abs() < 1e-12 {
        nu(y0)
    } else {
        quad::simpson_fn(nu, y0, y, CHORD_SIMPSON_INTERVALS) / (y - y0)
    };
    Ok((1.0 - 0.5 * t * mean_nu).max(0.0))
}

/// AE multiplied by [`ae_correction_factor`].
pub fn ae_corrected_density(x0: f64, x: f64, t: f64) -> Result<f64> {
    Ok(ae_density(x0, x, t)? * ae_correction_factor(x0, x, t)?)
}

fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-d * d / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
}

/// GaussA: normal density with mean `x0` and variance `t x0 (1 - x0)`.
pub fn gauss_approx_density(x0: f64, x: f64, t: f64) -> Result<f64> {
    check_unit_interior("x0", x0)?;
    check_time(t)?;
    Ok(normal_pdf(x, x0, t * x0 * (1.0 - x0)))
}

/// Whether `x` lies in the range `|x - x0| <= c t` where GaussA is justified.
pub fn gauss_approx_in_validity(x0: f64, x: f64, t: f64, c: f64) -> bool {
    (x - x0).abs() <= c * t
}

/// Moment-matched normal density, mean `x0`, variance `(1 - e^{-t}) x0(1-x0)`.
pub fn gaussian_moment_density(x0: f64, x: f64, t: f64) -> Result<f64> {
    gaussian_moment_density_with(x0, x, t, VarianceForm::Derived)
}

pub fn gaussian_moment_density_with(x0: f64, x: f64, t: f64, form: VarianceForm) -> Result<f64> {
    check_unit_interior("x0", x0)?;
    check_time(t)?;
    Ok(normal_pdf(x, x0, form.variance(x0, t)))
}

/// Beta parameters matched to mean `x0` and the chain variance at time `t`.
pub fn beta_moment_params(
    x0: f64,
    t: f64,
    form: VarianceForm,
    parameterization: BetaParameterization,
) -> Result<(f64, f64)> {
    check_unit_interior("x0", x0)?;
    check_time(t)?;
    let mean = x0;
    let variance = form.variance(x0, t);
    let limit = mean * (1.0 - mean);
    if !(variance < limit) || !(variance > 0.0) {
        return Err(Error::BetaParameters {
            mean,
            variance,
            limit,
        });
    }
    let ratio = limit / variance;
    let scale = match parameterization {
        BetaParameterization::TwoStep => ratio,
        BetaParameterization::ExactMoments => ratio - 1.0,
    };
    Ok((scale * mean, scale * (1.0 - mean)))
}

/// Moment-matched Beta density with the default variance and
/// parameterization.
pub fn beta_moment_density(x0: f64, x: f64, t: f64) -> Result<f64> {
    DensityModel::BetaMoment {
        variance_form: VarianceForm::default(),
        parameterization: BetaParameterization::default(),
    }
    .density(x0, x, t)
}

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Beta(a, b) density at `x` in (0, 1).
pub fn beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
}

/// AE under pure mutation: prefactor
/// `(1-x0)^{1/4-beta1} x0^{1/4-beta2} / ((1-x)^{3/4-beta1} x^{3/4-beta2})`.
pub fn mutation_ae_density(x0: f64, x: f64, t: f64, beta1: f64, beta2: f64) -> Result<f64> {
    ae_family(
        x0,
        x,
        t,
        AeExponents {
            start_left: 0.25 - beta2,
            start_right: 0.25 - beta1,
            end_left: 0.75 - beta2,
            end_right: 0.75 - beta1,
        },
    )
}

/// AE under pure selection: prefactor
/// `x0^{1/4-h} (1-x0)^{1/4+alpha-h} / (x^{3/4-h} (1-x)^{3/4+alpha-h})`.
pub fn selection_ae_density(x0: f64, x: f64, t: f64, alpha: f64, h: f64) -> Result<f64> {
    ae_family(
        x0,
        x,
        t,
        AeExponents {
            start_left: 0.25 - h,
            start_right: 0.25 + alpha - h,
            end_left: 0.75 - h,
            end_right: 0.75 + alpha - h,
        },
    )
}

// -------------------------------------------------------------------------
// Grids

/// Uniform grid on `[eps, 1 - eps]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub eps: f64,
    pub n_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            n_points: 2001,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "grid eps = {} must lie in (0, 0.5)",
                self.eps
            )));
        }
        if self.n_points < 3 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 3 points, got {}",
                self.n_points
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        quad::linspace(self.eps, 1.0 - self.eps, self.n_points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    pub x0: f64,
    pub t: f64,
    pub spec: DiffusionSpec,
}

/// A density sampled on a strictly increasing grid inside `(0, 1)`.
///
/// `values` hold the density as used downstream. After [`normalize`] they
/// integrate to one (Simpson on `grid`) and `norm_constant` records the
/// integral of the raw values; before that `norm_constant` is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub norm_constant: f64,
    pub normalized: bool,
    /// `None` for nonparametric estimates.
    pub model: Option<DensityModel>,
    pub params: Option<DensityParams>,
    /// Monte Carlo standard errors (ExactMC only), same scale as `values`.
    pub std_error: Option<Vec<f64>>,
}

impl GridDensity {
    /// Wraps raw samples; checks shape, ordering and non-negativity.
    pub fn from_values(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::GridMismatch("grid needs at least two points".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch(
                "grid is not strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Format(format!(
                "density value {v} is not finite and >= 0"
            )));
        }
        Ok(Self {
            grid,
            values,
            norm_constant: 1.0,
            normalized: false,
            model: None,
            params: None,
            std_error: None,
        })
    }

    pub fn integral(&self) -> f64 {
        quad::simpson(&self.grid, &self.values)
    }

    pub fn label(&self) -> String {
        self.model
            .map_or_else(|| "ADE".to_string(), |m| m.name().to_string())
    }

    /// Value at `x` by linear interpolation, zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let i = g.partition_point(|&p| p <= x);
        if i == 0 {
            return self.values[0];
        }
        if i >= g.len() {
            return self.values[g.len() - 1];
        }
        let (x0, x1) = (g[i - 1], g[i]);
        let w = (x - x0) / (x1 - x0);
        (1.0 - w) * self.values[i - 1] + w * self.values[i]
    }
}

/// Evaluates `model` on `grid` without normalizing.
///
/// `spec` is only read by `ExactMC`, which shares one bridge ensemble across
/// the whole grid.
pub fn evaluate_model(
    model: &DensityModel,
    spec: &DiffusionSpec,
    x0: f64,
    t: f64,
    grid: &[f64],
) -> Result<GridDensity> {
    let (values, std_error) = match *model {
        DensityModel::ExactMc {
            n_paths,
            k_steps,
            seed,
        } => {
            let cfg = McConfig {
                n_paths,
                k_steps,
                seed,
                ..McConfig::default()
            };
            let ens = BridgeEnsemble::from_config(&cfg)?;
            let vals = ens.exact_density_grid(spec, x0, grid, t, cfg.nu_cap)?;
            (
                vals.iter().map(|v| v.density).collect(),
                Some(vals.iter().map(|v| v.std_error).collect()),
            )
        }
        _ => {
            // Reject invalid model parameters before touching the grid.
            if let DensityModel::BetaMoment {
                variance_form,
                parameterization,
            } = *model
            {
                beta_moment_params(x0, t, variance_form, parameterization)?;
            }
            let vals = grid
                .iter()
                .map(|&x| model.density(x0, x, t))
                .collect::<Result<Vec<f64>>>()?;
            (vals, None)
        }
    };
    let mut density = GridDensity::from_values(grid.to_vec(), values)?;
    density.model = Some(*model);
    density.params = Some(DensityParams { x0, t, spec: *spec });
    density.std_error = std_error;
    Ok(density)
}

/// Divides by the Simpson integral over the grid.
pub fn normalize(mut raw: GridDensity) -> Result<GridDensity> {
    if raw.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Normalization(f64::NAN));
    }
    let constant = raw.integral();
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::Normalization(constant));
    }
    for v in &mut raw.values {
        *v /= constant;
    }
    if let Some(se) = raw.std_error.as_mut() {
        for v in se {
            *v /= constant;
        }
    }
    raw.norm_constant *= constant;
    raw.normalized = true;
    Ok(raw)
}

/// Evaluates and normalizes `model` on the grid described by `grid_spec`.
pub fn model_density(
    model: &DensityModel,
    spec: &DiffusionSpec,
    x0: f64,
    t: f64,
    grid_spec: &GridSpec,
) -> Result<GridDensity> {
    grid_spec.validate()?;
    normalize(evaluate_model(model, spec, x0, t, &grid_spec.points())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ae_centre_value() {
        let v = ae_density(0.5, 0.5, 0.1).unwrap();
        let expected = 2.0 / (0.2 * PI).sqrt();
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 2.523).abs() < 1e-3);
    }

    #[test]
    fn ae_reflection_symmetry() {
        for &(x0, x, t) in &[(0.2, 0.35, 0.1), (0.6, 0.1, 0.3), (0.9, 0.95, 0.01)] {
            let a = ae_density(x0, x, t).unwrap();
            let b = ae_density(1.0 - x0, 1.0 - x, t).unwrap();
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ae_domain_errors() {
        assert!(ae_density(0.0, 0.5, 0.1).is_err());
        assert!(ae_density(0.5, 1.0, 0.1).is_err());
        assert!(ae_density(0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn corrected_factor_at_start_point() {
        let t = 0.2;
        let f = ae_correction_factor(0.5, 0.5, t).unwrap();
        assert!((f - (1.0 - t / 4.0)).abs() < 1e-12);
        let r = ae_correction_factor(0.3, 0.4, 1e-9).unwrap();
        assert!((r - 1.0).abs() < 1e-8);
    }

    #[test]
    fn corrected_factor_bounded_by_one_and_clamped() {
        for &x in &[1e-4, 0.05, 0.3, 0.5, 0.9, 0.9999] {
            let f = ae_correction_factor(0.4, x, 0.3).unwrap();
            assert!((0.0..=1.0).contains(&f));
        }
        assert_eq!(ae_correction_factor(0.5, 1e-6, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn corrected_over_plain_tends_to_one() {
        for &t in &[1e-3, 1e-4] {
            let worst = quad::linspace(0.2, 0.8, 61)
                .into_iter()
                .map(|x| (ae_correction_factor(0.5, x, t).unwrap() - 1.0).abs())
                .fold(0.0, f64::max);
            assert!(worst < 2.0 * t, "t = {t}: {worst}");
        }
    }

    #[test]
    fn gauss_approx_peak() {
        let v = gauss_approx_density(0.5, 0.5, 0.1).unwrap();
        assert!((v - (2.0 * PI * 0.025).powf(-0.5)).abs() < 1e-14);
        assert!((v - 2.5231).abs() < 1e-4);
        assert!(gauss_approx_in_validity(0.5, 0.6, 0.1, GAUSSA_VALIDITY_C));
        assert!(!gauss_approx_in_validity(0.5, 0.9, 0.05, GAUSSA_VALIDITY_C));
    }

    #[test]
    fn gaussian_moment_variance() {
        let var = VarianceForm::Derived.variance(0.5, 0.5);
        assert!((var - 0.098_367_335_071_841_64).abs() < 1e-12);
        // Small-t agreement with GaussA.
        let ratio = VarianceForm::Derived.variance(0.3, 1e-6) / (1e-6 * 0.21);
        assert!((ratio - 1.0).abs() < 1e-5);
        // Mode stays at x0.
        let at = |x| gaussian_moment_density(0.3, x, 0.4).unwrap();
        assert!(at(0.3) > at(0.299) && at(0.3) > at(0.301));
    }

    #[test]
    fn gauss_approx_close_to_moment_gaussian_for_small_t() {
        let sup_gap = |x0: f64, t: f64| {
            quad::linspace(x0 - t, x0 + t, 101)
                .into_iter()
                .map(|x| {
                    (gauss_approx_density(x0, x, t).unwrap()
                        - gaussian_moment_density(x0, x, t).unwrap())
                    .abs()
                })
                .fold(0.0, f64::max)
        };
        let x0 = 0.4;
        for &t in &[0.005, 0.01, 0.02] {
            let peak = gauss_approx_density(x0, x0, t).unwrap();
            assert!(sup_gap(x0, t) < 0.01 * peak, "t = {t}");
        }
        // The peaks differ by the factor sqrt(t / (1 - e^{-t})) ~ 1 + t/4, so
        // at t = 0.1 the gap is about 2.5% of the peak.
        let t = 0.1;
        let peak = gaussian_moment_density(x0, x0, t).unwrap();
        let expected = (t / -(-t).exp_m1()).sqrt() - 1.0;
        assert!((sup_gap(x0, t) / peak - expected).abs() < 1e-3);
    }

    #[test]
    fn beta_two_step_parameters() {
        let t = 0.3;
        let (a, b) =
            beta_moment_params(0.5, t, VarianceForm::Derived, BetaParameterization::TwoStep)
                .unwrap();
        assert_eq!(a, b);
        let x0 = 0.2;
        let (a, b) =
            beta_moment_params(x0, t, VarianceForm::Derived, BetaParameterization::TwoStep)
                .unwrap();
        let ratio = 1.0 / (1.0 - (-t).exp());
        assert!((a - ratio * x0).abs() < 1e-12);
        assert!((b - ratio * (1.0 - x0)).abs() < 1e-12);
        // Mean is matched exactly; the variance of this parameterization is
        // E(1-E) / (ratio + 1).
        assert!((a / (a + b) - x0).abs() < 1e-12);
        let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
        assert!((var - x0 * (1.0 - x0) / (ratio + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn beta_exact_moment_parameters() {
        for &(x0, t) in &[(0.3, 0.1), (0.1, 0.45), (0.8, 1.5)] {
            let (a, b) = beta_moment_params(
                x0,
                t,
                VarianceForm::Derived,
                BetaParameterization::ExactMoments,
            )
            .unwrap();
            let mean = a / (a + b);
            let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
            assert!((mean - x0).abs() < 1e-10);
            assert!((var - (1.0 - (-t).exp()) * x0 * (1.0 - x0)).abs() < 1e-10);
        }
    }

    #[test]
    fn beta_large_t_limit_and_rejection() {
        let (a, b) = beta_moment_params(
            0.3,
            20.0,
            VarianceForm::Derived,
            BetaParameterization::TwoStep,
        )
        .unwrap();
        assert!((a - 0.3).abs() < 1e-8 && (b - 0.7).abs() < 1e-8);
        // The printed variance e^{-t} x0(1-x0) reaches E(1-E) at t = 0.
        let err = beta_moment_params(
            0.3,
            1e-300,
            VarianceForm::Decaying,
            BetaParameterization::TwoStep,
        );
        assert!(matches!(err, Err(Error::BetaParameters { .. })));
        let err = beta_moment_params(
            0.3,
            50.0,
            VarianceForm::Derived,
            BetaParameterization::ExactMoments,
        );
        assert!(matches!(err, Err(Error::BetaParameters { .. })));
    }

    #[test]
    fn beta_pdf_matches_closed_form() {
        // Beta(2, 3) at 0.4: 12 * 0.4 * 0.36
        assert!((beta_pdf(0.4, 2.0, 3.0) - 12.0 * 0.4 * 0.36).abs() < 1e-12);
    }

    #[test]
    fn drifted_ae_reduce_to_neutral_exactly() {
        for &(x0, x, t) in &[(0.3, 0.6, 0.1), (0.05, 0.9, 0.4), (0.5, 0.5, 0.01)] {
            let base = ae_density(x0, x, t).unwrap();
            assert_eq!(mutation_ae_density(x0, x, t, 0.0, 0.0).unwrap(), base);
            assert_eq!(selection_ae_density(x0, x, t, 0.0, 0.0).unwrap(), base);
        }
    }

    #[test]
    fn mutation_ratio_identity() {
        let (x0, x, t, b1, b2) = (0.3, 0.6, 0.1, 0.1, 0.05);
        let expected = ae_density(x0, x, t).unwrap()
            * (1.0f64 - x0).powf(-b1)
            * x0.powf(-b2)
            * (1.0f64 - x).powf(b1)
            * x.powf(b2);
        let got = mutation_ae_density(x0, x, t, b1, b2).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-13);
    }

    #[test]
    fn mutation_weakens_left_singularity() {
        // x-exponent 3/4 - 1/4 = 1/2: halving x scales the prefactor by sqrt 2.
        let t = 1e3;
        let r = mutation_ae_density(0.5, 1e-6, t, 0.0, 0.25).unwrap()
            / mutation_ae_density(0.5, 2e-6, t, 0.0, 0.25).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn selection_matches_m_diff() {
        let (x0, x, t, alpha, h) = (0.3, 0.6, 0.1, 0.7, 0.2);
        let spec = DiffusionSpec::with_selection(alpha, h).unwrap();
        let y0 = spec.lamperti_forward(x0).unwrap();
        let y = spec.lamperti_forward(x).unwrap();
        let from_m = spec.m_diff(y0, y).unwrap().exp();
        let closed = ((x0 * (1.0 - x0)) / (x * (1.0 - x))).powf(0.25 - h)
            * ((1.0 - x0) / (1.0 - x)).powf(alpha);
        assert!((from_m - closed).abs() < 1e-12);
        // density = q_t * exp(M(y) - M(y0)) / sigma(x)
        let q = (-(y - y0).powi(2) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
        let expected = q * closed / spec.sigma(x).unwrap();
        let got = selection_ae_density(x0, x, t, alpha, h).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-12);
        // alpha > 0 raises the (1 - x) exponent only.
        let plain = selection_ae_density(x0, 0.9, t, 0.0, h).unwrap();
        let sel = selection_ae_density(x0, 0.9, t, 0.5, h).unwrap();
        let ratio = ((1.0 - x0) / (1.0 - 0.9f64)).powf(0.5);
        assert!((sel / plain / ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mutation_matches_m_diff() {
        let (x0, x, b1, b2) = (0.25, 0.55, 0.15, 0.05);
        let spec = DiffusionSpec::with_mutation(b1, b2).unwrap();
        let y0 = spec.lamperti_forward(x0).unwrap();
        let y = spec.lamperti_forward(x).unwrap();
        let closed = ((1.0 - x0) / (1.0 - x)).powf(0.25 - b1) * (x0 / x).powf(0.25 - b2);
        assert!((spec.m_diff(y0, y).unwrap().exp() - closed).abs() < 1e-12);
    }

    #[test]
    fn reflected_argmax() {
        let grid = GridSpec::default().points();
        let argmax = |f: &dyn Fn(f64) -> f64| {
            grid.iter()
                .copied()
                .max_by(|a, b| f(*a).total_cmp(&f(*b)))
                .unwrap()
        };
        let (x0, t) = (0.3, 0.05);
        let m = argmax(&|x| mutation_ae_density(x0, x, t, 0.1, 0.2).unwrap());
        let r = argmax(&|x| mutation_ae_density(1.0 - x0, x, t, 0.2, 0.1).unwrap());
        assert!((m - (1.0 - r)).abs() < 1e-9);
        let m = argmax(&|x| ae_density(x0, x, t).unwrap());
        let r = argmax(&|x| ae_density(1.0 - x0, x, t).unwrap());
        assert!((m - (1.0 - r)).abs() < 1e-9);
    }

    #[test]
    fn normalize_gaussian_constant_near_one() {
        let g = evaluate_model(
            &DensityModel::GaussA,
            &DiffusionSpec::neutral(),
            0.5,
            0.01,
            &GridSpec::default().points(),
        )
        .unwrap();
        let n = normalize(g).unwrap();
        assert!((n.norm_constant - 1.0).abs() < 1e-6);
        assert!((n.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_ae_constant_may_exceed_one() {
        // Reference integral over [1e-4, 1 - 1e-4] from mpmath.
        let d = model_density(
            &DensityModel::Ae,
            &DiffusionSpec::neutral(),
            0.5,
            0.45,
            &GridSpec::default(),
        )
        .unwrap();
        assert!(
            (d.norm_constant - 1.146_909_788_913_250_6).abs() < 5e-3,
            "{}",
            d.norm_constant
        );
        assert!((d.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalize_stable_under_refinement() {
        let spec = DiffusionSpec::neutral();
        let c1 = model_density(&DensityModel::Ae, &spec, 0.3, 0.1, &GridSpec::default())
            .unwrap()
            .norm_constant;
        let fine = GridSpec {
            n_points: 4001,
            ..GridSpec::default()
        };
        let c2 = model_density(&DensityModel::Ae, &spec, 0.3, 0.1, &fine)
            .unwrap()
            .norm_constant;
        assert!((c1 / c2 - 1.0).abs() < 1e-4, "{c1} vs {c2}");
    }

    #[test]
    fn normalize_rejects_zero_mass() {
        let g = GridDensity::from_values(vec![0.1, 0.2, 0.3], vec![0.0; 3]).unwrap();
        assert!(matches!(normalize(g), Err(Error::Normalization(_))));
    }

    #[test]
    fn beta_model_error_surfaces_from_grid_evaluation() {
        let model = DensityModel::BetaMoment {
            variance_form: VarianceForm::Derived,
            parameterization: BetaParameterization::ExactMoments,
        };
        let err = model_density(
            &model,
            &DiffusionSpec::neutral(),
            0.5,
            60.0,
            &GridSpec::default(),
        );
        assert!(matches!(err, Err(Error::BetaParameters { .. })));
    }

    #[test]
    fn model_names_round_trip() {
        for name in [
            "ExactMC",
            "AE",
            "AECorrected",
            "GaussA",
            "GaussianMoment",
            "BetaMoment",
            "MutationAE",
            "SelectionAE",
        ] {
            let m: DensityModel = name.parse().unwrap();
            assert_eq!(m.name(), name);
            let json = serde_json::to_string(&m).unwrap();
            let back: DensityModel = serde_json::from_str(&json).unwrap();
            assert_eq!(back, m);
        }
        assert!("Lognormal".parse::<DensityModel>().is_err());
    }
}
