//! The diffusion `dX = mu(X) dt + X^a (1-X)^b dW` on `[0, 1]`, its Lamperti
//! transform `F(x) = ∫_0^x du / sigma(u)` and the functions of the transformed
//! coordinate used by the density formulas.
//!
//! For the Wright-Fisher case `a = b = 1/2` everything has a closed form:
//! `F(x) = 2 asin(sqrt x)`, `F^{-1}(y) = sin^2(y/2)` and the transformed drift
//! is a combination of `cot y`, `tan(y/2)` and `cot(y/2)`. Mutation and
//! selection drifts are only supported in that case. Other exponents use
//! adaptive quadrature for `F` and a safeguarded Newton iteration for its
//! inverse, with zero drift.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Absolute tolerance for `F` by quadrature and for `|F(F^{-1}(y)) - y|`.
pub const TRANSFORM_TOL: f64 = 1e-10;
/// Default magnitude cap for `nu` / `V` near the singular boundary.
pub const DEFAULT_NU_CAP: f64 = 1e12;
/// Distance from `F(0)` / `F(1)` at which out-of-domain arguments are clamped.
pub const BOUNDARY_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionSpec {
    pub a: f64,
    pub b: f64,
    /// Rescaled selection rate.
    pub alpha: f64,
    /// Heterozygosity.
    pub h: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for DiffusionSpec {
    fn default() -> Self {
        Self::neutral()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Neutral,
    Mutation,
    Selection,
    MutationSelection,
}

/// A point together with its image under the Lamperti transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformPoint {
    pub x: f64,
    pub y: f64,
}

/// A potential value after clamping of the argument and/or the magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub value: f64,
    pub clamped: bool,
}

impl DiffusionSpec {
    /// The neutral Wright-Fisher diffusion, `a = b = 1/2` with no drift.
    pub const fn neutral() -> Self {
        Self {
            a: 0.5,
            b: 0.5,
            alpha: 0.0,
            h: 0.0,
            beta1: 0.0,
            beta2: 0.0,
        }
    }

    /// Driftless diffusion with volatility `x^a (1-x)^b`.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let spec = Self {
            a,
            b,
            ..Self::neutral()
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Wright-Fisher diffusion with mutation rates `beta1` (away from the
    /// counted allele) and `beta2` (towards it).
    pub fn with_mutation(beta1: f64, beta2: f64) -> Result<Self> {
        let spec = Self {
            beta1,
            beta2,
            ..Self::neutral()
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Wright-Fisher diffusion with selection rate `alpha` and heterozygosity `h`.
    pub fn with_selection(alpha: f64, h: f64) -> Result<Self> {
        let spec = Self {
            alpha,
            h,
            ..Self::neutral()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "exponent {name} = {v} must lie in (0, 1]"
                )));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("h", self.h)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} is not finite"
                )));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "mutation rate {name} = {v} must be finite and >= 0"
                )));
            }
        }
        if self.has_drift() && !self.is_wright_fisher() {
            return Err(Error::Unsupported(format!(
                "mutation/selection drift requires a = b = 1/2 (got a = {}, b = {})",
                self.a, self.b
            )));
        }
        Ok(())
    }

    pub fn is_wright_fisher(&self) -> bool {
        self.a == 0.5 && self.b == 0.5
    }

    pub fn has_drift(&self) -> bool {
        self.alpha != 0.0 || self.h != 0.0 || self.beta1 != 0.0 || self.beta2 != 0.0
    }

    pub fn regime(&self) -> Regime {
        let mutation = self.beta1 != 0.0 || self.beta2 != 0.0;
        let selection = self.alpha != 0.0 || self.h != 0.0;
        match (mutation, selection) {
            (false, false) => Regime::Neutral,
            (true, false) => Regime::Mutation,
            (false, true) => Regime::Selection,
            (true, true) => Regime::MutationSelection,
        }
    }

    fn check_integrable(&self) -> Result<()> {
        if self.a >= 1.0 || self.b >= 1.0 {
            return Err(Error::NonIntegrable {
                a: self.a,
                b: self.b,
            });
        }
        Ok(())
    }

    // ---------------------------------------------------------------------
    // Volatility

    /// `sigma(x) = x^a (1-x)^b`, exactly zero at both boundaries.
    pub fn sigma(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        if x == 0.0 || x == 1.0 {
            return Ok(0.0);
        }
        Ok(self.sigma_split(x, 1.0 - x))
    }

    /// `sigma` from `x` and `1 - x` supplied separately, so callers near the
    /// right boundary keep full relative precision in `1 - x`.
    fn sigma_split(&self, x: f64, one_minus_x: f64) -> f64 {
        if self.is_wright_fisher() {
            (x * one_minus_x).sqrt()
        } else {
            x.powf(self.a) * one_minus_x.powf(self.b)
        }
    }

    // ---------------------------------------------------------------------
    // Lamperti transform

    /// `F(x) = ∫_0^x 1/sigma(u) du`.
    pub fn lamperti_forward(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        if self.is_wright_fisher() {
            return Ok(wf_forward(x));
        }
        self.forward_by_quadrature(x)
    }

    /// `F` by adaptive quadrature regardless of whether a closed form exists.
    pub fn lamperti_forward_quadrature(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        self.forward_by_quadrature(x)
    }

    fn forward_by_quadrature(&self, x: f64) -> Result<f64> {
        self.check_integrable()?;
        let (a, b) = (self.a, self.b);
        // Split at 1/2. On each half the substitution u = s^p (resp.
        // 1 - u = s^q) with p = 1/(1-a) (resp. q = 1/(1-b)) cancels the
        // endpoint singularity exactly, leaving a bounded smooth integrand.
        let p = 1.0 / (1.0 - a);
        let q = 1.0 / (1.0 - b);
        let left = |s: f64| p * (1.0 - s.powf(p)).powf(-b);
        let right = |s: f64| q * (1.0 - s.powf(q)).powf(-a);

        let x_left = x.min(0.5);
        let mut total = quad::integrate(left, 0.0, x_left.powf(1.0 - a), TRANSFORM_TOL * 0.5)?;
        if x > 0.5 {
            let s_hi = 0.5f64.powf(1.0 - b);
            let s_lo = (1.0 - x).powf(1.0 - b);
            total += quad::integrate(right, s_lo, s_hi, TRANSFORM_TOL * 0.5)?;
        }
        Ok(total)
    }

    /// `(F(0), F(1))`, the range of the transformed coordinate.
    pub fn transformed_domain(&self) -> Result<(f64, f64)> {
        if self.is_wright_fisher() {
            return Ok((0.0, PI));
        }
        Ok((0.0, self.forward_by_quadrature(1.0)?))
    }

    /// `F^{-1}(y)` for `y` in `[F(0), F(1)]`.
    pub fn lamperti_inverse(&self, y: f64) -> Result<f64> {
        Ok(self.inverse_split(y)?.0)
    }

    pub fn transform_point(&self, x: f64) -> Result<TransformPoint> {
        Ok(TransformPoint {
            x,
            y: self.lamperti_forward(x)?,
        })
    }

    /// `(x, 1 - x)` with `x = F^{-1}(y)`, both to full relative precision in
    /// the Wright-Fisher case.
    fn inverse_split(&self, y: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.transformed_domain()?;
        if !(y >= lo && y <= hi) {
            return Err(Error::domain("y", y, format!("[{lo}, {hi}]")));
        }
        if self.is_wright_fisher() {
            let s = (0.5 * y).sin();
            let c = (0.5 * y).cos();
            return Ok((s * s, c * c));
        }
        let x = self.inverse_newton(y, hi)?;
        Ok((x, 1.0 - x))
    }

    fn inverse_newton(&self, y: f64, f_one: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        if y >= f_one {
            return Ok(1.0);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut x = y / f_one;
        for _ in 0..200 {
            let fx = self.forward_by_quadrature(x)?;
            let resid = fx - y;
            if resid.abs() <= TRANSFORM_TOL {
                return Ok(x);
            }
            if resid > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            // Newton step with F'(x) = 1/sigma(x); fall back to bisection
            // whenever it leaves the bracket.
            let step = resid * self.sigma_split(x, 1.0 - x);
            let candidate = x - step;
            x = if candidate > lo && candidate < hi {
                candidate
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < f64::EPSILON * 4.0 {
                return Ok(x);
            }
        }
        Err(Error::Quadrature(format!(
            "inverse transform did not converge at y = {y}"
        )))
    }

    // ---------------------------------------------------------------------
    // Potentials of the transformed process

    /// Coefficients `(c_cot, c_tan, c_cot_half)` of the transformed W-F drift
    /// `c_cot cot(y) + c_tan tan(y/2) + c_cot_half cot(y/2)`.
    ///
    /// Neutral: `-cot(y)/2`. Mutation: `(1/4 - beta1) tan(y/2) - (1/4 - beta2)
    /// cot(y/2)`. Selection: `(4h - 1)/2 cot(y) + alpha tan(y/2)`. The mixed
    /// regime is the superposition of the two drift contributions.
    fn wf_drift_coefficients(&self) -> (f64, f64, f64) {
        (2.0 * self.h - 0.5, self.alpha - self.beta1, self.beta2)
    }

    fn check_open(&self, y: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.transformed_domain()?;
        if !(y > lo && y < hi) {
            return Err(Error::domain("y", y, format!("({lo}, {hi})")));
        }
        Ok((lo, hi))
    }

    /// `nu = mu^2 + mu'` of the transformed drift, capped at [`DEFAULT_NU_CAP`].
    pub fn nu(&self, y: f64) -> Result<f64> {
        self.nu_with_cap(y, DEFAULT_NU_CAP)
    }

    pub fn nu_with_cap(&self, y: f64, cap: f64) -> Result<f64> {
        self.check_open(y)?;
        let value = self.nu_unchecked(y)?;
        if !(value.abs() <= cap) {
            return Err(Error::Singularity { y, value, cap });
        }
        Ok(value)
    }

    fn nu_unchecked(&self, y: f64) -> Result<f64> {
        if !self.is_wright_fisher() {
            // Zero drift: mu = -sigma'/2 and nu = sigma'^2/4 - sigma'' sigma/2,
            // which equals V since sigma is concave.
            return self.big_v_unchecked(y);
        }
        if !self.has_drift() {
            let cot = y.cos() / y.sin();
            return Ok(0.5 + 0.75 * cot * cot);
        }
        let (c1, c2, c3) = self.wf_drift_coefficients();
        let (s, c) = y.sin_cos();
        let (sh, ch) = (0.5 * y).sin_cos();
        let cot = c / s;
        let tan_h = sh / ch;
        let cot_h = ch / sh;
        let mu = c1 * cot + c2 * tan_h + c3 * cot_h;
        let dmu = -c1 / (s * s) + 0.5 * c2 / (ch * ch) - 0.5 * c3 / (sh * sh);
        Ok(mu * mu + dmu)
    }

    /// `V(y) = |sigma''| sigma / 2 + sigma'^2 / 4` evaluated at `x = F^{-1}(y)`.
    pub fn big_v(&self, y: f64) -> Result<f64> {
        self.check_open(y)?;
        let value = self.big_v_unchecked(y)?;
        if !(value <= DEFAULT_NU_CAP) {
            return Err(Error::Singularity {
                y,
                value,
                cap: DEFAULT_NU_CAP,
            });
        }
        Ok(value)
    }

    fn big_v_unchecked(&self, y: f64) -> Result<f64> {
        let (x, xc) = self.inverse_split(y)?;
        let (a, b) = (self.a, self.b);
        let sigma = self.sigma_split(x, xc);
        let g = a / x - b / xc;
        let d1 = sigma * g;
        let d2 = sigma * (g * g - a / (x * x) - b / (xc * xc));
        Ok(0.5 * d2.abs() * sigma + 0.25 * d1 * d1)
    }

    /// Potential used inside the bridge functional: `nu` for Wright-Fisher
    /// (with its drift), `V` otherwise. Arguments within
    /// [`BOUNDARY_OFFSET`] of (or beyond) the domain ends are moved to that
    /// offset, and magnitudes above `cap` are clamped; either event sets the
    /// flag.
    pub fn potential_clamped(&self, y: f64, domain: (f64, f64), cap: f64) -> Result<Clamped> {
        let (lo, hi) = domain;
        let mut clamped = false;
        let mut arg = y;
        if !(arg > lo + BOUNDARY_OFFSET) {
            arg = lo + BOUNDARY_OFFSET;
            clamped = true;
        } else if !(arg < hi - BOUNDARY_OFFSET) {
            arg = hi - BOUNDARY_OFFSET;
            clamped = true;
        }
        let mut value = if self.is_wright_fisher() {
            self.nu_unchecked(arg)?
        } else {
            self.big_v_unchecked(arg)?
        };
        if !(value.abs() <= cap) {
            value = if value.is_nan() {
                cap
            } else {
                cap.copysign(value)
            };
            clamped = true;
        }
        Ok(Clamped { value, clamped })
    }

    /// `M(y)`, an antiderivative of the transformed drift (up to a constant).
    pub fn m_potential(&self, y: f64) -> Result<f64> {
        self.check_open(y)?;
        if self.is_wright_fisher() {
            let (c1, c2, c3) = self.wf_drift_coefficients();
            let (sh, ch) = (0.5 * y).sin_cos();
            let mut m = c1 * y.sin().ln();
            if c2 != 0.0 {
                m -= 2.0 * c2 * ch.ln();
            }
            if c3 != 0.0 {
                m += 2.0 * c3 * sh.ln();
            }
            return Ok(m);
        }
        // mu = -sigma'(x)/2 with dx/dy = sigma(x), so M = -ln(sigma(x))/2.
        let (x, xc) = self.inverse_split(y)?;
        Ok(-0.5 * self.sigma_split(x, xc).ln())
    }

    /// `M(y) - M(y0)`.
    pub fn m_diff(&self, y0: f64, y: f64) -> Result<f64> {
        Ok(self.m_potential(y)? - self.m_potential(y0)?)
    }
}

fn check_unit(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("x", x, "[0, 1]"));
    }
    Ok(())
}

fn wf_forward(x: f64) -> f64 {
    if x <= 0.5 {
        2.0 * x.sqrt().asin()
    } else {
        PI - 2.0 * (1.0 - x).sqrt().asin()
    }
}

/// `F` for the neutral Wright-Fisher volatility, `2 asin(sqrt x)`.
pub fn wf_lamperti(x: f64) -> f64 {
    wf_forward(x)
}

/// Midpoint of the transformed W-F domain, `F(1/2)`.
pub const WF_MID: f64 = FRAC_PI_2;
