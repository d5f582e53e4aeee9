//! Brownian-bridge Monte Carlo for the exact transition density.
//!
//! For the Lamperti-transformed process the density is
//!
//! ```text
//! p^Y_t(y0, y) = q_t(y - y0) exp(M(y) - M(y0)) E[exp(-t/2 ∫_0^1 nu((1-u) y0 + u y + sqrt(t) B(u)) du)]
//! ```
//!
//! with `B` a standard Brownian bridge and `q_t` the N(0, t) density, and
//! `p^X_t(x0, x) = p^Y_t(F(x0), F(x)) / sigma(x)`. The expectation is
//! estimated over an ensemble of discretised bridges; the inner integral uses
//! the trapezoid rule on the bridge grid.
//!
//! Each path draws from its own ChaCha stream (`stream = path index`), so an
//! ensemble is identical whatever the number of rayon workers.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSpec, DEFAULT_NU_CAP};
use crate::error::{Error, Result};
use crate::seed::stream_rng;

pub const DEFAULT_N_PATHS: usize = 500;
pub const DEFAULT_K_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct BridgePath {
    /// `u_k = k / K`, `k = 0..=K`.
    pub grid: Vec<f64>,
    /// `B(u_k)`; both endpoints are exactly zero.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Fraction of potential evaluations that hit the argument or value clamp.
    pub clamped_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub n_paths: usize,
    pub k_steps: usize,
    pub seed: u64,
    pub nu_cap: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: DEFAULT_N_PATHS,
            k_steps: DEFAULT_K_STEPS,
            seed: 0,
            nu_cap: DEFAULT_NU_CAP,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_paths = {} must be at least 2",
                self.n_paths
            )));
        }
        if self.k_steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "k_steps = {} must be at least 2",
                self.k_steps
            )));
        }
        if !(self.nu_cap > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nu_cap = {} must be > 0",
                self.nu_cap
            )));
        }
        Ok(())
    }
}

/// Draws one bridge on `k_steps` equal steps: a Wiener path `W` from Gaussian
/// increments of variance `1/K`, then `B(u) = W(u) - u W(1)`.
pub fn sample_bridge<R: Rng + ?Sized>(k_steps: usize, rng: &mut R) -> Result<BridgePath> {
    if k_steps < 2 {
        return Err(Error::InvalidParameter(format!(
            "k_steps = {k_steps} must be at least 2"
        )));
    }
    let grid: Vec<f64> = (0..=k_steps).map(|k| k as f64 / k_steps as f64).collect();
    let values = bridge_values(k_steps, &grid, rng);
    Ok(BridgePath { grid, values })
}

fn bridge_values<R: Rng + ?Sized>(k_steps: usize, grid: &[f64], rng: &mut R) -> Vec<f64> {
    let scale = (1.0 / k_steps as f64).sqrt();
    let mut w = Vec::with_capacity(k_steps + 1);
    w.push(0.0);
    let mut acc = 0.0;
    for _ in 0..k_steps {
        let z: f64 = rng.sample(StandardNormal);
        acc += scale * z;
        w.push(acc);
    }
    let w1 = w[k_steps];
    let mut values: Vec<f64> = w.iter().zip(grid).map(|(wu, u)| wu - u * w1).collect();
    values[0] = 0.0;
    values[k_steps] = 0.0;
    values
}

/// A fixed set of bridges, reused across evaluation points (common random
/// numbers).
#[derive(Debug, Clone)]
pub struct BridgeEnsemble {
    k_steps: usize,
    grid: Vec<f64>,
    paths: Vec<Vec<f64>>,
}

impl BridgeEnsemble {
    pub fn generate(n_paths: usize, k_steps: usize, seed: u64) -> Result<Self> {
        if n_paths < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_paths = {n_paths} must be at least 2"
            )));
        }
        let first = sample_bridge(k_steps, &mut stream_rng(seed, 0))?;
        let grid = first.grid;
        let mut paths = Vec::with_capacity(n_paths);
        paths.push(first.values);
        let rest: Vec<Vec<f64>> = (1..n_paths as u64)
            .into_par_iter()
            .map(|i| bridge_values(k_steps, &grid, &mut stream_rng(seed, i)))
            .collect();
        paths.extend(rest);
        Ok(Self {
            k_steps,
            grid,
            paths,
        })
    }

    pub fn from_config(cfg: &McConfig) -> Result<Self> {
        cfg.validate()?;
        Self::generate(cfg.n_paths, cfg.k_steps, cfg.seed)
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn k_steps(&self) -> usize {
        self.k_steps
    }

    pub fn path(&self, i: usize) -> BridgePath {
        BridgePath {
            grid: self.grid.clone(),
            values: self.paths[i].clone(),
        }
    }

    /// Estimates `E[exp(-t/2 ∫_0^1 nu((1-u) y0 + u y + sqrt(t) B(u)) du)]` in
    /// transformed coordinates.
    pub fn functional(
        &self,
        spec: &DiffusionSpec,
        y0: f64,
        y: f64,
        t: f64,
        nu_cap: f64,
    ) -> Result<McEstimate> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::domain("t", t, "(0, inf)"));
        }
        let domain = spec.transformed_domain()?;
        let sqrt_t = t.sqrt();
        let du = 1.0 / self.k_steps as f64;
        let per_path: Vec<(f64, usize)> = self
            .paths
            .par_iter()
            .map(|bridge| -> Result<(f64, usize)> {
                let mut integral = 0.0;
                let mut clamped = 0usize;
                for (k, (&u, &b)) in self.grid.iter().zip(bridge).enumerate() {
                    let z = (1.0 - u) * y0 + u * y + sqrt_t * b;
                    let v = spec.potential_clamped(z, domain, nu_cap)?;
                    clamped += v.clamped as usize;
                    let w = if k == 0 || k == self.k_steps {
                        0.5
                    } else {
                        1.0
                    };
                    integral += w * v.value;
                }
                integral *= du;
                Ok(((-0.5 * t * integral).exp(), clamped))
            })
            .collect::<Result<_>>()?;

        let n = per_path.len();
        let evaluations = n * (self.k_steps + 1);
        let clamped: usize = per_path.iter().map(|p| p.1).sum();
        if clamped == evaluations {
            return Err(Error::McDegenerate(format!(
                "all {evaluations} potential evaluations were clamped"
            )));
        }
        let mean = per_path.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let var = per_path.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(McEstimate {
            mean,
            std_error: (var / n as f64).sqrt(),
            n_paths: n,
            clamped_fraction: clamped as f64 / evaluations as f64,
        })
    }

    /// Exact density `p_t(x0, x)` with its Monte Carlo standard error.
    pub fn exact_density(
        &self,
        spec: &DiffusionSpec,
        x0: f64,
        x: f64,
        t: f64,
        nu_cap: f64,
    ) -> Result<ExactDensityValue> {
        check_interior("x0", x0)?;
        check_interior("x", x)?;
        let y0 = spec.lamperti_forward(x0)?;
        let y = spec.lamperti_forward(x)?;
        let est = self.functional(spec, y0, y, t, nu_cap)?;
        let dy = y - y0;
        let kernel = (-dy * dy / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt();
        let factor = kernel * spec.m_diff(y0, y)?.exp() / spec.sigma(x)?;
        Ok(ExactDensityValue {
            density: factor * est.mean,
            std_error: factor * est.std_error,
            functional: est,
        })
    }

    /// Exact density on a grid of `x` values, all sharing this ensemble.
    pub fn exact_density_grid(
        &self,
        spec: &DiffusionSpec,
        x0: f64,
        grid: &[f64],
        t: f64,
        nu_cap: f64,
    ) -> Result<Vec<ExactDensityValue>> {
        grid.iter()
            .map(|&x| self.exact_density(spec, x0, x, t, nu_cap))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactDensityValue {
    pub density: f64,
    pub std_error: f64,
    pub functional: McEstimate,
}

fn check_interior(what: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::domain(what, v, "(0, 1)"));
    }
    Ok(())
}

/// Monte Carlo estimate of the bridge functional between `x0` and `x`.
pub fn mc_functional(
    spec: &DiffusionSpec,
    x0: f64,
    x: f64,
    t: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    check_interior("x0", x0)?;
    check_interior("x", x)?;
    let ensemble = BridgeEnsemble::from_config(cfg)?;
    let y0 = spec.lamperti_forward(x0)?;
    let y = spec.lamperti_forward(x)?;
    ensemble.functional(spec, y0, y, t, cfg.nu_cap)
}

/// Exact transition density at a single point.
pub fn exact_density(
    spec: &DiffusionSpec,
    x0: f64,
    x: f64,
    t: f64,
    cfg: &McConfig,
) -> Result<ExactDensityValue> {
    BridgeEnsemble::from_config(cfg)?.exact_density(spec, x0, x, t, cfg.nu_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn bridge_endpoints_and_determinism() {
        let a = sample_bridge(2, &mut stream_rng(11, 0)).unwrap();
        assert_eq!(a.grid, vec![0.0, 0.5, 1.0]);
        assert_eq!(a.values[0], 0.0);
        assert_eq!(a.values[2], 0.0);
        let b = sample_bridge(2, &mut stream_rng(11, 0)).unwrap();
        assert_eq!(a, b);
        assert!(sample_bridge(1, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn bridge_midpoint_variance_is_one_quarter() {
        let ens = BridgeEnsemble::generate(100_000, 2, 5).unwrap();
        let n = ens.n_paths() as f64;
        let mean = ens.paths.iter().map(|p| p[1]).sum::<f64>() / n;
        let var = ens.paths.iter().map(|p| (p[1] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.25).abs() < 0.01, "var = {var}");
    }

    #[test]
    fn ensemble_matches_independent_sampling() {
        let ens = BridgeEnsemble::generate(4, 10, 99).unwrap();
        for i in 0..4 {
            let p = sample_bridge(10, &mut stream_rng(99, i as u64)).unwrap();
            assert_eq!(ens.path(i), p);
        }
    }

    #[test]
    fn functional_tends_to_one_as_t_vanishes() {
        let spec = DiffusionSpec::neutral();
        let cfg = McConfig {
            n_paths: 200,
            ..McConfig::default()
        };
        let est = mc_functional(&spec, 0.3, 0.6, 1e-8, &cfg).unwrap();
        assert!(est.mean >= 0.999 && est.mean <= 1.0, "{est:?}");
    }

    #[test]
    fn functional_at_default_path_count() {
        let spec = DiffusionSpec::neutral();
        let cfg = McConfig {
            seed: 3,
            ..McConfig::default()
        };
        let est = mc_functional(&spec, 0.5, 0.5, 0.1, &cfg).unwrap();
        assert_eq!(est.n_paths, 500);
        assert!(est.mean > 0.0 && est.mean < 1.0);
        assert!(est.std_error < 0.05 * est.mean);
        assert_eq!(est.clamped_fraction, 0.0);
    }

    #[test]
    fn std_error_scales_with_path_count() {
        let spec = DiffusionSpec::neutral();
        let se = |n| {
            let cfg = McConfig {
                n_paths: n,
                seed: 8,
                ..McConfig::default()
            };
            mc_functional(&spec, 0.35, 0.55, 0.2, &cfg)
                .unwrap()
                .std_error
        };
        let ratio = se(8000) / se(4000);
        let target = 1.0 / 2f64.sqrt();
        assert!((ratio / target - 1.0).abs() < 0.2, "ratio = {ratio}");
    }

    #[test]
    fn density_direction_ratio() {
        // Reversibility: p(x0, x) / p(x, x0) = x0(1-x0) / (x(1-x)). The bridge
        // expectation is symmetric in (F(x0), F(x)), so with enough paths both
        // directions agree up to Monte Carlo error.
        let spec = DiffusionSpec::neutral();
        let cfg = McConfig {
            n_paths: 4000,
            seed: 21,
            ..McConfig::default()
        };
        let fwd = exact_density(&spec, 0.3, 0.7, 0.1, &cfg).unwrap();
        let bwd = exact_density(&spec, 0.7, 0.3, 0.1, &cfg).unwrap();
        let expected = 1.0;
        let rel_se = 3.0 * (fwd.std_error / fwd.density + bwd.std_error / bwd.density);
        assert!(((fwd.density / bwd.density) / expected - 1.0).abs() < rel_se.max(0.02));

        let fwd = exact_density(&spec, 0.2, 0.45, 0.1, &cfg).unwrap();
        let bwd = exact_density(&spec, 0.45, 0.2, 0.1, &cfg).unwrap();
        let expected = 0.2 * 0.8 / (0.45 * 0.55);
        let rel_se = 3.0 * (fwd.std_error / fwd.density + bwd.std_error / bwd.density);
        let got = fwd.density / bwd.density;
        assert!(
            (got / expected - 1.0).abs() < rel_se.max(0.02),
            "{got} vs {expected}"
        );
    }

    #[test]
    fn exact_density_is_nonnegative_and_unimodal_at_centre() {
        let spec = DiffusionSpec::neutral();
        let ens = BridgeEnsemble::generate(500, 100, 1).unwrap();
        let grid = quad::linspace(0.02, 0.98, 49);
        let vals = ens
            .exact_density_grid(&spec, 0.5, &grid, 0.1, DEFAULT_NU_CAP)
            .unwrap();
        assert!(vals.iter().all(|v| v.density >= 0.0));
        let (imax, _) = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.density.total_cmp(&b.1.density))
            .unwrap();
        assert_eq!(grid[imax], 0.5);
    }

    #[test]
    fn small_t_slope_matches_chord_average() {
        let spec = DiffusionSpec::neutral();
        let y0 = spec.lamperti_forward(0.4).unwrap();
        let y = spec.lamperti_forward(0.6).unwrap();
        let chord = quad::simpson_fn(|u| spec.nu(u).unwrap(), y0, y, 64) / (y - y0);
        let t = 1e-2;
        let cfg = McConfig {
            n_paths: 2000,
            seed: 4,
            ..McConfig::default()
        };
        let est = mc_functional(&spec, 0.4, 0.6, t, &cfg).unwrap();
        let slope = (1.0 - est.mean) / t;
        // O(t) relative agreement with the t -> 0 limit.
        assert!(
            (slope / (0.5 * chord) - 1.0).abs() < 0.05,
            "{slope} vs {}",
            0.5 * chord
        );
    }

    #[test]
    fn clamping_is_reported() {
        let spec = DiffusionSpec::neutral();
        let ens = BridgeEnsemble::generate(200, 50, 2).unwrap();
        let near = spec.lamperti_forward(0.001).unwrap();
        let est = ens
            .functional(&spec, near, near, 0.5, DEFAULT_NU_CAP)
            .unwrap();
        assert!(est.clamped_fraction > 0.0);
        assert!(est.mean >= 0.0 && est.mean <= 1.0);
    }

    #[test]
    fn degenerate_when_everything_clamps() {
        let spec = DiffusionSpec::neutral();
        let ens = BridgeEnsemble::generate(10, 10, 2).unwrap();
        // Every potential value is above a tiny cap.
        let err = ens
            .functional(&spec, FRAC_PI_2, FRAC_PI_2, 0.1, 1e-3)
            .unwrap_err();
        assert!(matches!(err, Error::McDegenerate(_)));
    }

    #[test]
    fn general_exponents_run() {
        let spec = DiffusionSpec::new(0.4, 0.4).unwrap();
        let cfg = McConfig {
            n_paths: 20,
            k_steps: 10,
            ..McConfig::default()
        };
        let d = exact_density(&spec, 0.4, 0.5, 0.05, &cfg).unwrap();
        assert!(d.density > 0.0 && d.density.is_finite());
    }
}
