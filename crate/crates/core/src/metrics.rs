//! Hellinger and L² distances between grid densities.
//!
//! Both are integrated with Simpson's rule on a common grid. Densities on
//! different grids are linearly resampled onto a uniform grid spanning the
//! overlap of their supports.

use serde::{Deserialize, Serialize};

use crate::densities::GridDensity;
use crate::error::{Error, Result};
use crate::quad::{linspace, simpson};

/// Extent and resolution of the grid a distance was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommonGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

/// Both densities sampled on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub grid: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Aligned {
    pub fn spec(&self) -> CommonGrid {
        CommonGrid {
            lo: self.grid[0],
            hi: self.grid[self.grid.len() - 1],
            n_points: self.grid.len(),
        }
    }
}

/// Puts `p` and `q` on a common grid. Identical grids are used as they are;
/// otherwise both are resampled onto `n_points` uniform points over the
/// overlap (default: the larger of the two grid sizes).
pub fn align(p: &GridDensity, q: &GridDensity, n_points: Option<usize>) -> Result<Aligned> {
    if p.grid.len() < 2 || q.grid.len() < 2 {
        return Err(Error::GridMismatch("grids need at least two points".into()));
    }
    if n_points.is_none() && p.grid == q.grid {
        return Ok(Aligned {
            grid: p.grid.clone(),
            p: p.values.clone(),
            q: q.values.clone(),
        });
    }
    let lo = p.grid[0].max(q.grid[0]);
    let hi = p.grid[p.grid.len() - 1].min(q.grid[q.grid.len() - 1]);
    if !(hi > lo) {
        return Err(Error::GridMismatch(format!(
            "supports [{}, {}] and [{}, {}] do not overlap",
            p.grid[0],
            p.grid[p.grid.len() - 1],
            q.grid[0],
            q.grid[q.grid.len() - 1]
        )));
    }
    let n = n_points
        .unwrap_or_else(|| p.grid.len().max(q.grid.len()))
        .max(3);
    let grid = linspace(lo, hi, n);
    let pv = grid.iter().map(|&x| p.interpolate(x)).collect();
    let qv = grid.iter().map(|&x| q.interpolate(x)).collect();
    Ok(Aligned { grid, p: pv, q: qv })
}

fn hellinger_aligned(a: &Aligned) -> f64 {
    let integrand: Vec<f64> =
        a.p.iter()
            .zip(&a.q)
            .map(|(p, q)| (p.max(0.0).sqrt() - q.max(0.0).sqrt()).powi(2))
            .collect();
    let h2 = 0.5 * simpson(&a.grid, &integrand);
    h2.clamp(0.0, 1.0).sqrt()
}

fn l2_aligned(a: &Aligned) -> f64 {
    let integrand: Vec<f64> = a.p.iter().zip(&a.q).map(|(p, q)| (p - q).powi(2)).collect();
    simpson(&a.grid, &integrand).max(0.0).sqrt()
}

/// `H(p, q)` with `H² = ½ ∫ (√p − √q)²`, clamped to `[0, 1]`.
pub fn hellinger(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    Ok(hellinger_aligned(&align(p, q, None)?))
}

/// Hellinger distance on an explicit number of common grid points.
pub fn hellinger_with_points(p: &GridDensity, q: &GridDensity, n_points: usize) -> Result<f64> {
    Ok(hellinger_aligned(&align(p, q, Some(n_points))?))
}

/// `√(∫ (p − q)²)`.
pub fn l2_distance(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    Ok(l2_aligned(&align(p, q, None)?))
}

/// One cell of a comparison: distances from the reference estimate to a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub x0: f64,
    pub t: f64,
    pub model: String,
    pub hellinger: f64,
    pub l2: f64,
    pub grid: CommonGrid,
}

impl DistanceRecord {
    /// Computes both distances on the same aligned grid.
    pub fn compute(
        x0: f64,
        t: f64,
        model: impl Into<String>,
        p: &GridDensity,
        q: &GridDensity,
    ) -> Result<Self> {
        let aligned = align(p, q, None)?;
        Ok(Self {
            x0,
            t,
            model: model.into(),
            hellinger: hellinger_aligned(&aligned),
            l2: l2_aligned(&aligned),
            grid: aligned.spec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{beta_pdf, GridSpec};

    fn on_grid(f: impl Fn(f64) -> f64, grid: &[f64]) -> GridDensity {
        GridDensity::from_values(grid.to_vec(), grid.iter().map(|&x| f(x)).collect()).unwrap()
    }

    fn gauss(mu: f64, var: f64) -> impl Fn(f64) -> f64 {
        move |x| (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn identity_and_symmetry() {
        let grid = GridSpec::default().points();
        let p = on_grid(|x| beta_pdf(x, 2.0, 5.0), &grid);
        let q = on_grid(|x| beta_pdf(x, 3.0, 3.0), &grid);
        assert_eq!(hellinger(&p, &p).unwrap(), 0.0);
        assert_eq!(l2_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(hellinger(&p, &q).unwrap(), hellinger(&q, &p).unwrap());
        assert_eq!(l2_distance(&p, &q).unwrap(), l2_distance(&q, &p).unwrap());
    }

    #[test]
    fn gaussian_closed_form() {
        let sigma = 0.02f64;
        let grid = linspace(0.0, 1.0, 4001);
        let p = on_grid(gauss(0.5, sigma * sigma), &grid);
        let q = on_grid(gauss(0.5 + sigma, sigma * sigma), &grid);
        let h = hellinger(&p, &q).unwrap();
        let expected = 1.0 - (-0.125f64).exp();
        assert!((h * h - expected).abs() < 1e-3, "{}", h * h);
    }

    #[test]
    fn near_disjoint_supports() {
        let var = 1e-6;
        let grid = linspace(0.0, 1.0, 20_001);
        let p = on_grid(gauss(0.2, var), &grid);
        let q = on_grid(gauss(0.8, var), &grid);
        assert!(hellinger(&p, &q).unwrap() > 0.999);
    }

    #[test]
    fn reflection_invariance() {
        let grid = linspace(0.0, 1.0, 1001);
        let p = on_grid(|x| beta_pdf(x, 2.0, 5.0), &grid);
        let q = on_grid(|x| beta_pdf(x, 4.0, 3.0), &grid);
        let pr = on_grid(|x| beta_pdf(1.0 - x, 2.0, 5.0), &grid);
        let qr = on_grid(|x| beta_pdf(1.0 - x, 4.0, 3.0), &grid);
        let a = hellinger(&p, &q).unwrap();
        let b = hellinger(&pr, &qr).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn grid_refinement_stable() {
        let grid = GridSpec::default().points();
        let p = on_grid(|x| beta_pdf(x, 2.0, 5.0), &grid);
        let q = on_grid(|x| beta_pdf(x, 3.0, 2.0), &grid);
        let a = hellinger_with_points(&p, &q, 1001).unwrap();
        let b = hellinger_with_points(&p, &q, 2001).unwrap();
        assert!((a - b).abs() < 1e-3);
    }

    #[test]
    fn resampling_between_grids() {
        let coarse = linspace(0.0, 1.0, 513);
        let fine = GridSpec::default().points();
        let p = on_grid(|x| beta_pdf(x, 2.0, 2.0), &coarse);
        let q = on_grid(|x| beta_pdf(x, 2.0, 2.0), &fine);
        assert!(hellinger(&p, &q).unwrap() < 1e-3);
        let r = DistanceRecord::compute(0.5, 0.1, "AE", &p, &q).unwrap();
        assert_eq!(r.grid.n_points, 2001);
        assert!((r.grid.lo - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn disjoint_grids_rejected() {
        let p = on_grid(|_| 1.0, &linspace(0.0, 0.4, 11));
        let q = on_grid(|_| 1.0, &linspace(0.5, 1.0, 11));
        assert!(matches!(hellinger(&p, &q), Err(Error::GridMismatch(_))));
    }
}
