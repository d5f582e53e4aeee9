//! Discrete Wright-Fisher chain: each generation is a Binomial(2N, X/2N)
//! draw from the previous one. Time is rescaled as `t = n / 2N`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::stream_rng;

/// An ensemble of allele-count trajectories, stored row-major:
/// `data[i * (n_gen + 1) + n]` is the count of trajectory `i` at generation `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub two_n: u32,
    pub n_gen: u32,
    /// Requested initial frequency.
    pub x0: f64,
    /// `round(x0 * 2N)`, the count every trajectory starts from.
    pub start_count: u32,
    pub n_traj: usize,
    pub seed: u64,
    pub data: Vec<u16>,
}

/// Parameters of one simulated ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationParams {
    pub two_n: u32,
    pub n_gen: u32,
    pub x0: f64,
    pub n_traj: usize,
    pub seed: u64,
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        if self.two_n < 2 || self.two_n > u16::MAX as u32 {
            return Err(Error::InvalidParameter(format!(
                "population size 2N = {} must lie in [2, {}]",
                self.two_n,
                u16::MAX
            )));
        }
        if !(0.0..=1.0).contains(&self.x0) {
            return Err(Error::domain("x0", self.x0, "[0, 1]"));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidParameter("n_traj must be positive".into()));
        }
        Ok(())
    }
}

fn simulate_trajectory<R: Rng + ?Sized>(
    two_n: u32,
    start: u32,
    n_gen: u32,
    rng: &mut R,
    out: &mut [u16],
) {
    let mut count = start;
    out[0] = count as u16;
    for slot in out.iter_mut().skip(1).take(n_gen as usize) {
        if count != 0 && count != two_n {
            let p = count as f64 / two_n as f64;
            // p is strictly inside (0, 1) here, so the constructor cannot fail.
            let binom = Binomial::new(two_n as u64, p).expect("valid binomial parameters");
            count = binom.sample(rng) as u32;
        }
        *slot = count as u16;
    }
}

/// Simulates `n_traj` independent trajectories. Trajectory `i` uses ChaCha
/// stream `i` under `seed`, so the result does not depend on thread count.
pub fn simulate_ensemble(params: SimulationParams) -> Result<TrajectoryEnsemble> {
    params.validate()?;
    let SimulationParams {
        two_n,
        n_gen,
        x0,
        n_traj,
        seed,
    } = params;
    let start_count = (x0 * two_n as f64).round() as u32;
    let row = n_gen as usize + 1;
    let mut data = vec![0u16; n_traj * row];
    data.par_chunks_mut(row).enumerate().for_each(|(i, out)| {
        let mut rng = stream_rng(seed, i as u64);
        simulate_trajectory(two_n, start_count, n_gen, &mut rng, out);
    });
    Ok(TrajectoryEnsemble {
        two_n,
        n_gen,
        x0,
        start_count,
        n_traj,
        seed,
        data,
    })
}

impl TrajectoryEnsemble {
    pub fn trajectory(&self, i: usize) -> &[u16] {
        let row = self.n_gen as usize + 1;
        &self.data[i * row..(i + 1) * row]
    }

    pub fn count(&self, traj: usize, generation: usize) -> u16 {
        self.data[traj * (self.n_gen as usize + 1) + generation]
    }

    /// Generation closest to rescaled time `t`, `round(t * 2N)`.
    pub fn generation_at(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::domain("t", t, "[0, n_gen / 2N]"));
        }
        let n = (t * self.two_n as f64).round();
        if n > self.n_gen as f64 {
            return Err(Error::domain(
                "t",
                t,
                format!("[0, {}]", self.n_gen as f64 / self.two_n as f64),
            ));
        }
        Ok(n as usize)
    }

    /// Frequencies of all trajectories at generation `n`.
    pub fn frequencies_at_generation(&self, n: usize) -> Result<Vec<f64>> {
        if n > self.n_gen as usize {
            return Err(Error::InvalidParameter(format!(
                "generation {n} beyond the simulated {}",
                self.n_gen
            )));
        }
        let scale = self.two_n as f64;
        Ok((0..self.n_traj)
            .map(|i| self.count(i, n) as f64 / scale)
            .collect())
    }

    /// Frequencies `X_n / 2N` at `n = round(t * 2N)`.
    pub fn marginal_at(&self, t: f64) -> Result<Vec<f64>> {
        self.frequencies_at_generation(self.generation_at(t)?)
    }

    /// Fractions of trajectories absorbed at 0 and at 1 by time `t`.
    pub fn fixation_stats(&self, t: f64) -> Result<(f64, f64)> {
        let n = self.generation_at(t)?;
        let (mut lost, mut fixed) = (0usize, 0usize);
        for i in 0..self.n_traj {
            match self.count(i, n) as u32 {
                0 => lost += 1,
                c if c == self.two_n => fixed += 1,
                _ => {}
            }
        }
        let total = self.n_traj as f64;
        Ok((lost as f64 / total, fixed as f64 / total))
    }

    /// Exact variance of the chain frequency after `n` generations,
    /// `(1 - (1 - 1/2N)^n) p0 (1 - p0)` with `p0` the realised start frequency.
    pub fn exact_variance(&self, n: usize) -> f64 {
        let p0 = self.start_count as f64 / self.two_n as f64;
        let keep = (1.0 - 1.0 / self.two_n as f64).powi(n as i32);
        (1.0 - keep) * p0 * (1.0 - p0)
    }
}
