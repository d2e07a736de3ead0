//! Seeded Wiener increments with optional truncation.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Identifier written into output metadata so a run can be matched to the
/// exact sampling algorithm.
pub const GENERATOR_ID: &str = "chacha20-seed_from_u64/rand_distr-0.5-StandardNormal-ziggurat";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    pub enabled: bool,
    pub k: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { enabled: true, k: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WienerPath {
    pub seed: u64,
    pub dt: f64,
    pub raw: Vec<f64>,
    pub truncated: Vec<f64>,
    pub bound: f64,
    pub truncation: Truncation,
}

/// `U(Δt) = sqrt(2 k |ln Δt|)`.
pub fn truncation_bound(dt: f64, k: f64) -> Result<f64> {
    if !(dt > 0.0 && dt < 1.0) {
        return Err(Error::Config(format!("time step {dt} outside (0, 1); truncation bound undefined")));
    }
    if !(k >= 1.0) {
        return Err(Error::Config(format!("truncation k = {k} must be >= 1")));
    }
    Ok((2.0 * k * dt.ln().abs()).sqrt())
}

pub fn clamp_increment(x: f64, bound: f64) -> f64 {
    if x > bound {
        bound
    } else if x < -bound {
        -bound
    } else {
        x
    }
}

impl WienerPath {
    pub fn steps(&self) -> usize {
        self.raw.len()
    }

    /// The increments a stepper should use: truncated when enabled, raw otherwise.
    pub fn increments(&self) -> &[f64] {
        if self.truncation.enabled {
            &self.truncated
        } else {
            &self.raw
        }
    }

    /// Whether increment `k` was altered by truncation.
    pub fn clamped(&self, k: usize) -> bool {
        self.truncation.enabled && self.raw[k] != self.truncated[k]
    }

    pub fn from_raw(seed: u64, dt: f64, raw: Vec<f64>, truncation: Truncation) -> Result<Self> {
        let bound = truncation_bound(dt, truncation.k)?;
        let truncated = raw.iter().map(|&x| clamp_increment(x, bound)).collect();
        Ok(Self {
            seed,
            dt,
            raw,
            truncated,
            bound,
            truncation,
        })
    }

    /// Sums the raw increments in blocks of `factor` and re-applies
    /// truncation at the coarse step.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::Config(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.steps()
            )));
        }
        let raw = self
            .raw
            .chunks(factor)
            .map(|c| c.iter().sum())
            .collect();
        Self::from_raw(self.seed, self.dt * factor as f64, raw, self.truncation)
    }

    /// `W(t_k)` from raw increments, `k = 0..=steps`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.raw.len() + 1);
        let mut acc = 0.0;
        w.push(acc);
        for &x in &self.raw {
            acc += x;
            w.push(acc);
        }
        w
    }
}

pub fn sample_path(seed: u64, dt: f64, steps: usize, truncation: Truncation) -> Result<WienerPath> {
    if steps == 0 {
        return Err(Error::Config("a Wiener path needs at least one step".into()));
    }
    // Validate before drawing anything.
    truncation_bound(dt, truncation.k)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sd = dt.sqrt();
    let raw = (0..steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    WienerPath::from_raw(seed, dt, raw, truncation)
}

/// Seed of ensemble member `index`.
pub fn member_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncrementStats {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance; 0 when `count < 2`.
    pub variance: f64,
    pub degenerate: bool,
    pub clamped_fraction: f64,
}

pub fn sample_statistics(paths: &[WienerPath]) -> Result<IncrementStats> {
    let count: usize = paths.iter().map(WienerPath::steps).sum();
    if count == 0 {
        return Err(Error::Config("no increments to summarize".into()));
    }
    let mean = paths.iter().flat_map(|p| &p.raw).sum::<f64>() / count as f64;
    let degenerate = count < 2;
    let variance = if degenerate {
        0.0
    } else {
        paths
            .iter()
            .flat_map(|p| &p.raw)
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (count - 1) as f64
    };
    let clamped = paths
        .iter()
        .map(|p| (0..p.steps()).filter(|&k| p.raw[k].abs() > p.bound).count())
        .sum::<usize>();
    Ok(IncrementStats {
        count,
        mean,
        variance,
        degenerate,
        clamped_fraction: clamped as f64 / count as f64,
    })
}
