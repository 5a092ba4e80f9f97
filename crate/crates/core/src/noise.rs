//! Seeded Brownian increments, ensembles with per-path seeds and Monte Carlo
//! statistics.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of path `index` in the ensemble rooted at `base`.
pub fn path_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// One scalar Brownian motion sampled as increments `ΔW_k = W(t_{k+1}) - W(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub seed: u64,
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl BrownianPath {
    pub fn sample(seed: u64, dt: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("need steps >= 1 and dt > 0 (steps={steps}, dt={dt})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = dt.sqrt();
        let increments = (0..steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect();
        Ok(Self { seed, dt, increments })
    }

    /// The path `W ≡ 0`, used by deterministic runs.
    pub fn zero(dt: f64, steps: usize) -> Self {
        Self { seed: 0, dt, increments: vec![0.0; steps] }
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    /// `W(t_k)`.
    pub fn w(&self, k: usize) -> f64 {
        self.increments[..k].iter().sum()
    }

    /// `W(t_k)` for every level `k = 0..=steps`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        let mut w = 0.0;
        out.push(w);
        for d in &self.increments {
            w += d;
            out.push(w);
        }
        out
    }

    pub fn cursor(&self) -> IncrementCursor<'_> {
        IncrementCursor { path: self, next: 0 }
    }
}

pub fn sample_path(seed: u64, dt: f64, steps: usize) -> Result<BrownianPath> {
    BrownianPath::sample(seed, dt, steps)
}

/// Hands out increments strictly in step order. Asking for step `k` before
/// steps `0..k` have been consumed is a contract violation (checked in debug builds).
#[derive(Debug)]
pub struct IncrementCursor<'a> {
    path: &'a BrownianPath,
    next: usize,
}

impl IncrementCursor<'_> {
    pub fn take(&mut self, k: usize) -> f64 {
        debug_assert_eq!(k, self.next, "increment {k} requested while step {} is pending", self.next);
        self.next = k + 1;
        self.path.increments[k]
    }

    pub fn position(&self) -> usize {
        self.next
    }
}

/// `paths` Brownian paths with seeds derived from `base_seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ensemble {
    pub base_seed: u64,
    pub paths: usize,
    pub dt: f64,
    pub steps: usize,
}

impl Ensemble {
    pub fn new(base_seed: u64, paths: usize, dt: f64, steps: usize) -> Result<Self> {
        if paths == 0 {
            return Err(Error::InvalidInput("ensemble needs at least one path".into()));
        }
        BrownianPath::sample(0, dt, steps.max(1))?;
        Ok(Self { base_seed, paths, dt, steps })
    }

    pub fn seed(&self, index: usize) -> u64 {
        path_seed(self.base_seed, index as u64)
    }

    pub fn path(&self, index: usize) -> BrownianPath {
        BrownianPath::sample(self.seed(index), self.dt, self.steps).expect("validated at construction")
    }

    /// Evaluates `f` on every path in parallel and reduces in path order, so the
    /// result does not depend on the worker count.
    pub fn map_stats<F>(&self, f: F) -> Result<McStats>
    where
        F: Fn(usize, &BrownianPath) -> Result<f64> + Sync,
    {
        let values: Vec<f64> = (0..self.paths)
            .into_par_iter()
            .map(|i| f(i, &self.path(i)))
            .collect::<Result<_>>()?;
        Ok(McStats::from_values(&values))
    }
}

/// Running count, mean and centred sum of squares.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct McStats {
    pub count: usize,
    pub mean: f64,
    pub m2: f64,
}

impl McStats {
    pub fn from_values(values: &[f64]) -> Self {
        let mut s = Self::default();
        for &v in values {
            s.push(v);
        }
        s
    }

    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = (self.count + other.count) as f64;
        let (na, nb) = (self.count as f64, other.count as f64);
        let d = other.mean - self.mean;
        Self {
            count: self.count + other.count,
            mean: self.mean + d * nb / n,
            m2: self.m2 + other.m2 + d * d * na * nb / n,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn estimate(&self) -> Result<McEstimate> {
        if self.count < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 samples, got {}", self.count)));
        }
        Ok(McEstimate {
            mean: self.mean,
            ci_halfwidth: 1.96 * (self.variance() / self.count as f64).sqrt(),
            count: self.count,
        })
    }
}

/// Sample mean with a 95% normal confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub count: usize,
}

impl McEstimate {
    pub fn contains(&self, v: f64) -> bool {
        (self.mean - v).abs() <= self.ci_halfwidth
    }
}

pub fn mc_mean(values: &[f64]) -> Result<McEstimate> {
    McStats::from_values(values).estimate()
}
