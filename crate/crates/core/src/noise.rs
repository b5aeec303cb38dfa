//! Time grids, two-noise increment generation, and the discrete forward /
//! backward Ito integral conventions.
//!
//! Two sources of randomness are supported:
//!
//! * [`PathEnsemble`] — Monte Carlo increments drawn from counter-based
//!   streams, so regeneration is bit-identical for a given seed regardless of
//!   generation order or thread count.
//! * [`TreeNoise`] — the exhaustive binary model: every step of each noise is
//!   `+sqrt(dt)` or `-sqrt(dt)`, all `2^(2N)` sign assignments weighted
//!   equally. Expectations over the tree are exact sums, which makes it
//!   usable as ground truth.
//!
//! Both integrals use frozen endpoint conventions: the forward integral pairs
//! the integrand value at the left endpoint of each step with `dW`, the
//! backward integral pairs the value at the right endpoint with `dB`.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Uniform grid `t_k = k T / N`, `k = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    delta: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<TimeGrid> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument {
                arg: "horizon",
                reason: alloc::format!("must be positive and finite, got {horizon}"),
            });
        }
        if steps == 0 {
            return Err(Error::InvalidArgument {
                arg: "steps",
                reason: alloc::string::String::from("must be at least 1"),
            });
        }
        Ok(TimeGrid { horizon, steps, delta: horizon / steps as f64 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `N` (the grid has `N + 1` nodes).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Node `t_k`, computed as `k*T/N` so that `t_0 = 0` and `t_N = T` exactly.
    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps);
        (k as f64 * self.horizon) / self.steps as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }
}

/// Noise channel tag feeding the counter-based stream derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseTag {
    W,
    B,
}

impl NoiseTag {
    fn id(self) -> u64 {
        match self {
            NoiseTag::W => 0,
            NoiseTag::B => 1,
        }
    }
}

/// 64-bit finalizer with full avalanche (splitmix64 finalization constants).
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

const STREAM_SEED: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_PATH: u64 = 0xC2B2_AE3D_27D4_EB4F;
const STREAM_STEP: u64 = 0x1656_67B1_9E37_79F9;
const STREAM_TAG: u64 = 0x2545_F491_4F6C_DD1D;
const STREAM_OUT_A: u64 = 0x8538_46CA_68B3_1A5B;
const STREAM_OUT_B: u64 = 0xD6E8_FEB8_6659_FD93;

/// Standard normal draw for coordinate `(seed, path, step, tag)`.
///
/// The value is a pure function of its arguments (a keyed counter, not a
/// stateful generator), so any generation order — including parallel
/// generation — produces identical ensembles.
pub fn standard_normal(seed: u64, path: u64, step: u64, tag: NoiseTag) -> f64 {
    let mut h = mix64(seed ^ STREAM_SEED);
    h = mix64(h ^ path.wrapping_mul(STREAM_PATH));
    h = mix64(h ^ step.wrapping_mul(STREAM_STEP));
    h = mix64(h ^ tag.id().wrapping_mul(STREAM_TAG));
    let a = mix64(h ^ STREAM_OUT_A);
    let b = mix64(h ^ STREAM_OUT_B);
    // u1 in (0, 1] so the logarithm is finite; u2 in [0, 1).
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
    let u2 = (b >> 11) as f64 * (1.0 / 9007199254740992.0);
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

/// Increments of both noises for one path: `(dW, dB)`, each of length `N`.
pub fn path_increments(grid: &TimeGrid, seed: u64, path: usize) -> (Vec<f64>, Vec<f64>) {
    let sqrt_dt = math::sqrt(grid.delta());
    let n = grid.steps();
    let mut dw = Vec::with_capacity(n);
    let mut db = Vec::with_capacity(n);
    for k in 0..n {
        dw.push(standard_normal(seed, path as u64, k as u64, NoiseTag::W) * sqrt_dt);
        db.push(standard_normal(seed, path as u64, k as u64, NoiseTag::B) * sqrt_dt);
    }
    (dw, db)
}

/// A seeded Monte Carlo ensemble of increments for both noises.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    seed: u64,
    dw: Vec<Vec<f64>>,
    db: Vec<Vec<f64>>,
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn count(&self) -> usize {
        self.dw.len()
    }

    /// Forward-noise increments of path `j`.
    pub fn dw(&self, j: usize) -> &[f64] {
        &self.dw[j]
    }

    /// Backward-noise increments of path `j`.
    pub fn db(&self, j: usize) -> &[f64] {
        &self.db[j]
    }

    /// Cumulative forward noise at the nodes of path `j` (length `N + 1`,
    /// starting at 0).
    pub fn w_at_nodes(&self, j: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.grid.steps() + 1);
        let mut acc = 0.0;
        w.push(acc);
        for &d in &self.dw[j] {
            acc += d;
            w.push(acc);
        }
        w
    }
}

/// Draws `count` paths of Gaussian increments with variance `delta` for both
/// noises. Deterministic in `(grid, count, seed)`.
pub fn sample_paths(grid: &TimeGrid, count: usize, seed: u64) -> Result<PathEnsemble> {
    if count == 0 {
        return Err(Error::InvalidArgument {
            arg: "count",
            reason: alloc::string::String::from("must be at least 1"),
        });
    }
    let mut dw = Vec::with_capacity(count);
    let mut db = Vec::with_capacity(count);
    for j in 0..count {
        let (w, b) = path_increments(grid, seed, j);
        dw.push(w);
        db.push(b);
    }
    Ok(PathEnsemble { grid: grid.clone(), seed, dw, db })
}

/// Maximum tree depth: level storage is `2^N` values and scenario enumeration
/// is `2^(2N)`, bounded at `2^24` scenarios.
pub const MAX_TREE_DEPTH: usize = 12;

/// The exhaustive binary two-noise model on a grid: each noise independently
/// takes increments `±sqrt(dt)`, every one of the `2^(2N)` joint sign
/// assignments has weight `2^(-2N)`.
///
/// Sign paths of one noise are encoded as integers read most-significant bit
/// first: bit `N-1-k` holds step `k`, bit value 0 meaning `+sqrt(dt)`. With
/// this encoding the first `k` steps of path `bits` are `bits >> (N - k)` and
/// the last `N - k` steps are the low `N - k` bits, which is what the level
/// storage of tree processes indexes on.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNoise {
    grid: TimeGrid,
    sqrt_delta: f64,
}

impl TreeNoise {
    pub fn new(grid: &TimeGrid) -> Result<TreeNoise> {
        if grid.steps() > MAX_TREE_DEPTH {
            return Err(Error::ResourceLimit {
                what: "tree depth",
                requested: grid.steps(),
                limit: MAX_TREE_DEPTH,
            });
        }
        Ok(TreeNoise { grid: grid.clone(), sqrt_delta: math::sqrt(grid.delta()) })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Number of steps `N`.
    pub fn depth(&self) -> usize {
        self.grid.steps()
    }

    /// `2^N`: number of sign paths of a single noise.
    pub fn branch_count(&self) -> usize {
        1usize << self.depth()
    }

    /// `2^(2N)`: number of joint scenarios.
    pub fn scenario_count(&self) -> usize {
        1usize << (2 * self.depth())
    }

    /// Weight of each joint scenario, `2^(-2N)` (exact in floating point).
    pub fn weight(&self) -> f64 {
        1.0 / self.scenario_count() as f64
    }

    pub fn sqrt_delta(&self) -> f64 {
        self.sqrt_delta
    }

    /// Sign (`+1` or `-1`) of step `step` on the length-`len` sign path `bits`.
    pub fn sign(bits: usize, len: usize, step: usize) -> f64 {
        debug_assert!(step < len);
        if (bits >> (len - 1 - step)) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Increment of one noise at `step` on full sign path `bits`.
    pub fn increment(&self, bits: usize, step: usize) -> f64 {
        Self::sign(bits, self.depth(), step) * self.sqrt_delta
    }

    /// All increments of one noise along full sign path `bits`.
    pub fn increments(&self, bits: usize) -> Vec<f64> {
        (0..self.depth()).map(|k| self.increment(bits, k)).collect()
    }

    /// Cumulative noise value at node `k` (sum of the first `k` increments of
    /// sign path `bits`, which may be given as a prefix of length >= `k`).
    pub fn level_value(&self, bits: usize, len: usize, k: usize) -> f64 {
        let mut acc = 0.0;
        for step in 0..k {
            acc += Self::sign(bits, len, step) * self.sqrt_delta;
        }
        acc
    }
}

/// Forward Ito sum `sum_k integrand[k] * incr[k]` where `integrand[k]` is the
/// value at the left endpoint `t_k` of step `k`.
pub fn forward_ito_integral(integrand: &[f64], incr: &[f64]) -> Result<f64> {
    if integrand.len() != incr.len() {
        return Err(Error::InvalidArgument {
            arg: "integrand",
            reason: alloc::format!(
                "length {} does not match increment count {}",
                integrand.len(),
                incr.len()
            ),
        });
    }
    Ok(integrand.iter().zip(incr).map(|(f, d)| f * d).sum())
}

/// Backward Ito sum: `integrand[k]` is the value at the *right* endpoint
/// `t_{k+1}` of step `k`, paired with `incr[k]`. With both slices of length
/// `N`, the integrand slice covers nodes `t_1..t_N`.
pub fn backward_ito_integral(integrand: &[f64], incr: &[f64]) -> Result<f64> {
    if integrand.len() != incr.len() {
        return Err(Error::InvalidArgument {
            arg: "integrand",
            reason: alloc::format!(
                "length {} does not match increment count {}",
                integrand.len(),
                incr.len()
            ),
        });
    }
    Ok(integrand.iter().zip(incr).map(|(f, d)| f * d).sum())
}
