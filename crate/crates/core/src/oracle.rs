//! Exact discrete oracle on the two-noise binary tree.
//!
//! Both noise sources are replaced by `±sqrt(dt)` increments, giving
//! `2^(2N)` equally weighted scenarios for an `N`-step grid. On that finite
//! probability space every conditional expectation is a finite average, so
//! the dynamic-programming recursions below are exact: no sampling error,
//! only the time discretization remains. Costs, filters, and conditional
//! moments computed here serve as ground truth for the Monte Carlo layer.
//!
//! Storage is level-by-level. A node at step `k` is addressed by the pair
//! (forward-noise history, backward-noise history) packed into one index
//! `w_prefix * 2^(N-k) + b_suffix`:
//!
//! * the **forward** noise `W` is resolved step by step, so at step `k` only
//!   its first `k` signs (`w_prefix`, MSB-first) are known;
//! * the **backward** noise `B` enters through terms measured from the far
//!   end, so at step `k` the quantities depend on its **last** `N-k` signs
//!   (`b_suffix`).
//!
//! Every level therefore holds exactly `2^N` values, and the recursions
//! either average out one more `B` sign (backward sweep) or resolve one more
//! `W` sign (forward sweep).

use alloc::vec;
use alloc::vec::Vec;

use crate::filtering::NodePolicy;
use crate::model::{CostWeights, LqGameSpec, Player};
use crate::noise::TreeNoise;
use crate::{Error, Result};

/// A process on the tree: one value per (step, resolved-history) node.
///
/// Level `k` stores `2^N` values indexed by
/// `w_prefix * 2^(N-k) + b_suffix`, where `w_prefix` has `k` bits (MSB =
/// first step) and `b_suffix` has `N-k` bits (MSB = step `k`, i.e. the
/// earliest still-unresolved backward sign).
#[derive(Debug, Clone, PartialEq)]
pub struct TreeProcess {
    depth: usize,
    levels: Vec<Vec<f64>>,
}

impl TreeProcess {
    pub fn zeros(depth: usize) -> TreeProcess {
        let width = 1usize << depth;
        TreeProcess { depth, levels: vec![vec![0.0; width]; depth + 1] }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of stored values per level (`2^N`).
    pub fn width(&self) -> usize {
        1usize << self.depth
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.levels[k]
    }

    /// Value at step `k` for the given forward prefix and backward suffix.
    pub fn at(&self, k: usize, w_prefix: usize, b_suffix: usize) -> f64 {
        let shift = self.depth - k;
        self.levels[k][(w_prefix << shift) | b_suffix]
    }

    pub fn set(&mut self, k: usize, w_prefix: usize, b_suffix: usize, v: f64) {
        let shift = self.depth - k;
        self.levels[k][(w_prefix << shift) | b_suffix] = v;
    }

    /// Averages level `k` over the backward suffix, leaving one value per
    /// forward prefix: the conditional expectation given the forward noise
    /// observed so far.
    pub fn filter_level(&self, k: usize) -> Vec<f64> {
        let shift = self.depth - k;
        let denom = (1usize << shift) as f64;
        let mut out = Vec::with_capacity(1usize << k);
        for w in 0..(1usize << k) {
            let base = w << shift;
            let sum: f64 = self.levels[k][base..base + (1usize << shift)].iter().sum();
            out.push(sum / denom);
        }
        out
    }

    /// Unconditional mean at step `k`.
    pub fn mean(&self, k: usize) -> f64 {
        let lvl = &self.levels[k];
        lvl.iter().sum::<f64>() / lvl.len() as f64
    }

    /// Unconditional mean of the square at step `k`.
    pub fn mean_square(&self, k: usize) -> f64 {
        let lvl = &self.levels[k];
        lvl.iter().map(|v| v * v).sum::<f64>() / lvl.len() as f64
    }
}

/// Controls prescribed at every tree node. Adapted policies depend only on
/// the forward prefix, which is exactly what this table can express: one
/// `(v1, v2)` pair per (step, forward-prefix) node.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOnTree {
    depth: usize,
    /// `v1[k][w_prefix]`, `k = 0..N-1` (controls act on steps, not nodes).
    v1: Vec<Vec<f64>>,
    v2: Vec<Vec<f64>>,
}

impl PolicyOnTree {
    /// The zero-control policy.
    pub fn zero(depth: usize) -> PolicyOnTree {
        let v: Vec<Vec<f64>> = (0..depth).map(|k| vec![0.0; 1usize << k]).collect();
        PolicyOnTree { depth, v1: v.clone(), v2: v }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn control(&self, player: Player, k: usize, w_prefix: usize) -> f64 {
        match player {
            Player::One => self.v1[k][w_prefix],
            Player::Two => self.v2[k][w_prefix],
        }
    }

    pub fn set_control(&mut self, player: Player, k: usize, w_prefix: usize, v: f64) {
        match player {
            Player::One => self.v1[k][w_prefix] = v,
            Player::Two => self.v2[k][w_prefix] = v,
        }
    }

    /// Replaces one player's controls with a deterministic function of time,
    /// the same at every node of a level.
    pub fn override_deterministic(&mut self, player: Player, values: &[f64]) {
        debug_assert_eq!(values.len(), self.depth);
        for k in 0..self.depth {
            let table = match player {
                Player::One => &mut self.v1[k],
                Player::Two => &mut self.v2[k],
            };
            for slot in table.iter_mut() {
                *slot = values[k];
            }
        }
    }

    /// Adds a perturbation `eps * dir(k, w_prefix)` to one player's controls.
    pub fn perturb<F>(&self, player: Player, eps: f64, dir: F) -> PolicyOnTree
    where
        F: Fn(usize, usize) -> f64,
    {
        let mut out = self.clone();
        for k in 0..self.depth {
            let table = match player {
                Player::One => &mut out.v1[k],
                Player::Two => &mut out.v2[k],
            };
            for (w, slot) in table.iter_mut().enumerate() {
                *slot += eps * dir(k, w);
            }
        }
        out
    }
}

/// Everything the exact oracle produces for one policy: the four processes
/// of the game system on the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSolution {
    pub cap_y: TreeProcess,
    pub cap_z: TreeProcess,
    pub y: TreeProcess,
    pub z: TreeProcess,
}

fn check_depth(noise: &TreeNoise) -> Result<usize> {
    // TreeNoise::new already enforces the global depth cap; this is a
    // belt-and-braces check for hand-built instances.
    let depth = noise.depth();
    if depth == 0 {
        return Err(Error::InvalidArgument {
            arg: "depth",
            reason: alloc::string::String::from("the tree needs at least one step"),
        });
    }
    Ok(depth)
}

/// Solves the backward pair `(Y, Z)` on the tree for a fixed policy.
///
/// From the terminal values `Y_N = kappa0 + kappa1 W(T)` the recursion walks
/// one step back at a time. With `E_k` the average over the step-`k` forward
/// sign,
///
/// ```text
/// Z_k = (Y_{k+1}^+ - Y_{k+1}^-) / (2 sqrt(dt))
/// Y_k = E_k[Y_{k+1}] + dt * g(t_k, E_k[Y_{k+1}], Z_k, v1, v2)
///       + g_bar(t_{k+1}) * dB_k
/// ```
///
/// where `g` is the backward drift `a0 + a1 Y + a2 Z + a3 v1 + a4 v2` and
/// the `dB_k` term injects the backward noise: its sign is the step-`k` bit
/// of the suffix, the one resolved at this level. The diffusion coefficient
/// is sampled at the right endpoint, matching a backward integral.
pub fn solve_backward_on_tree(
    spec: &LqGameSpec,
    noise: &TreeNoise,
    policy: &PolicyOnTree,
) -> Result<(TreeProcess, TreeProcess)> {
    let depth = check_depth(noise)?;
    if policy.depth() != depth {
        return Err(Error::InvalidArgument {
            arg: "policy",
            reason: alloc::format!("policy depth {} differs from tree depth {depth}", policy.depth()),
        });
    }
    let grid = noise.grid();
    let dt = grid.delta();
    let sqrt_dt = crate::math::sqrt(dt);
    let width = 1usize << depth;

    let mut cap_y = TreeProcess::zeros(depth);
    let mut cap_z = TreeProcess::zeros(depth);

    // Terminal level: the whole forward history is resolved, no backward
    // signs remain. W(T) is the signed sum of all forward increments.
    {
        let level = cap_y.level_mut(depth);
        for w_bits in 0..width {
            let mut w_t = 0.0;
            for step in 0..depth {
                w_t += TreeNoise::sign(w_bits, depth, step) * sqrt_dt;
            }
            level[w_bits] = spec.terminal.kappa0 + spec.terminal.kappa1 * w_t;
        }
    }

    for k in (0..depth).rev() {
        let t_k = grid.node(k);
        let t_next = grid.node(k + 1);
        let a0 = spec.a0.eval(t_k);
        let a1 = spec.a1.eval(t_k);
        let a2 = spec.a2.eval(t_k);
        let a3 = spec.a3.eval(t_k);
        let a4 = spec.a4.eval(t_k);
        let b0_next = spec.b0.eval(t_next);
        let shift = depth - k; // suffix width at level k
        for w in 0..(1usize << k) {
            let v1 = policy.control(Player::One, k, w);
            let v2 = policy.control(Player::Two, k, w);
            for b in 0..(1usize << shift) {
                // Children at level k+1: forward prefix gains the step-k
                // sign; backward suffix loses its MSB (the step-k sign we
                // are resolving now lives at position shift-1).
                let b_sign_bit = (b >> (shift - 1)) & 1;
                let b_rest = b & ((1usize << (shift - 1)) - 1);
                let up = cap_y.at(k + 1, (w << 1) | 0, b_rest);
                let dn = cap_y.at(k + 1, (w << 1) | 1, b_rest);
                let avg = 0.5 * (up + dn);
                let z = (up - dn) / (2.0 * sqrt_dt);
                let db = if b_sign_bit == 0 { sqrt_dt } else { -sqrt_dt };
                let drift = a0 + a1 * avg + a2 * z + a3 * v1 + a4 * v2;
                let val = avg + dt * drift + b0_next * db;
                cap_y.set(k, w, b, val);
                cap_z.set(k, w, b, z);
            }
        }
    }

    // Z at the terminal level is not defined by the recursion; keep zeros.
    Ok((cap_y, cap_z))
}

/// Solves the forward pair `(y, z)` on the tree for a fixed backward
/// solution.
///
/// `y` starts from `y_0 = M * Y_0` (one value per backward suffix) and moves
/// forward. With `E~_k` the average over the step-`k` backward sign of the
/// drift-updated state
///
/// ```text
/// S(sigma) = y_k + dt * f(t_k, y_k, Y_k, Z_k)          (sigma = sign of dB_k)
/// y_{k+1}  = (S(+) + S(-)) / 2 + d0(t_k) dW_k
/// z_k      = (S(+) - S(-)) / (2 sqrt(dt))
/// ```
///
/// where `f = c0 + c1 y + c2 Y + c3 Z`. The forward-noise term is added
/// after the averaging so the extracted `z` is exactly independent of the
/// step-`k` forward sign.
pub fn solve_forward_on_tree(
    spec: &LqGameSpec,
    noise: &TreeNoise,
    cap_y: &TreeProcess,
    cap_z: &TreeProcess,
) -> Result<(TreeProcess, TreeProcess)> {
    let depth = check_depth(noise)?;
    if cap_y.depth() != depth || cap_z.depth() != depth {
        return Err(Error::InvalidArgument {
            arg: "cap_y",
            reason: alloc::string::String::from("backward solution depth differs from tree depth"),
        });
    }
    let grid = noise.grid();
    let dt = grid.delta();
    let sqrt_dt = crate::math::sqrt(dt);
    let width = 1usize << depth;

    let mut y = TreeProcess::zeros(depth);
    let mut z = TreeProcess::zeros(depth);

    // Initial level: no forward signs resolved, full backward suffix.
    {
        let y0 = y.level_mut(0);
        for b in 0..width {
            y0[b] = spec.m * cap_y.at(0, 0, b);
        }
    }

    for k in 0..depth {
        let t_k = grid.node(k);
        let c0 = spec.c0.eval(t_k);
        let c1 = spec.c1.eval(t_k);
        let c2 = spec.c2.eval(t_k);
        let c3 = spec.c3.eval(t_k);
        let d0 = spec.d0.eval(t_k);
        let shift = depth - k;
        for w in 0..(1usize << k) {
            for b_rest in 0..(1usize << (shift - 1)) {
                // The two step-k backward signs sharing this future: suffix
                // bit shift-1 is the sign of dB_k (0 => +sqrt(dt)).
                let b_up = b_rest; // + sign
                let b_dn = (1usize << (shift - 1)) | b_rest; // - sign
                let mut s = [0.0; 2];
                for (slot, b_full) in [(0usize, b_up), (1usize, b_dn)] {
                    let yy = y.at(k, w, b_full);
                    let f = c0
                        + c1 * yy
                        + c2 * cap_y.at(k, w, b_full)
                        + c3 * cap_z.at(k, w, b_full);
                    s[slot] = yy + dt * f;
                }
                let avg = 0.5 * (s[0] + s[1]);
                let zval = (s[0] - s[1]) / (2.0 * sqrt_dt);
                // Both forward children inherit the averaged state plus their
                // own forward-noise kick.
                y.set(k + 1, (w << 1) | 0, b_rest, avg + d0 * sqrt_dt);
                y.set(k + 1, (w << 1) | 1, b_rest, avg - d0 * sqrt_dt);
                // z is the same for both step-k backward signs by
                // construction; store it under both addresses so level k is
                // fully populated.
                z.set(k, w, b_up, zval);
                z.set(k, w, b_dn, zval);
            }
        }
    }

    Ok((y, z))
}

/// Solves the full coupled system on the tree for a fixed policy.
pub fn solve_on_tree(
    spec: &LqGameSpec,
    noise: &TreeNoise,
    policy: &PolicyOnTree,
) -> Result<TreeSolution> {
    let (cap_y, cap_z) = solve_backward_on_tree(spec, noise, policy)?;
    let (y, z) = solve_forward_on_tree(spec, noise, &cap_y, &cap_z)?;
    Ok(TreeSolution { cap_y, cap_z, y, z })
}

/// Exact expected cost of a policy under a weight set:
///
/// ```text
/// J = -1/2 E[ sum_k dt (w_y y^2 + w_z z^2 + w_Y Y^2 + w_Z Z^2
///                        + w_v1 v1^2 + w_v2 v2^2)(t_k)
///             + w_terminal_y y(T)^2 + w_initial_Y Y(0)^2 ]
/// ```
///
/// with left-endpoint quadrature over the grid, the same convention as the
/// simulation layer.
pub fn eval_cost_on_tree(
    weights: &CostWeights,
    sol: &TreeSolution,
    noise: &TreeNoise,
    policy: &PolicyOnTree,
) -> Result<f64> {
    let depth = check_depth(noise)?;
    if sol.y.depth() != depth || policy.depth() != depth {
        return Err(Error::InvalidArgument {
            arg: "sol",
            reason: alloc::string::String::from("solution or policy depth differs from tree depth"),
        });
    }
    let grid = noise.grid();
    let dt = grid.delta();
    let width = (1usize << depth) as f64;

    let mut running = 0.0;
    for k in 0..depth {
        let t = grid.node(k);
        let wy = weights.w_y.eval(t);
        let wz = weights.w_z.eval(t);
        let wcy = weights.w_cap_y.eval(t);
        let wcz = weights.w_cap_z.eval(t);
        let wv1 = weights.w_v1.eval(t);
        let wv2 = weights.w_v2.eval(t);

        let mut level_sum = 0.0;
        let shift = depth - k;
        for w in 0..(1usize << k) {
            let v1 = policy.control(Player::One, k, w);
            let v2 = policy.control(Player::Two, k, w);
            let control_part = wv1 * v1 * v1 + wv2 * v2 * v2;
            for b in 0..(1usize << shift) {
                let yy = sol.y.at(k, w, b);
                let zz = sol.z.at(k, w, b);
                let cy = sol.cap_y.at(k, w, b);
                let cz = sol.cap_z.at(k, w, b);
                level_sum += wy * yy * yy
                    + wz * zz * zz
                    + wcy * cy * cy
                    + wcz * cz * cz
                    + control_part;
            }
        }
        running += dt * level_sum / width;
    }

    let terminal = weights.w_terminal_y * sol.y.mean_square(depth);
    let initial = weights.w_initial_cap_y * sol.cap_y.mean_square(0);
    Ok(-0.5 * (running + terminal + initial))
}

/// Exact expected cost of one player's own criterion.
pub fn eval_player_cost_on_tree(
    spec: &LqGameSpec,
    player: Player,
    sol: &TreeSolution,
    noise: &TreeNoise,
    policy: &PolicyOnTree,
) -> Result<f64> {
    eval_cost_on_tree(&spec.weights(player), sol, noise, policy)
}

/// Renders a node feedback policy onto the tree by co-evolving the filtered
/// system along each forward prefix. The controls at a node depend only on
/// the forward history, so the result is adapted by construction.
pub fn compose_on_tree(
    policy: &NodePolicy,
    stepper: &crate::filtering::DecoupledStepper,
    noise: &TreeNoise,
) -> Result<PolicyOnTree> {
    let depth = check_depth(noise)?;
    if policy.grid() != noise.grid() || stepper.grid() != noise.grid() {
        return Err(Error::InvalidArgument {
            arg: "policy",
            reason: alloc::string::String::from(
                "policy, filter, and tree must share one time grid",
            ),
        });
    }
    let sqrt_dt = crate::math::sqrt(noise.grid().delta());
    let mut out = PolicyOnTree::zero(depth);

    // One filtered state per forward prefix, advanced level by level. The
    // filtered dynamics are driven by the forward noise only.
    let mut states: Vec<crate::mat::VecN> = vec![stepper.initial_x().clone()];
    let mut w_values: Vec<f64> = vec![0.0];
    for k in 0..depth {
        for (w_prefix, x) in states.iter().enumerate() {
            let c = policy.controls(k, x[1], x[2]);
            out.set_control(Player::One, k, w_prefix, c.v1);
            out.set_control(Player::Two, k, w_prefix, c.v2);
        }
        // Advance every prefix along both forward signs.
        let mut next_states = Vec::with_capacity(states.len() * 2);
        let mut next_w = Vec::with_capacity(states.len() * 2);
        for (w_prefix, x) in states.iter().enumerate() {
            let w = w_values[w_prefix];
            for sign in [1.0, -1.0] {
                let dw = sign * sqrt_dt;
                next_states.push(stepper.x_step(k, x, w, dw));
                next_w.push(w + dw);
            }
        }
        states = next_states;
        w_values = next_w;
    }
    Ok(out)
}

/// Filtered states computed by the decoupled stepper along every forward
/// prefix of the tree, for cross-checking against tree-filtered quantities.
pub struct TreeFilterStates {
    pub depth: usize,
    /// `x[k][w_prefix]` is the filtered 3-vector at level `k`.
    pub x: Vec<Vec<crate::mat::VecN>>,
    /// `cap_y[k][w_prefix]` is the ansatz backward 3-vector.
    pub cap_y: Vec<Vec<crate::mat::VecN>>,
}

/// Runs the decoupled stepper along all forward prefixes.
pub fn filter_states_on_tree(
    stepper: &crate::filtering::DecoupledStepper,
    noise: &TreeNoise,
) -> Result<TreeFilterStates> {
    let depth = check_depth(noise)?;
    if stepper.grid() != noise.grid() {
        return Err(Error::InvalidArgument {
            arg: "stepper",
            reason: alloc::string::String::from("filter and tree must share one time grid"),
        });
    }
    let sqrt_dt = crate::math::sqrt(noise.grid().delta());
    let mut x_levels = Vec::with_capacity(depth + 1);
    let mut y_levels = Vec::with_capacity(depth + 1);
    let mut states: Vec<crate::mat::VecN> = vec![stepper.initial_x().clone()];
    let mut w_values: Vec<f64> = vec![0.0];
    for k in 0..=depth {
        let ys: Vec<crate::mat::VecN> = states
            .iter()
            .zip(&w_values)
            .map(|(x, &w)| stepper.cap_y(k, x, w))
            .collect();
        x_levels.push(states.clone());
        y_levels.push(ys);
        if k < depth {
            let mut next_states = Vec::with_capacity(states.len() * 2);
            let mut next_w = Vec::with_capacity(states.len() * 2);
            for (x, &w) in states.iter().zip(&w_values) {
                for sign in [1.0, -1.0] {
                    let dw = sign * sqrt_dt;
                    next_states.push(stepper.x_step(k, x, w, dw));
                    next_w.push(w + dw);
                }
            }
            states = next_states;
            w_values = next_w;
        }
    }
    Ok(TreeFilterStates { depth, x: x_levels, cap_y: y_levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientFn;
    use crate::model::{InfoStructure, PlayerCost, TerminalCondition};
    use crate::noise::TimeGrid;

    fn konst(x: f64) -> CoefficientFn {
        CoefficientFn::Constant(x)
    }

    fn zero_spec() -> LqGameSpec {
        let cost = || PlayerCost {
            e1: konst(0.0),
            e2: konst(0.0),
            e3: konst(0.0),
            e4: konst(0.0),
            e5: 0.0,
            e6: 0.0,
            e7: konst(1.0),
        };
        LqGameSpec {
            horizon: 1.0,
            a0: konst(0.0),
            a1: konst(0.0),
            a2: konst(0.0),
            a3: konst(0.0),
            a4: konst(0.0),
            b0: konst(0.0),
            c0: konst(0.0),
            c1: konst(0.0),
            c2: konst(0.0),
            c3: konst(0.0),
            d0: konst(0.0),
            cost1: cost(),
            cost2: cost(),
            m: 1.0,
            terminal: TerminalCondition { kappa0: 1.0, kappa1: 0.0 },
            info: InfoStructure::WFiltration,
        }
    }

    fn tree(steps: usize) -> TreeNoise {
        TreeNoise::new(&TimeGrid::new(1.0, steps).unwrap()).unwrap()
    }

    #[test]
    fn constant_terminal_with_linear_drift_compounds() {
        // -dY = a1 Y dt with Y(T) = 1 gives Y_k = (1 + a1 dt) Y_{k+1}:
        // Y_0 = (1 + dt)^N exactly on the tree.
        let mut spec = zero_spec();
        spec.a1 = konst(1.0);
        for steps in [1usize, 2, 4, 8] {
            let noise = tree(steps);
            let policy = PolicyOnTree::zero(steps);
            let (cap_y, cap_z) = solve_backward_on_tree(&spec, &noise, &policy).unwrap();
            let dt = 1.0 / steps as f64;
            let expect = (1.0 + dt).powi(steps as i32);
            for b in 0..(1usize << steps) {
                assert!((cap_y.at(0, 0, b) - expect).abs() < 1e-12, "steps {steps}");
            }
            assert_eq!(cap_z.mean(0), 0.0);
        }
    }

    #[test]
    fn linear_terminal_noise_extracts_exact_martingale_integrand() {
        // Y(T) = W(T) propagates as the running W; Z must be exactly 1.
        let mut spec = zero_spec();
        spec.terminal = TerminalCondition { kappa0: 0.0, kappa1: 1.0 };
        let noise = tree(4);
        let policy = PolicyOnTree::zero(4);
        let (cap_y, cap_z) = solve_backward_on_tree(&spec, &noise, &policy).unwrap();
        for k in 0..4 {
            for w in 0..(1usize << k) {
                for b in 0..(1usize << (4 - k)) {
                    assert!((cap_z.at(k, w, b) - 1.0).abs() < 1e-12);
                }
            }
        }
        // And Y_k equals the running forward noise at step k.
        for k in 0..=4 {
            for w in 0..(1usize << k) {
                let expect = noise.level_value(w, k, k);
                for b in 0..(1usize << (4 - k)) {
                    assert!((cap_y.at(k, w, b) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn backward_noise_coefficient_enters_with_sign() {
        // -dY = b0 dB~ with Y(T) = 0: one step, Y_0 = b0 * dB_0.
        let mut spec = zero_spec();
        spec.terminal = TerminalCondition { kappa0: 0.0, kappa1: 0.0 };
        spec.b0 = konst(0.5);
        let noise = tree(1);
        let policy = PolicyOnTree::zero(1);
        let (cap_y, _) = solve_backward_on_tree(&spec, &noise, &policy).unwrap();
        // suffix bit 0 at level 0 is the step-0 backward sign (0 => +).
        assert!((cap_y.at(0, 0, 0) - 0.5).abs() < 1e-15);
        assert!((cap_y.at(0, 0, 1) + 0.5).abs() < 1e-15);
        // Filtering over the backward sign removes it.
        assert_eq!(cap_y.filter_level(0), vec![0.0]);
    }

    #[test]
    fn forward_picks_up_initial_coupling_and_noise() {
        // Pure noise forward state: y_0 = M Y_0 = kappa0, dy = d0 dW.
        let mut spec = zero_spec();
        spec.m = 2.0;
        spec.d0 = konst(0.3);
        let noise = tree(3);
        let policy = PolicyOnTree::zero(3);
        let sol = solve_on_tree(&spec, &noise, &policy).unwrap();
        let sqrt_dt = (1.0f64 / 3.0).sqrt();
        for w in 0..(1usize << 3) {
            let mut expect = 2.0; // M * kappa0
            for step in 0..3 {
                expect += 0.3 * TreeNoise::sign(w, 3, step) * sqrt_dt;
            }
            assert!((sol.y.at(3, w, 0) - expect).abs() < 1e-12);
        }
        // z of a noise-only forward state vanishes.
        for k in 0..3 {
            assert_eq!(sol.z.mean_square(k), 0.0);
        }
    }

    #[test]
    fn forward_z_extracts_backward_noise_dependence() {
        // One step: y_0 = M Y_0 = M b0 dB_0 depends on the backward sign;
        // z_0 = (S+ - S-) / (2 sqrt(dt)) = M b0 sqrt(dt) / sqrt(dt) = M b0.
        let mut spec = zero_spec();
        spec.terminal = TerminalCondition { kappa0: 0.0, kappa1: 0.0 };
        spec.b0 = konst(0.5);
        spec.m = 3.0;
        let noise = tree(1);
        let policy = PolicyOnTree::zero(1);
        let sol = solve_on_tree(&spec, &noise, &policy).unwrap();
        assert!((sol.z.at(0, 0, 0) - 1.5).abs() < 1e-12);
        assert!((sol.z.at(0, 0, 1) - 1.5).abs() < 1e-12);
        // After the step the backward sign is averaged out: y_1 = 0 + d0 dW = 0.
        assert_eq!(sol.y.at(1, 0, 0), 0.0);
        assert_eq!(sol.y.at(1, 1, 0), 0.0);
    }

    #[test]
    fn constant_processes_price_the_trivial_cost() {
        // All dynamics zero, terminal 1, M = 1: Y = y = 1, Z = z = 0
        // everywhere. With all weights 1 and zero controls,
        // J = -1/2 [ sum_k dt (1 + 1) + 1 + 1 ] = -1/2 (2 + 2) = -2.
        let mut spec = zero_spec();
        let all_one = PlayerCost {
            e1: konst(1.0),
            e2: konst(1.0),
            e3: konst(1.0),
            e4: konst(1.0),
            e5: 1.0,
            e6: 1.0,
            e7: konst(1.0),
        };
        spec.cost1 = all_one.clone();
        spec.cost2 = all_one;
        for steps in [1usize, 2, 5] {
            let noise = tree(steps);
            let policy = PolicyOnTree::zero(steps);
            let sol = solve_on_tree(&spec, &noise, &policy).unwrap();
            for player in Player::BOTH {
                let j = eval_player_cost_on_tree(&spec, player, &sol, &noise, &policy).unwrap();
                assert!((j - (-2.0)).abs() < 1e-12, "steps {steps}: {j}");
            }
        }
    }

    #[test]
    fn control_cost_is_quadratic_in_constant_control() {
        // Dynamics ignore the control (a3 = 0) but the cost charges it:
        // J(v) = J(0) - 1/2 e17 v^2 T exactly.
        let spec = zero_spec();
        let noise = tree(3);
        let base = PolicyOnTree::zero(3);
        let j0 = {
            let sol = solve_on_tree(&spec, &noise, &base).unwrap();
            eval_player_cost_on_tree(&spec, Player::One, &sol, &noise, &base).unwrap()
        };
        let perturbed = base.perturb(Player::One, 0.7, |_, _| 1.0);
        let sol = solve_on_tree(&spec, &noise, &perturbed).unwrap();
        let j = eval_player_cost_on_tree(&spec, Player::One, &sol, &noise, &perturbed).unwrap();
        assert!((j - (j0 - 0.5 * 0.49)).abs() < 1e-12);
    }

    #[test]
    fn filtering_removes_backward_dependence_only() {
        // Y_0 depends on every backward sign; its filter is the plain mean.
        let mut spec = zero_spec();
        spec.b0 = konst(0.4);
        spec.terminal = TerminalCondition { kappa0: 1.0, kappa1: 0.25 };
        let noise = tree(4);
        let policy = PolicyOnTree::zero(4);
        let (cap_y, _) = solve_backward_on_tree(&spec, &noise, &policy).unwrap();
        let filtered = cap_y.filter_level(0);
        assert_eq!(filtered.len(), 1);
        assert!((filtered[0] - cap_y.mean(0)).abs() < 1e-14);
        // Mid-level filter has one value per forward prefix and averages the
        // suffix block.
        let f2 = cap_y.filter_level(2);
        assert_eq!(f2.len(), 4);
        let manual: f64 = (0..4).map(|b| cap_y.at(2, 1, b)).sum::<f64>() / 4.0;
        assert!((f2[1] - manual).abs() < 1e-14);
    }

    #[test]
    fn deterministic_override_and_perturbation_compose() {
        let mut p = PolicyOnTree::zero(3);
        p.override_deterministic(Player::Two, &[0.1, 0.2, 0.3]);
        assert_eq!(p.control(Player::Two, 1, 0), 0.2);
        assert_eq!(p.control(Player::Two, 1, 1), 0.2);
        assert_eq!(p.control(Player::One, 1, 1), 0.0);
        let q = p.perturb(Player::Two, 2.0, |k, _| k as f64);
        assert_eq!(q.control(Player::Two, 2, 3), 0.3 + 4.0);
        assert_eq!(q.control(Player::One, 2, 3), 0.0);
        // The original is untouched.
        assert_eq!(p.control(Player::Two, 2, 3), 0.3);
    }

    #[test]
    fn tree_process_addressing_round_trips() {
        let mut p = TreeProcess::zeros(3);
        p.set(1, 1, 2, 7.5);
        assert_eq!(p.at(1, 1, 2), 7.5);
        assert_eq!(p.level(1)[(1 << 2) | 2], 7.5);
        assert_eq!(p.width(), 8);
    }
}
