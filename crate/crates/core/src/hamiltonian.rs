//! Pointwise Hamiltonian evaluation, adjoint-system assembly, stationarity
//! residuals, and the concavity (definiteness) check backing the verification
//! theorems.
//!
//! For dynamics with forward drift `f`, forward diffusion `f_bar`, backward
//! drift `g`, and backward noise coefficient `g_bar`, the player-`i`
//! Hamiltonian is
//!
//! ```text
//! H_i = q f + qbar f_bar - p g - pbar g_bar + l_i ,
//! l_i = -1/2 (e_i1 y^2 + e_i2 z^2 + e_i3 Y^2 + e_i4 Z^2 + e_i7 v_i^2),
//! ```
//!
//! and the zero-sum Hamiltonian uses the shared running cost
//! `l = 1/2 (l1 y^2 + l2 z^2 + l3 Y^2 + l4 Z^2) + 1/2 r1 v1^2 - 1/2 r2 v2^2`
//! (the integrand of the single cost `J` that player One minimizes and player
//! Two maximizes). With the paired views `J1 = -J`, `J2 = J`, the zero-sum
//! Hamiltonian coincides with the player-Two Hamiltonian, and equals the
//! negated player-One Hamiltonian evaluated at the negated adjoint vector.

use crate::coeff::CoefficientFn;
use crate::model::{
    CostWeights, GeneralCoefficients, LqGameSpec, Player, ZeroSumSpec, validate_spec,
};
use crate::Result;

/// Forward/backward state values at one instant: `(y, z)` from the forward
/// equation, `(Y, Z)` (written `cap_y`, `cap_z`) from the backward one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameState {
    pub y: f64,
    pub z: f64,
    pub cap_y: f64,
    pub cap_z: f64,
}

impl GameState {
    pub const ZERO: GameState = GameState { y: 0.0, z: 0.0, cap_y: 0.0, cap_z: 0.0 };
}

/// Adjoint values at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointState {
    pub p: f64,
    pub pbar: f64,
    pub q: f64,
    pub qbar: f64,
}

impl AdjointState {
    pub const ZERO: AdjointState = AdjointState { p: 0.0, pbar: 0.0, q: 0.0, qbar: 0.0 };

    pub fn negated(&self) -> AdjointState {
        AdjointState { p: -self.p, pbar: -self.pbar, q: -self.q, qbar: -self.qbar }
    }
}

/// The two control values at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPair {
    pub v1: f64,
    pub v2: f64,
}

impl ControlPair {
    pub const ZERO: ControlPair = ControlPair { v1: 0.0, v2: 0.0 };

    pub fn of(self, player: Player) -> f64 {
        match player {
            Player::One => self.v1,
            Player::Two => self.v2,
        }
    }
}

/// Borrowed view of the shared dynamic coefficients, so the same pairing code
/// serves nonzero-sum and zero-sum instances.
pub struct DynamicsRef<'a> {
    pub a0: &'a CoefficientFn,
    pub a1: &'a CoefficientFn,
    pub a2: &'a CoefficientFn,
    pub a3: &'a CoefficientFn,
    pub a4: &'a CoefficientFn,
    pub b0: &'a CoefficientFn,
    pub c0: &'a CoefficientFn,
    pub c1: &'a CoefficientFn,
    pub c2: &'a CoefficientFn,
    pub c3: &'a CoefficientFn,
    pub d0: &'a CoefficientFn,
}

impl<'a> DynamicsRef<'a> {
    pub fn from_lq(spec: &'a LqGameSpec) -> DynamicsRef<'a> {
        DynamicsRef {
            a0: &spec.a0,
            a1: &spec.a1,
            a2: &spec.a2,
            a3: &spec.a3,
            a4: &spec.a4,
            b0: &spec.b0,
            c0: &spec.c0,
            c1: &spec.c1,
            c2: &spec.c2,
            c3: &spec.c3,
            d0: &spec.d0,
        }
    }

    pub fn from_zero_sum(spec: &'a ZeroSumSpec) -> DynamicsRef<'a> {
        DynamicsRef {
            a0: &spec.a0,
            a1: &spec.a1,
            a2: &spec.a2,
            a3: &spec.a3,
            a4: &spec.a4,
            b0: &spec.b0,
            c0: &spec.c0,
            c1: &spec.c1,
            c2: &spec.c2,
            c3: &spec.c3,
            d0: &spec.d0,
        }
    }

    /// Forward drift `f = c0 + c1 y + c2 Y + c3 Z`.
    pub fn forward_drift(&self, t: f64, s: &GameState) -> f64 {
        self.c0.eval(t) + self.c1.eval(t) * s.y + self.c2.eval(t) * s.cap_y
            + self.c3.eval(t) * s.cap_z
    }

    /// Backward drift `g = a0 + a1 Y + a2 Z + a3 v1 + a4 v2`.
    pub fn backward_drift(&self, t: f64, s: &GameState, c: &ControlPair) -> f64 {
        self.a0.eval(t)
            + self.a1.eval(t) * s.cap_y
            + self.a2.eval(t) * s.cap_z
            + self.a3.eval(t) * c.v1
            + self.a4.eval(t) * c.v2
    }

    /// Adjoint-dynamics pairing `q f + qbar f_bar - p g - pbar g_bar`.
    pub fn pairing(&self, t: f64, s: &GameState, c: &ControlPair, a: &AdjointState) -> f64 {
        a.q * self.forward_drift(t, s)
            + a.qbar * self.d0.eval(t)
            - a.p * self.backward_drift(t, s, c)
            - a.pbar * self.b0.eval(t)
    }
}

impl CostWeights {
    /// The weighted running square sum
    /// `w_y y^2 + w_z z^2 + w_cap_y Y^2 + w_cap_z Z^2 + w_v1 v1^2 + w_v2 v2^2`
    /// (without the `-1/2` factor of the cost normal form).
    pub fn running_square_sum(&self, t: f64, s: &GameState, c: &ControlPair) -> f64 {
        self.w_y.eval(t) * s.y * s.y
            + self.w_z.eval(t) * s.z * s.z
            + self.w_cap_y.eval(t) * s.cap_y * s.cap_y
            + self.w_cap_z.eval(t) * s.cap_z * s.cap_z
            + self.w_v1.eval(t) * c.v1 * c.v1
            + self.w_v2.eval(t) * c.v2 * c.v2
    }
}

/// Hamiltonian under an arbitrary signed weight set:
/// `pairing - 1/2 * running_square_sum`.
pub fn eval_hamiltonian_with_weights(
    dynamics: &DynamicsRef<'_>,
    weights: &CostWeights,
    t: f64,
    s: &GameState,
    c: &ControlPair,
    a: &AdjointState,
) -> f64 {
    dynamics.pairing(t, s, c, a) - 0.5 * weights.running_square_sum(t, s, c)
}

/// Player-`i` Hamiltonian of a nonzero-sum instance.
pub fn eval_hamiltonian_nz(
    player: Player,
    t: f64,
    s: &GameState,
    c: &ControlPair,
    a: &AdjointState,
    spec: &LqGameSpec,
) -> f64 {
    let dynamics = DynamicsRef::from_lq(spec);
    let weights = spec.weights(player);
    eval_hamiltonian_with_weights(&dynamics, &weights, t, s, c, a)
}

/// Zero-sum Hamiltonian `q f + qbar f_bar - p g - pbar g_bar + l` with the
/// shared running cost `l` (positive `+1/2 r1 v1^2`, negative `-1/2 r2 v2^2`
/// control terms, so the candidate is a minimum in `v1` and a maximum in
/// `v2`). Identical to the player-Two Hamiltonian of the paired views.
pub fn eval_hamiltonian_zs(
    t: f64,
    s: &GameState,
    c: &ControlPair,
    a: &AdjointState,
    spec: &ZeroSumSpec,
) -> f64 {
    let dynamics = DynamicsRef::from_zero_sum(spec);
    let weights = spec.to_views().player2;
    eval_hamiltonian_with_weights(&dynamics, &weights, t, s, c, a)
}

/// Which running cost a general-coefficients Hamiltonian evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunningCost {
    PlayerOne,
    PlayerTwo,
    Shared,
}

/// Hamiltonian evaluation through the general (callable) coefficient
/// mappings; the independent assembly used to cross-check the closed-form
/// linear-quadratic evaluation.
pub fn eval_hamiltonian_general(
    gc: &GeneralCoefficients,
    cost: RunningCost,
    t: f64,
    s: &GameState,
    c: &ControlPair,
    a: &AdjointState,
) -> f64 {
    let args = (t, s.y, s.z, s.cap_y, s.cap_z, c.v1, c.v2);
    let call = |f: &crate::model::StateControlFn| f(args.0, args.1, args.2, args.3, args.4, args.5, args.6);
    let l = match cost {
        RunningCost::PlayerOne => call(&gc.l1),
        RunningCost::PlayerTwo => call(&gc.l2),
        RunningCost::Shared => call(&gc.l),
    };
    a.q * call(&gc.f) + a.qbar * call(&gc.f_bar) - a.p * call(&gc.g) - a.pbar * call(&gc.g_bar) + l
}

/// Coefficient functions of one player's adjoint forward-backward system.
///
/// The adjoint pair `(p_i, pbar_i)` solves a forward equation and
/// `(q_i, qbar_i)` a backward one:
///
/// ```text
/// dp_i  = (e_i3 Y + a1 p_i - c2 q_i) dt + (e_i4 Z + a2 p_i - c3 q_i) dW - pbar_i dB
/// -dq_i = (-e_i1 y + c1 q_i) dt - e_i2 z dB - qbar_i dW
/// p_i(0) = e_i6 Y(0) - M q_i(0),    q_i(T) = -e_i5 y(T)
/// ```
///
/// Every field below is assembled directly from the spec so that the
/// filtering module's block matrices can be cross-checked entry by entry
/// against an independent construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointBlock {
    /// Coefficient of `Y` in the `p_i` drift (`e_i3`).
    pub p_drift_cap_y: CoefficientFn,
    /// Coefficient of `p_i` in its own drift (`a1`).
    pub p_drift_p: CoefficientFn,
    /// Coefficient of `q_i` in the `p_i` drift (`-c2`).
    pub p_drift_q: CoefficientFn,
    /// Coefficient of `Z` in the `p_i` diffusion (`e_i4`).
    pub p_diff_cap_z: CoefficientFn,
    /// Coefficient of `p_i` in its diffusion (`a2`).
    pub p_diff_p: CoefficientFn,
    /// Coefficient of `q_i` in its diffusion (`-c3`).
    pub p_diff_q: CoefficientFn,
    /// Coefficient of `y` in the `-dq_i` drift (`-e_i1`).
    pub q_drift_y: CoefficientFn,
    /// Coefficient of `q_i` in the `-dq_i` drift (`c1`).
    pub q_drift_q: CoefficientFn,
    /// Coefficient of `z` in the backward-noise term of `-dq_i` (`-e_i2`).
    pub q_noise_z: CoefficientFn,
    /// `p_i(0) = initial_cap_y * Y(0) + initial_q * q_i(0)`: `(e_i6, -M)`.
    pub initial_cap_y: f64,
    pub initial_q: f64,
    /// `q_i(T) = terminal_y * y(T)`: `-e_i5`.
    pub terminal_y: f64,
}

/// Both players' adjoint systems.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSystem {
    pub player1: AdjointBlock,
    pub player2: AdjointBlock,
}

impl AdjointSystem {
    pub fn block(&self, player: Player) -> &AdjointBlock {
        match player {
            Player::One => &self.player1,
            Player::Two => &self.player2,
        }
    }
}

/// Builds the per-player adjoint system description from a valid spec.
pub fn assemble_adjoint_system(spec: &LqGameSpec) -> Result<AdjointSystem> {
    validate_spec(spec).into_result()?;
    let block = |player: Player| {
        let cost = spec.cost(player);
        AdjointBlock {
            p_drift_cap_y: cost.e3.clone(),
            p_drift_p: spec.a1.clone(),
            p_drift_q: spec.c2.negated(),
            p_diff_cap_z: cost.e4.clone(),
            p_diff_p: spec.a2.clone(),
            p_diff_q: spec.c3.negated(),
            q_drift_y: cost.e1.negated(),
            q_drift_q: spec.c1.clone(),
            q_noise_z: cost.e2.negated(),
            initial_cap_y: cost.e6,
            initial_q: -spec.m,
            terminal_y: -cost.e5,
        }
    };
    Ok(AdjointSystem { player1: block(Player::One), player2: block(Player::Two) })
}

/// The conditional first-order condition residual at one instant:
/// `-a3 p1~ - e17 u1` for player One, `-a4 p2~ - e27 u2` for player Two,
/// where `p_i~` is the filtered adjoint value. Vanishes identically at the
/// synthesized feedback `u_i = -(gain/weight) p_i~`.
pub fn stationarity_residual(
    player: Player,
    t: f64,
    filtered_p: f64,
    control: f64,
    spec: &LqGameSpec,
) -> f64 {
    let gain = spec.control_gain(player).eval(t);
    let weight = spec.cost(player).e7.eval(t);
    -gain * filtered_p - weight * control
}

/// One definiteness violation found by [`arrow_condition_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrowViolation {
    pub player: Player,
    /// Weight slot 1..6 (`e_i1..e_i6`).
    pub weight_index: usize,
    pub t: f64,
    pub value: f64,
}

/// Outcome of the concavity check.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrowReport {
    pub pass: bool,
    pub first_violation: Option<ArrowViolation>,
}

/// Concavity of the maximized Hamiltonian in the states, specialized to the
/// quadratic case: each state weight `e_i1..e_i4` must be nonnegative
/// pointwise (piecewise values checked exactly, polynomials on a dense time
/// sample) and the boundary weights `e_i5`, `e_i6` nonnegative.
pub fn arrow_condition_check(spec: &LqGameSpec) -> ArrowReport {
    for player in Player::BOTH {
        let cost = spec.cost(player);
        let running: [(usize, &CoefficientFn); 4] =
            [(1, &cost.e1), (2, &cost.e2), (3, &cost.e3), (4, &cost.e4)];
        for (weight_index, c) in running {
            let (min, at) = c.min_on(spec.horizon);
            if min < 0.0 {
                return ArrowReport {
                    pass: false,
                    first_violation: Some(ArrowViolation { player, weight_index, t: at, value: min }),
                };
            }
        }
        for (weight_index, v) in [(5, cost.e5), (6, cost.e6)] {
            if v < 0.0 {
                return ArrowReport {
                    pass: false,
                    first_violation: Some(ArrowViolation { player, weight_index, t: 0.0, value: v }),
                };
            }
        }
    }
    ArrowReport { pass: true, first_violation: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InfoStructure, PlayerCost, TerminalCondition};
    use alloc::vec;

    fn konst(x: f64) -> CoefficientFn {
        CoefficientFn::Constant(x)
    }

    fn zero_spec() -> LqGameSpec {
        let cost = PlayerCost {
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
            cost1: cost.clone(),
            cost2: cost,
            m: 1.0,
            terminal: TerminalCondition { kappa0: 0.0, kappa1: 0.0 },
            info: InfoStructure::WFiltration,
        }
    }

    fn rich_spec() -> LqGameSpec {
        let mut spec = zero_spec();
        spec.a0 = konst(0.1);
        spec.a1 = konst(0.3);
        spec.a2 = konst(0.2);
        spec.a3 = konst(0.8);
        spec.a4 = konst(0.6);
        spec.b0 = konst(0.2);
        spec.c0 = konst(0.05);
        spec.c1 = konst(-0.25);
        spec.c2 = CoefficientFn::PiecewiseConstant(vec![(0.0, 0.3), (0.5, 0.2)]);
        spec.c3 = konst(0.1);
        spec.d0 = konst(0.3);
        spec.cost1 = PlayerCost {
            e1: konst(0.10),
            e2: konst(0.05),
            e3: CoefficientFn::Polynomial(vec![0.05, 0.05]),
            e4: konst(0.05),
            e5: 0.10,
            e6: 0.10,
            e7: konst(1.0),
        };
        spec.cost2 = PlayerCost {
            e1: konst(0.08),
            e2: konst(0.04),
            e3: konst(0.06),
            e4: konst(0.04),
            e5: 0.08,
            e6: 0.12,
            e7: konst(1.0),
        };
        spec.terminal = TerminalCondition { kappa0: 0.5, kappa1: 0.25 };
        spec
    }

    fn zero_sum_from(spec: &LqGameSpec, r1: f64, r2: f64) -> ZeroSumSpec {
        ZeroSumSpec {
            horizon: spec.horizon,
            a0: spec.a0.clone(),
            a1: spec.a1.clone(),
            a2: spec.a2.clone(),
            a3: spec.a3.clone(),
            a4: spec.a4.clone(),
            b0: spec.b0.clone(),
            c0: spec.c0.clone(),
            c1: spec.c1.clone(),
            c2: spec.c2.clone(),
            c3: spec.c3.clone(),
            d0: spec.d0.clone(),
            l1: konst(0.0),
            l2: konst(0.0),
            l3: konst(0.0),
            l4: konst(0.0),
            l5: 0.0,
            l6: 0.0,
            r1: konst(r1),
            r2: konst(r2),
            m: spec.m,
            terminal: spec.terminal,
            info: spec.info,
        }
    }

    #[test]
    fn control_cost_alone_gives_negative_half_square() {
        let spec = zero_spec();
        let c = ControlPair { v1: 2.0, v2: 0.0 };
        let h = eval_hamiltonian_nz(Player::One, 0.0, &GameState::ZERO, &c, &AdjointState::ZERO, &spec);
        assert_eq!(h, -2.0);
    }

    #[test]
    fn single_drift_pairing_survives() {
        let mut spec = zero_spec();
        spec.c0 = konst(1.0);
        let a = AdjointState { q: 3.0, ..AdjointState::ZERO };
        let h = eval_hamiltonian_nz(Player::One, 0.0, &GameState::ZERO, &ControlPair::ZERO, &a, &spec);
        assert_eq!(h, 3.0);
    }

    #[test]
    fn matches_brute_force_expansion_at_random_point() {
        let spec = rich_spec();
        let t = 0.7;
        let s = GameState { y: 0.4, z: -0.3, cap_y: 1.2, cap_z: 0.5 };
        let c = ControlPair { v1: 0.6, v2: -0.8 };
        let a = AdjointState { p: 0.9, pbar: -0.2, q: 1.1, qbar: 0.7 };
        for player in Player::BOTH {
            let h = eval_hamiltonian_nz(player, t, &s, &c, &a, &spec);
            // Independent term-by-term expansion.
            let f = spec.c0.eval(t) + spec.c1.eval(t) * s.y + spec.c2.eval(t) * s.cap_y
                + spec.c3.eval(t) * s.cap_z;
            let g = spec.a0.eval(t) + spec.a1.eval(t) * s.cap_y + spec.a2.eval(t) * s.cap_z
                + spec.a3.eval(t) * c.v1 + spec.a4.eval(t) * c.v2;
            let cost = spec.cost(player);
            let own = c.of(player);
            let l = -0.5
                * (cost.e1.eval(t) * s.y * s.y
                    + cost.e2.eval(t) * s.z * s.z
                    + cost.e3.eval(t) * s.cap_y * s.cap_y
                    + cost.e4.eval(t) * s.cap_z * s.cap_z
                    + cost.e7.eval(t) * own * own);
            let expect = a.q * f + a.qbar * spec.d0.eval(t) - a.p * g - a.pbar * spec.b0.eval(t) + l;
            assert!((h - expect).abs() < 1e-12, "player {player:?}: {h} vs {expect}");
        }
    }

    #[test]
    fn general_coefficient_evaluation_agrees_with_closed_form() {
        let spec = rich_spec();
        let gc = GeneralCoefficients::from_lq(&spec);
        let t = 0.3;
        let s = GameState { y: -0.5, z: 0.8, cap_y: 0.3, cap_z: -1.1 };
        let c = ControlPair { v1: -0.4, v2: 0.9 };
        let a = AdjointState { p: 0.2, pbar: 1.3, q: -0.6, qbar: 0.4 };
        let h1 = eval_hamiltonian_nz(Player::One, t, &s, &c, &a, &spec);
        let h1g = eval_hamiltonian_general(&gc, RunningCost::PlayerOne, t, &s, &c, &a);
        assert!((h1 - h1g).abs() < 1e-12);
        let h2 = eval_hamiltonian_nz(Player::Two, t, &s, &c, &a, &spec);
        let h2g = eval_hamiltonian_general(&gc, RunningCost::PlayerTwo, t, &s, &c, &a);
        assert!((h2 - h2g).abs() < 1e-12);
    }

    #[test]
    fn zero_sum_hamiltonian_orientation() {
        // Control terms only: +1/2 r1 v1^2 (convex in the minimizer's control).
        let spec = zero_spec();
        let zs = zero_sum_from(&spec, 2.0, 1.0);
        let c = ControlPair { v1: 1.0, v2: 0.0 };
        let h = eval_hamiltonian_zs(0.0, &GameState::ZERO, &c, &AdjointState::ZERO, &zs);
        assert_eq!(h, 1.0);
        let c2 = ControlPair { v1: 0.0, v2: 1.0 };
        let h2 = eval_hamiltonian_zs(0.0, &GameState::ZERO, &c2, &AdjointState::ZERO, &zs);
        assert_eq!(h2, -0.5);
    }

    #[test]
    fn zero_sum_equals_paired_views() {
        let spec = rich_spec();
        let zs = zero_sum_from(&spec, 1.0, 1.25);
        let lq = zs.as_lq_game().unwrap();
        let views = zs.to_views();
        let dynamics = DynamicsRef::from_zero_sum(&zs);
        let t = 0.45;
        let s = GameState { y: 0.2, z: -0.7, cap_y: 0.9, cap_z: 0.1 };
        let c = ControlPair { v1: 0.3, v2: -0.6 };
        let a = AdjointState { p: -0.8, pbar: 0.5, q: 0.4, qbar: -0.3 };
        let h_zs = eval_hamiltonian_zs(t, &s, &c, &a, &zs);
        // Equals the player-Two view Hamiltonian at the same adjoint...
        let h2 = eval_hamiltonian_with_weights(&dynamics, &views.player2, t, &s, &c, &a);
        assert!((h_zs - h2).abs() < 1e-12);
        // ...and the negated player-One view Hamiltonian at the negated adjoint.
        let h1_neg = eval_hamiltonian_with_weights(&dynamics, &views.player1, t, &s, &c, &a.negated());
        assert!((h_zs + h1_neg).abs() < 1e-12);
        // The state-weight-free reinterpretation gives the same pairings.
        let h2_lq = eval_hamiltonian_nz(Player::Two, t, &s, &c, &a, &lq);
        // Differs only in the sign of the opponent-control term, which the
        // nonzero-sum player-Two cost does not carry:
        let r1_term = 0.5 * zs.r1.eval(t) * c.v1 * c.v1;
        assert!((h_zs - (h2_lq + r1_term)).abs() < 1e-12);
    }

    #[test]
    fn hessian_in_own_control_is_negative_weight() {
        let spec = rich_spec();
        let t = 0.25;
        let s = GameState { y: 0.3, z: 0.2, cap_y: -0.4, cap_z: 0.6 };
        let a = AdjointState { p: 0.7, pbar: -0.1, q: 0.9, qbar: 0.2 };
        let h = 1e-3;
        for player in Player::BOTH {
            let eval = |v: f64| {
                let c = match player {
                    Player::One => ControlPair { v1: v, v2: 0.4 },
                    Player::Two => ControlPair { v1: 0.4, v2: v },
                };
                eval_hamiltonian_nz(player, t, &s, &c, &a, &spec)
            };
            let second = (eval(0.5 + h) - 2.0 * eval(0.5) + eval(0.5 - h)) / (h * h);
            let expect = -spec.cost(player).e7.eval(t);
            assert!((second - expect).abs() < 1e-8, "{second} vs {expect}");
        }
    }

    #[test]
    fn adjoint_assembly_transcribes_spec_coefficients() {
        let spec = rich_spec();
        let sys = assemble_adjoint_system(&spec).unwrap();
        let b1 = sys.block(Player::One);
        assert_eq!(b1.p_drift_cap_y, spec.cost1.e3);
        assert_eq!(b1.p_drift_p, spec.a1);
        assert_eq!(b1.p_drift_q, spec.c2.negated());
        assert_eq!(b1.p_diff_cap_z, spec.cost1.e4);
        assert_eq!(b1.p_diff_p, spec.a2);
        assert_eq!(b1.p_diff_q, spec.c3.negated());
        assert_eq!(b1.q_drift_y, spec.cost1.e1.negated());
        assert_eq!(b1.q_drift_q, spec.c1);
        assert_eq!(b1.q_noise_z, spec.cost1.e2.negated());
        assert_eq!(b1.initial_cap_y, spec.cost1.e6);
        assert_eq!(b1.initial_q, -1.0);
        assert_eq!(b1.terminal_y, -spec.cost1.e5);
        // M = 1, e16 = 0 makes the initial coupling read p1(0) = -q1(0).
        let mut plain = spec.clone();
        plain.cost1.e6 = 0.0;
        let sys = assemble_adjoint_system(&plain).unwrap();
        assert_eq!(sys.player1.initial_cap_y, 0.0);
        assert_eq!(sys.player1.initial_q, -1.0);
    }

    #[test]
    fn all_zero_costs_make_homogeneous_adjoint() {
        let mut spec = rich_spec();
        let zero_cost = PlayerCost {
            e1: konst(0.0),
            e2: konst(0.0),
            e3: konst(0.0),
            e4: konst(0.0),
            e5: 0.0,
            e6: 0.0,
            e7: konst(1.0),
        };
        spec.cost1 = zero_cost.clone();
        spec.cost2 = zero_cost;
        let sys = assemble_adjoint_system(&spec).unwrap();
        for block in [&sys.player1, &sys.player2] {
            assert!(block.p_drift_cap_y.is_zero());
            assert!(block.p_diff_cap_z.is_zero());
            assert!(block.q_drift_y.is_zero());
            assert!(block.q_noise_z.is_zero());
            assert_eq!(block.terminal_y, 0.0);
            assert_eq!(block.initial_cap_y, 0.0);
        }
    }

    #[test]
    fn stationarity_residual_cancels_at_feedback() {
        let mut spec = zero_spec();
        spec.a3 = konst(4.0);
        spec.cost1.e7 = konst(2.0);
        // u1 = -(a3/e17) p1~ = -2 * 3 = -6.
        assert_eq!(stationarity_residual(Player::One, 0.0, 3.0, -6.0, &spec), 0.0);
        assert_eq!(stationarity_residual(Player::One, 0.0, 3.0, 0.0, &spec), -12.0);
    }

    #[test]
    fn arrow_check_reports_first_violation() {
        let spec = rich_spec();
        assert!(arrow_condition_check(&spec).pass);
        let mut bad = spec.clone();
        bad.cost1.e3 = konst(-1.0);
        let report = arrow_condition_check(&bad);
        assert!(!report.pass);
        let v = report.first_violation.unwrap();
        assert_eq!(v.player, Player::One);
        assert_eq!(v.weight_index, 3);
        assert_eq!(v.value, -1.0);
    }
}
