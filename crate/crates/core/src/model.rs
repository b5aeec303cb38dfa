//! Game specifications: linear-quadratic two-player instances, their validity
//! checks, reductions to structural subclasses, and zero-sum variants.
//!
//! The dynamics described by [`LqGameSpec`] are (all coefficients
//! deterministic functions of time):
//!
//! ```text
//! -dY = (a0 + a1 Y + a2 Z + a3 v1 + a4 v2) dt + b0 dB  - Z dW,   Y(T) = k0 + k1 W(T)
//!  dy = (c0 + c1 y + c2 Y + c3 Z) dt        + d0 dW    - z dB,   y(0) = M Y(0)
//! ```
//!
//! where `dW` is a forward Ito differential and `dB` a backward one. Player
//! `i` receives
//!
//! ```text
//! J_i = -1/2 E[ Int_0^T (e_i1 y^2 + e_i2 z^2 + e_i3 Y^2 + e_i4 Z^2 + e_i7 v_i^2) dt
//!               + e_i5 y(T)^2 + e_i6 Y(0)^2 ]
//! ```
//!
//! and maximizes it (equivalently, minimizes the nonnegative quadratic cost).

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::coeff::CoefficientFn;
use crate::{Error, Result};

/// Player identity in the two-player game.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::One, Player::Two];

    /// 1-based index used in weight names (`e17` is player One's control weight).
    pub fn index(self) -> usize {
        match self {
            Player::One => 1,
            Player::Two => 2,
        }
    }

    /// 0-based position for per-player arrays.
    pub fn slot(self) -> usize {
        self.index() - 1
    }

    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

/// Terminal value of the backward state: `Y(T) = kappa0 + kappa1 * W(T)`.
///
/// Restricting the terminal value to an affine function of `W(T)` keeps its
/// conditional expectation given the observed filtration affine, which is what
/// lets the decoupling offsets stay affine in `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalCondition {
    pub kappa0: f64,
    pub kappa1: f64,
}

/// Which filtration the players observe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoStructure {
    /// Players observe only the filtration generated by `W` (partial information).
    WFiltration,
    /// Players observe the full mixed filtration.
    Full,
}

/// Quadratic cost weights for one player. `e1..e4` weight the running squares
/// of `y, z, Y, Z`; `e7` weights the player's own control; `e5` weights
/// `y(T)^2` and `e6` weights `Y(0)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerCost {
    pub e1: CoefficientFn,
    pub e2: CoefficientFn,
    pub e3: CoefficientFn,
    pub e4: CoefficientFn,
    pub e5: f64,
    pub e6: f64,
    pub e7: CoefficientFn,
}

impl PlayerCost {
    /// All running and boundary weights zero except a unit own-control weight.
    pub fn control_only() -> PlayerCost {
        PlayerCost {
            e1: CoefficientFn::ZERO,
            e2: CoefficientFn::ZERO,
            e3: CoefficientFn::ZERO,
            e4: CoefficientFn::ZERO,
            e5: 0.0,
            e6: 0.0,
            e7: CoefficientFn::Constant(1.0),
        }
    }
}

/// A complete nonzero-sum game instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LqGameSpec {
    /// Horizon `T > 0`.
    pub horizon: f64,
    // Backward equation coefficients.
    pub a0: CoefficientFn,
    pub a1: CoefficientFn,
    pub a2: CoefficientFn,
    pub a3: CoefficientFn,
    pub a4: CoefficientFn,
    pub b0: CoefficientFn,
    // Forward equation coefficients.
    pub c0: CoefficientFn,
    pub c1: CoefficientFn,
    pub c2: CoefficientFn,
    pub c3: CoefficientFn,
    pub d0: CoefficientFn,
    /// Costs for players One and Two.
    pub cost1: PlayerCost,
    pub cost2: PlayerCost,
    /// Initial coupling `y(0) = M Y(0)`, `M != 0`.
    pub m: f64,
    pub terminal: TerminalCondition,
    pub info: InfoStructure,
}

impl LqGameSpec {
    pub fn cost(&self, player: Player) -> &PlayerCost {
        match player {
            Player::One => &self.cost1,
            Player::Two => &self.cost2,
        }
    }

    /// Control coefficient in the backward drift for the given player's channel.
    pub fn control_gain(&self, player: Player) -> &CoefficientFn {
        match player {
            Player::One => &self.a3,
            Player::Two => &self.a4,
        }
    }

    /// Signed weights computing `J_i` for one player; the other player's
    /// control carries weight zero.
    pub fn weights(&self, player: Player) -> CostWeights {
        let cost = self.cost(player);
        let (w_v1, w_v2) = match player {
            Player::One => (cost.e7.clone(), CoefficientFn::ZERO),
            Player::Two => (CoefficientFn::ZERO, cost.e7.clone()),
        };
        CostWeights {
            w_y: cost.e1.clone(),
            w_z: cost.e2.clone(),
            w_cap_y: cost.e3.clone(),
            w_cap_z: cost.e4.clone(),
            w_v1,
            w_v2,
            w_terminal_y: cost.e5,
            w_initial_cap_y: cost.e6,
        }
    }
}

/// Signed quadratic cost weights in the normal form
///
/// ```text
/// J = -1/2 E[ Int (w_y y^2 + w_z z^2 + w_cap_y Y^2 + w_cap_z Z^2
///                  + w_v1 v1^2 + w_v2 v2^2) dt
///             + w_terminal_y y(T)^2 + w_initial_cap_y Y(0)^2 ]
/// ```
///
/// Weights may be negative (zero-sum views need signed weights); `J` is exactly
/// linear in every weight, so negating all weights negates `J` exactly in
/// floating point.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub w_y: CoefficientFn,
    pub w_z: CoefficientFn,
    pub w_cap_y: CoefficientFn,
    pub w_cap_z: CoefficientFn,
    pub w_v1: CoefficientFn,
    pub w_v2: CoefficientFn,
    pub w_terminal_y: f64,
    pub w_initial_cap_y: f64,
}

impl CostWeights {
    pub fn zero() -> CostWeights {
        CostWeights {
            w_y: CoefficientFn::ZERO,
            w_z: CoefficientFn::ZERO,
            w_cap_y: CoefficientFn::ZERO,
            w_cap_z: CoefficientFn::ZERO,
            w_v1: CoefficientFn::ZERO,
            w_v2: CoefficientFn::ZERO,
            w_terminal_y: 0.0,
            w_initial_cap_y: 0.0,
        }
    }

    /// Exact sign flip of every weight.
    pub fn negated(&self) -> CostWeights {
        CostWeights {
            w_y: self.w_y.negated(),
            w_z: self.w_z.negated(),
            w_cap_y: self.w_cap_y.negated(),
            w_cap_z: self.w_cap_z.negated(),
            w_v1: self.w_v1.negated(),
            w_v2: self.w_v2.negated(),
            w_terminal_y: -self.w_terminal_y,
            w_initial_cap_y: -self.w_initial_cap_y,
        }
    }
}

/// A zero-sum game instance: same dynamics as [`LqGameSpec`], one cost
///
/// ```text
/// J = E[ Int_0^T 1/2 (l1 y^2 + l2 z^2 + l3 Y^2 + l4 Z^2 + r1 v1^2 - r2 v2^2) dt
///        + 1/2 l5 y(T)^2 + 1/2 l6 Y(0)^2 ]
/// ```
///
/// Player One minimizes `J` (convex in `v1` through `+r1 v1^2`), player Two
/// maximizes it (concave in `v2` through `-r2 v2^2`); a saddle point satisfies
/// `J(u1, v2) <= J(u1, u2) <= J(v1, u2)`. In the paired-view identification
/// `J1 = -J` and `J2 = J`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSumSpec {
    pub horizon: f64,
    pub a0: CoefficientFn,
    pub a1: CoefficientFn,
    pub a2: CoefficientFn,
    pub a3: CoefficientFn,
    pub a4: CoefficientFn,
    pub b0: CoefficientFn,
    pub c0: CoefficientFn,
    pub c1: CoefficientFn,
    pub c2: CoefficientFn,
    pub c3: CoefficientFn,
    pub d0: CoefficientFn,
    pub l1: CoefficientFn,
    pub l2: CoefficientFn,
    pub l3: CoefficientFn,
    pub l4: CoefficientFn,
    pub l5: f64,
    pub l6: f64,
    pub r1: CoefficientFn,
    pub r2: CoefficientFn,
    pub m: f64,
    pub terminal: TerminalCondition,
    pub info: InfoStructure,
}

/// The two signed cost views of a zero-sum game, usable by all nonzero-sum
/// machinery: `player1` computes `J1 = -J` and `player2` computes `J2 = J`,
/// each in [`CostWeights`] normal form. `player2` is the exact negation
/// of `player1`, so `J1 + J2 = 0` identically.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSumViews {
    pub player1: CostWeights,
    pub player2: CostWeights,
}

impl ZeroSumSpec {
    /// Builds the paired signed cost views (`J1 = -J`, `J2 = J`).
    pub fn to_views(&self) -> ZeroSumViews {
        // J = -1/2 E[Int(-l1 y^2 - ... - r1 v1^2 + r2 v2^2) - l5 y(T)^2 - l6 Y(0)^2]
        // so J1 = -J has the un-negated weights in normal form.
        let player1 = CostWeights {
            w_y: self.l1.clone(),
            w_z: self.l2.clone(),
            w_cap_y: self.l3.clone(),
            w_cap_z: self.l4.clone(),
            w_v1: self.r1.clone(),
            w_v2: self.r2.negated(),
            w_terminal_y: self.l5,
            w_initial_cap_y: self.l6,
        };
        let player2 = player1.negated();
        ZeroSumViews { player1, player2 }
    }

    /// Reinterprets the zero-sum instance as a nonzero-sum game so the
    /// equilibrium synthesis pipeline can run on it. This is only sound when
    /// every state weight vanishes (`l1..l6 = 0`): otherwise one of the two
    /// signed views has a negative state weight, the maximizing player's
    /// problem loses concavity in the states, and the synthesized candidate
    /// has no saddle guarantee. In the sound case both players' adjoint
    /// sources vanish and the candidate saddle point is the zero control pair.
    pub fn as_lq_game(&self) -> Result<LqGameSpec> {
        let state_weights: [&CoefficientFn; 4] = [&self.l1, &self.l2, &self.l3, &self.l4];
        let all_zero = state_weights.iter().all(|w| w.is_zero()) && self.l5 == 0.0 && self.l6 == 0.0;
        if !all_zero {
            return Err(Error::UnsupportedConfiguration(String::from(
                "equilibrium synthesis on a zero-sum instance requires all state \
                 weights l1..l6 to be zero; a nonzero state weight makes one signed \
                 view's maximization problem non-concave",
            )));
        }
        let zero_states = |e7: &CoefficientFn| PlayerCost {
            e1: CoefficientFn::ZERO,
            e2: CoefficientFn::ZERO,
            e3: CoefficientFn::ZERO,
            e4: CoefficientFn::ZERO,
            e5: 0.0,
            e6: 0.0,
            e7: e7.clone(),
        };
        Ok(LqGameSpec {
            horizon: self.horizon,
            a0: self.a0.clone(),
            a1: self.a1.clone(),
            a2: self.a2.clone(),
            a3: self.a3.clone(),
            a4: self.a4.clone(),
            b0: self.b0.clone(),
            c0: self.c0.clone(),
            c1: self.c1.clone(),
            c2: self.c2.clone(),
            c3: self.c3.clone(),
            d0: self.d0.clone(),
            cost1: zero_states(&self.r1),
            cost2: zero_states(&self.r2),
            m: self.m,
            terminal: self.terminal,
            info: self.info,
        })
    }
}

/// Outcome of validating a spec: a list of human-readable violations.
/// An empty report means the spec satisfies every invariant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    /// Converts a non-empty report into an error for operations that require
    /// a valid spec.
    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(self))
        }
    }
}

impl core::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if self.violations.is_empty() {
            write!(f, "spec valid")
        } else {
            for (i, v) in self.violations.iter().enumerate() {
                if i > 0 {
                    writeln!(f)?;
                }
                write!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

fn check_coefficient(out: &mut Vec<String>, name: &str, c: &CoefficientFn) {
    if let Err(Error::InvalidArgument { reason, .. }) = c.check_well_formed("coefficient") {
        out.push(format!("{name} malformed: {reason}"));
    }
}

fn check_nonnegative(out: &mut Vec<String>, name: &str, c: &CoefficientFn, t_end: f64) {
    let (min, at) = c.min_on(t_end);
    if min < 0.0 {
        out.push(format!("{name} negative ({min} at t={at})"));
    }
}

fn check_positive(out: &mut Vec<String>, name: &str, c: &CoefficientFn, t_end: f64) {
    let (min, at) = c.min_on(t_end);
    if min <= 0.0 {
        out.push(format!("{name} not positive ({min} at t={at})"));
    }
}

/// Checks every invariant of [`LqGameSpec`] and reports all violations.
/// Pure and deterministic; violations are report entries, never faults.
///
/// Sign conditions on piecewise-constant weights are checked exactly (at the
/// piece values); polynomial weights are checked on a dense time sample.
pub fn validate_spec(spec: &LqGameSpec) -> ValidationReport {
    let mut out = Vec::new();
    if !(spec.horizon > 0.0) || !spec.horizon.is_finite() {
        out.push(format!("horizon not positive ({})", spec.horizon));
    }
    let t_end = if spec.horizon > 0.0 && spec.horizon.is_finite() { spec.horizon } else { 1.0 };

    let dynamic: [(&'static str, &CoefficientFn); 11] = [
        ("a0", &spec.a0),
        ("a1", &spec.a1),
        ("a2", &spec.a2),
        ("a3", &spec.a3),
        ("a4", &spec.a4),
        ("b0", &spec.b0),
        ("c0", &spec.c0),
        ("c1", &spec.c1),
        ("c2", &spec.c2),
        ("c3", &spec.c3),
        ("d0", &spec.d0),
    ];
    for (name, c) in dynamic {
        check_coefficient(&mut out, name, c);
    }

    for player in Player::BOTH {
        let i = player.index();
        let cost = spec.cost(player);
        let running: [(usize, &CoefficientFn); 4] =
            [(1, &cost.e1), (2, &cost.e2), (3, &cost.e3), (4, &cost.e4)];
        for (k, c) in running {
            let name = format!("e{i}{k}");
            check_coefficient(&mut out, &name, c);
            check_nonnegative(&mut out, &name, c, t_end);
        }
        if cost.e5 < 0.0 || !cost.e5.is_finite() {
            out.push(format!("e{i}5 negative ({})", cost.e5));
        }
        if cost.e6 < 0.0 || !cost.e6.is_finite() {
            out.push(format!("e{i}6 negative ({})", cost.e6));
        }
        let name7 = format!("e{i}7");
        check_positive(&mut out, &name7, &cost.e7, t_end);
    }

    if spec.m == 0.0 {
        out.push(String::from("M is zero"));
    }
    if !spec.m.is_finite() {
        out.push(format!("M not finite ({})", spec.m));
    }
    if !spec.terminal.kappa0.is_finite() || !spec.terminal.kappa1.is_finite() {
        out.push(format!(
            "terminal condition not finite ({}, {})",
            spec.terminal.kappa0, spec.terminal.kappa1
        ));
    }
    ValidationReport { violations: out }
}

/// Checks every invariant of [`ZeroSumSpec`].
pub fn validate_zero_sum(spec: &ZeroSumSpec) -> ValidationReport {
    let mut out = Vec::new();
    if !(spec.horizon > 0.0) || !spec.horizon.is_finite() {
        out.push(format!("horizon not positive ({})", spec.horizon));
    }
    let t_end = if spec.horizon > 0.0 && spec.horizon.is_finite() { spec.horizon } else { 1.0 };
    let named: [(&'static str, &CoefficientFn); 15] = [
        ("a0", &spec.a0),
        ("a1", &spec.a1),
        ("a2", &spec.a2),
        ("a3", &spec.a3),
        ("a4", &spec.a4),
        ("b0", &spec.b0),
        ("c0", &spec.c0),
        ("c1", &spec.c1),
        ("c2", &spec.c2),
        ("c3", &spec.c3),
        ("d0", &spec.d0),
        ("l1", &spec.l1),
        ("l2", &spec.l2),
        ("l3", &spec.l3),
        ("l4", &spec.l4),
    ];
    for (name, c) in named {
        check_coefficient(&mut out, name, c);
    }
    for (name, c) in [("l1", &spec.l1), ("l2", &spec.l2), ("l3", &spec.l3), ("l4", &spec.l4)] {
        check_nonnegative(&mut out, name, c, t_end);
    }
    if spec.l5 < 0.0 || !spec.l5.is_finite() {
        out.push(format!("l5 negative ({})", spec.l5));
    }
    if spec.l6 < 0.0 || !spec.l6.is_finite() {
        out.push(format!("l6 negative ({})", spec.l6));
    }
    check_positive(&mut out, "r1", &spec.r1, t_end);
    check_positive(&mut out, "r2", &spec.r2, t_end);
    if spec.m == 0.0 {
        out.push(String::from("M is zero"));
    }
    ValidationReport { violations: out }
}

/// Structural subclasses obtained by zeroing coefficient groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceTarget {
    /// Backward doubly stochastic equation alone: zero the forward-equation
    /// coefficients (`c0..c3`, `d0`); keep both noises in the backward equation.
    Bdsde,
    /// Plain backward equation: additionally zero `b0` so only `W` drives.
    Bsde,
    /// Forward-backward system with a single noise: zero `b0` only.
    Fbsde,
}

/// Returns a copy of the spec with the target's coefficient groups forced to
/// zero. Idempotent per target; costs, coupling, and terminal data unchanged.
pub fn reduce_spec(spec: &LqGameSpec, target: ReduceTarget) -> LqGameSpec {
    let mut out = spec.clone();
    match target {
        ReduceTarget::Bsde => {
            out.b0 = CoefficientFn::ZERO;
            out.c0 = CoefficientFn::ZERO;
            out.c1 = CoefficientFn::ZERO;
            out.c2 = CoefficientFn::ZERO;
            out.c3 = CoefficientFn::ZERO;
            out.d0 = CoefficientFn::ZERO;
        }
        ReduceTarget::Bdsde => {
            out.c0 = CoefficientFn::ZERO;
            out.c1 = CoefficientFn::ZERO;
            out.c2 = CoefficientFn::ZERO;
            out.c3 = CoefficientFn::ZERO;
            out.d0 = CoefficientFn::ZERO;
        }
        ReduceTarget::Fbsde => {
            out.b0 = CoefficientFn::ZERO;
        }
    }
    out
}

/// Shape predicate: does the spec already lie in the target subclass?
pub fn matches_shape(spec: &LqGameSpec, target: ReduceTarget) -> bool {
    let forward_zero = spec.c0.is_zero()
        && spec.c1.is_zero()
        && spec.c2.is_zero()
        && spec.c3.is_zero()
        && spec.d0.is_zero();
    match target {
        ReduceTarget::Bsde => forward_zero && spec.b0.is_zero(),
        ReduceTarget::Bdsde => forward_zero,
        ReduceTarget::Fbsde => spec.b0.is_zero(),
    }
}

/// A scalar function of `(t, y, z, Y, Z, v1, v2)`.
pub type StateControlFn = Box<dyn Fn(f64, f64, f64, f64, f64, f64, f64) -> f64 + Send + Sync>;
/// A scalar function of one state variable (terminal or initial cost shapes).
pub type BoundaryFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// General (possibly nonlinear) coefficient mappings of a two-noise
/// forward-backward game, used only for pointwise Hamiltonian evaluation —
/// never solved numerically.
///
/// `f` is the forward drift, `f_bar` the forward `dW` coefficient, `g` the
/// backward drift, `g_bar` the backward noise coefficient; `l` is the shared
/// zero-sum running cost and `l_i` the per-player running costs; `phi`/`phi_i`
/// evaluate terminal costs at `y(T)` and `gamma`/`gamma_i` initial costs at
/// `Y(0)`.
pub struct GeneralCoefficients {
    pub f: StateControlFn,
    pub f_bar: StateControlFn,
    pub g: StateControlFn,
    pub g_bar: StateControlFn,
    pub l: StateControlFn,
    pub l1: StateControlFn,
    pub l2: StateControlFn,
    pub phi: BoundaryFn,
    pub phi1: BoundaryFn,
    pub phi2: BoundaryFn,
    pub gamma: BoundaryFn,
    pub gamma1: BoundaryFn,
    pub gamma2: BoundaryFn,
}

impl GeneralCoefficients {
    /// Instantiates the general mappings from a linear-quadratic spec, for
    /// cross-checking closed-form Hamiltonian evaluation against independent
    /// pointwise assembly.
    pub fn from_lq(spec: &LqGameSpec) -> GeneralCoefficients {
        let s = spec.clone();
        let f = {
            let (c0, c1, c2, c3) = (s.c0.clone(), s.c1.clone(), s.c2.clone(), s.c3.clone());
            Box::new(move |t: f64, y: f64, _z: f64, cap_y: f64, cap_z: f64, _v1: f64, _v2: f64| {
                c0.eval(t) + c1.eval(t) * y + c2.eval(t) * cap_y + c3.eval(t) * cap_z
            }) as StateControlFn
        };
        let f_bar = {
            let d0 = s.d0.clone();
            Box::new(move |t: f64, _: f64, _: f64, _: f64, _: f64, _: f64, _: f64| d0.eval(t))
                as StateControlFn
        };
        let g = {
            let (a0, a1, a2, a3, a4) =
                (s.a0.clone(), s.a1.clone(), s.a2.clone(), s.a3.clone(), s.a4.clone());
            Box::new(move |t: f64, _y: f64, _z: f64, cap_y: f64, cap_z: f64, v1: f64, v2: f64| {
                a0.eval(t)
                    + a1.eval(t) * cap_y
                    + a2.eval(t) * cap_z
                    + a3.eval(t) * v1
                    + a4.eval(t) * v2
            }) as StateControlFn
        };
        let g_bar = {
            let b0 = s.b0.clone();
            Box::new(move |t: f64, _: f64, _: f64, _: f64, _: f64, _: f64, _: f64| b0.eval(t))
                as StateControlFn
        };
        let running = |cost: &PlayerCost, own_is_v1: bool| -> StateControlFn {
            let (e1, e2, e3, e4, e7) =
                (cost.e1.clone(), cost.e2.clone(), cost.e3.clone(), cost.e4.clone(), cost.e7.clone());
            Box::new(move |t: f64, y: f64, z: f64, cap_y: f64, cap_z: f64, v1: f64, v2: f64| {
                let own = if own_is_v1 { v1 } else { v2 };
                -0.5 * (e1.eval(t) * y * y
                    + e2.eval(t) * z * z
                    + e3.eval(t) * cap_y * cap_y
                    + e4.eval(t) * cap_z * cap_z
                    + e7.eval(t) * own * own)
            })
        };
        let l1 = running(&s.cost1, true);
        let l2 = running(&s.cost2, false);
        // Shared zero-sum running cost is only meaningful for paired views;
        // for a plain nonzero-sum spec expose the player-Two cost (the J2 = J
        // identification direction).
        let l = running(&s.cost2, false);
        let phi1 = {
            let e15 = s.cost1.e5;
            Box::new(move |y_t: f64| -0.5 * e15 * y_t * y_t) as BoundaryFn
        };
        let phi2 = {
            let e25 = s.cost2.e5;
            Box::new(move |y_t: f64| -0.5 * e25 * y_t * y_t) as BoundaryFn
        };
        let gamma1 = {
            let e16 = s.cost1.e6;
            Box::new(move |cap_y0: f64| -0.5 * e16 * cap_y0 * cap_y0) as BoundaryFn
        };
        let gamma2 = {
            let e26 = s.cost2.e6;
            Box::new(move |cap_y0: f64| -0.5 * e26 * cap_y0 * cap_y0) as BoundaryFn
        };
        let phi = {
            let e25 = s.cost2.e5;
            Box::new(move |y_t: f64| -0.5 * e25 * y_t * y_t) as BoundaryFn
        };
        let gamma = {
            let e26 = s.cost2.e6;
            Box::new(move |cap_y0: f64| -0.5 * e26 * cap_y0 * cap_y0) as BoundaryFn
        };
        GeneralCoefficients {
            f,
            f_bar,
            g,
            g_bar,
            l,
            l1,
            l2,
            phi,
            phi1,
            phi2,
            gamma,
            gamma1,
            gamma2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn konst(x: f64) -> CoefficientFn {
        CoefficientFn::Constant(x)
    }

    fn small_valid_spec() -> LqGameSpec {
        let cost = |e7: f64| PlayerCost {
            e1: konst(0.1),
            e2: konst(0.1),
            e3: konst(0.1),
            e4: konst(0.1),
            e5: 0.1,
            e6: 0.1,
            e7: konst(e7),
        };
        LqGameSpec {
            horizon: 1.0,
            a0: konst(0.1),
            a1: konst(0.2),
            a2: konst(0.1),
            a3: konst(0.5),
            a4: konst(0.4),
            b0: konst(0.2),
            c0: konst(0.0),
            c1: konst(-0.1),
            c2: konst(0.3),
            c3: konst(0.1),
            d0: konst(0.3),
            cost1: cost(1.0),
            cost2: cost(1.5),
            m: 1.0,
            terminal: TerminalCondition { kappa0: 0.5, kappa1: 0.25 },
            info: InfoStructure::WFiltration,
        }
    }

    #[test]
    fn valid_spec_passes() {
        let report = validate_spec(&small_valid_spec());
        assert!(report.is_empty(), "unexpected violations: {report}");
    }

    #[test]
    fn zero_control_weight_is_reported() {
        let mut spec = small_valid_spec();
        spec.cost1.e7 = konst(0.0);
        let report = validate_spec(&spec);
        assert!(
            report.violations.iter().any(|v| v.contains("e17 not positive")),
            "report: {report}"
        );
    }

    #[test]
    fn zero_coupling_is_reported() {
        let mut spec = small_valid_spec();
        spec.m = 0.0;
        let report = validate_spec(&spec);
        assert!(report.violations.iter().any(|v| v.contains("M is zero")), "report: {report}");
    }

    #[test]
    fn negative_state_weight_is_reported() {
        let mut spec = small_valid_spec();
        spec.cost1.e3 = CoefficientFn::PiecewiseConstant(vec![(0.0, 0.2), (0.5, -1.0)]);
        let report = validate_spec(&spec);
        assert!(report.violations.iter().any(|v| v.contains("e13 negative")), "report: {report}");
    }

    #[test]
    fn reduction_zeroes_expected_groups() {
        let spec = small_valid_spec();
        let bsde = reduce_spec(&spec, ReduceTarget::Bsde);
        assert!(bsde.b0.is_zero() && bsde.c0.is_zero() && bsde.c3.is_zero() && bsde.d0.is_zero());
        assert!(matches_shape(&bsde, ReduceTarget::Bsde));

        let bdsde = reduce_spec(&spec, ReduceTarget::Bdsde);
        assert!(!bdsde.b0.is_zero() && bdsde.d0.is_zero());
        assert!(matches_shape(&bdsde, ReduceTarget::Bdsde));
        assert!(!matches_shape(&bdsde, ReduceTarget::Bsde));

        let fbsde = reduce_spec(&spec, ReduceTarget::Fbsde);
        assert!(fbsde.b0.is_zero() && !fbsde.d0.is_zero());
        assert!(matches_shape(&fbsde, ReduceTarget::Fbsde));
    }

    #[test]
    fn reduction_is_idempotent_and_preserves_validity() {
        let spec = small_valid_spec();
        for target in [ReduceTarget::Bsde, ReduceTarget::Bdsde, ReduceTarget::Fbsde] {
            let once = reduce_spec(&spec, target);
            let twice = reduce_spec(&once, target);
            assert_eq!(once, twice);
            assert!(validate_spec(&once).is_empty());
        }
        // Already-reduced specs are fixed points.
        let mut no_b0 = spec.clone();
        no_b0.b0 = CoefficientFn::ZERO;
        assert_eq!(reduce_spec(&no_b0, ReduceTarget::Fbsde), no_b0);
    }

    fn small_zero_sum() -> ZeroSumSpec {
        let s = small_valid_spec();
        ZeroSumSpec {
            horizon: s.horizon,
            a0: s.a0,
            a1: s.a1,
            a2: s.a2,
            a3: s.a3,
            a4: s.a4,
            b0: s.b0,
            c0: s.c0,
            c1: s.c1,
            c2: s.c2,
            c3: s.c3,
            d0: s.d0,
            l1: konst(0.0),
            l2: konst(0.0),
            l3: konst(0.0),
            l4: konst(0.0),
            l5: 0.0,
            l6: 0.0,
            r1: konst(1.0),
            r2: konst(1.25),
            m: s.m,
            terminal: s.terminal,
            info: s.info,
        }
    }

    #[test]
    fn zero_sum_views_are_exact_negations() {
        let zs = small_zero_sum();
        let views = zs.to_views();
        assert_eq!(views.player2, views.player1.negated());
        // Player One's view carries +r1 on own control, -r2 on the opponent.
        assert_eq!(views.player1.w_v1, konst(1.0));
        assert_eq!(views.player1.w_v2, konst(-1.25));
        assert_eq!(views.player2.w_v2, konst(1.25));
    }

    #[test]
    fn zero_sum_validation_checks_signs() {
        let mut zs = small_zero_sum();
        assert!(validate_zero_sum(&zs).is_empty());
        zs.r1 = konst(0.0);
        let report = validate_zero_sum(&zs);
        assert!(report.violations.iter().any(|v| v.contains("r1 not positive")));
    }

    #[test]
    fn zero_sum_as_lq_game_requires_zero_state_weights() {
        let zs = small_zero_sum();
        let lq = zs.as_lq_game().expect("state-weight-free instance converts");
        assert!(validate_spec(&lq).is_empty());
        assert_eq!(lq.cost1.e7, konst(1.0));
        assert_eq!(lq.cost2.e7, konst(1.25));

        let mut bad = small_zero_sum();
        bad.l3 = konst(0.2);
        assert!(matches!(bad.as_lq_game(), Err(Error::UnsupportedConfiguration(_))));
    }

    #[test]
    fn player_weights_zero_the_other_control() {
        let spec = small_valid_spec();
        let w1 = spec.weights(Player::One);
        assert!(w1.w_v2.is_zero());
        assert_eq!(w1.w_v1, spec.cost1.e7);
        let w2 = spec.weights(Player::Two);
        assert!(w2.w_v1.is_zero());
        assert_eq!(w2.w_v2, spec.cost2.e7);
    }

    #[test]
    fn general_coefficients_match_lq_formulas() {
        let spec = small_valid_spec();
        let gc = GeneralCoefficients::from_lq(&spec);
        let (t, y, z, cap_y, cap_z, v1, v2) = (0.3, 0.7, -0.2, 1.1, 0.4, 0.6, -0.9);
        let f = (gc.f)(t, y, z, cap_y, cap_z, v1, v2);
        let expect_f = spec.c0.eval(t)
            + spec.c1.eval(t) * y
            + spec.c2.eval(t) * cap_y
            + spec.c3.eval(t) * cap_z;
        assert!((f - expect_f).abs() < 1e-15);
        let g = (gc.g)(t, y, z, cap_y, cap_z, v1, v2);
        let expect_g = spec.a0.eval(t)
            + spec.a1.eval(t) * cap_y
            + spec.a2.eval(t) * cap_z
            + spec.a3.eval(t) * v1
            + spec.a4.eval(t) * v2;
        assert!((g - expect_g).abs() < 1e-15);
        let l1 = (gc.l1)(t, y, z, cap_y, cap_z, v1, v2);
        let c = &spec.cost1;
        let expect_l1 = -0.5
            * (c.e1.eval(t) * y * y
                + c.e2.eval(t) * z * z
                + c.e3.eval(t) * cap_y * cap_y
                + c.e4.eval(t) * cap_z * cap_z
                + c.e7.eval(t) * v1 * v1);
        assert!((l1 - expect_l1).abs() < 1e-15);
        assert!(((gc.phi1)(2.0) - (-0.5 * c.e5 * 4.0)).abs() < 1e-15);
        assert!(((gc.gamma2)(3.0) - (-0.5 * spec.cost2.e6 * 9.0)).abs() < 1e-15);
    }
}
