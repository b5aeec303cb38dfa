//! Pinned reference instances.
//!
//! These fixed coefficient sets exercise every channel of the model and give
//! the test suite stable, meaningful targets:
//!
//! * [`nonzero_sum_benchmark`] — a fully coupled two-player instance with
//!   time-dependent weights; every dynamic channel (both noises, the
//!   cross-couplings, both controls) is active.
//! * [`zero_sum_benchmark`] — the same dynamics under a single zero-sum
//!   criterion with pure control charges, where the candidate saddle is the
//!   zero pair and every inequality can be checked against closed forms.
//! * [`exponential_growth`] — a backward equation whose time-0 value is
//!   `e` in closed form, pinning both the tree scheme's `(1 + dt)^N`
//!   compounding and the fourth-order accuracy of the decoupling recursion.
//! * [`trivial_cost`] — constant unit processes pricing every cost weight;
//!   the exact cost is `-2` for both players at any grid size.

use crate::coeff::CoefficientFn;
use crate::model::{InfoStructure, LqGameSpec, PlayerCost, TerminalCondition, ZeroSumSpec};

fn konst(x: f64) -> CoefficientFn {
    CoefficientFn::Constant(x)
}

/// Fully coupled nonzero-sum benchmark.
///
/// Dynamics (horizon 1, initial coupling `y(0) = Y(0)`):
/// mean-reverting forward state fed by the backward pair, backward state
/// driven by both controls and both noises, terminal value `0.5 + 0.25 W(T)`.
/// Player one's state weight on the backward component grows linearly in
/// time; the forward-feedback weight drops at mid-horizon. Control charges
/// are unit for both players, so the equilibrium feedback gains are simply
/// the negated control coefficients.
pub fn nonzero_sum_benchmark() -> LqGameSpec {
    LqGameSpec {
        horizon: 1.0,
        a0: konst(0.1),
        a1: konst(0.3),
        a2: konst(0.2),
        a3: konst(0.8),
        a4: konst(0.6),
        b0: konst(0.2),
        c0: konst(0.05),
        c1: konst(-0.25),
        c2: CoefficientFn::PiecewiseConstant(alloc::vec![(0.0, 0.3), (0.5, 0.2)]),
        c3: konst(0.1),
        d0: konst(0.3),
        cost1: PlayerCost {
            e1: konst(0.10),
            e2: konst(0.05),
            e3: CoefficientFn::Polynomial(alloc::vec![0.05, 0.05]),
            e4: konst(0.05),
            e5: 0.10,
            e6: 0.10,
            e7: konst(1.0),
        },
        cost2: PlayerCost {
            e1: konst(0.08),
            e2: konst(0.04),
            e3: konst(0.06),
            e4: konst(0.04),
            e5: 0.08,
            e6: 0.12,
            e7: konst(1.0),
        },
        m: 1.0,
        terminal: TerminalCondition { kappa0: 0.5, kappa1: 0.25 },
        info: InfoStructure::WFiltration,
    }
}

/// Zero-sum benchmark: the same dynamics as [`nonzero_sum_benchmark`] under
/// one antagonistic criterion with pure control charges (`r1 = 1`,
/// `r2 = 1.25`, no state weights). The candidate saddle point is the zero
/// control pair, exactly, which makes the saddle inequalities and the
/// min-max gap checkable against closed forms.
pub fn zero_sum_benchmark() -> ZeroSumSpec {
    let g = nonzero_sum_benchmark();
    ZeroSumSpec {
        horizon: g.horizon,
        a0: g.a0,
        a1: g.a1,
        a2: g.a2,
        a3: g.a3,
        a4: g.a4,
        b0: g.b0,
        c0: g.c0,
        c1: g.c1,
        c2: g.c2,
        c3: g.c3,
        d0: g.d0,
        l1: CoefficientFn::ZERO,
        l2: CoefficientFn::ZERO,
        l3: CoefficientFn::ZERO,
        l4: CoefficientFn::ZERO,
        l5: 0.0,
        l6: 0.0,
        r1: konst(1.0),
        r2: konst(1.25),
        m: g.m,
        terminal: g.terminal,
        info: g.info,
    }
}

/// Closed-form exponential instance: `-dY = Y dt` with `Y(T) = 1` on
/// `[0, 1]` and no other activity. The continuous solution is
/// `Y(t) = e^(1-t)`, so `Y(0) = e`; the tree scheme compounds to
/// `(1 + dt)^N` exactly.
pub fn exponential_growth() -> LqGameSpec {
    let cost = || PlayerCost {
        e1: CoefficientFn::ZERO,
        e2: CoefficientFn::ZERO,
        e3: CoefficientFn::ZERO,
        e4: CoefficientFn::ZERO,
        e5: 0.0,
        e6: 0.0,
        e7: konst(1.0),
    };
    LqGameSpec {
        horizon: 1.0,
        a0: CoefficientFn::ZERO,
        a1: konst(1.0),
        a2: CoefficientFn::ZERO,
        a3: CoefficientFn::ZERO,
        a4: CoefficientFn::ZERO,
        b0: CoefficientFn::ZERO,
        c0: CoefficientFn::ZERO,
        c1: CoefficientFn::ZERO,
        c2: CoefficientFn::ZERO,
        c3: CoefficientFn::ZERO,
        d0: CoefficientFn::ZERO,
        cost1: cost(),
        cost2: cost(),
        m: 1.0,
        terminal: TerminalCondition { kappa0: 1.0, kappa1: 0.0 },
        info: InfoStructure::WFiltration,
    }
}

/// Frozen-unit instance: all dynamics vanish, the terminal value is 1, and
/// the initial coupling is the identity, so `Y = y = 1` and `Z = z = 0` on
/// every scenario at every grid size. With all weights set to 1 the exact
/// cost of the zero policy is
/// `-1/2 (int_0^1 (1 + 1) dt + 1 + 1) = -2` for both players.
pub fn trivial_cost() -> LqGameSpec {
    let cost = || PlayerCost {
        e1: konst(1.0),
        e2: konst(1.0),
        e3: konst(1.0),
        e4: konst(1.0),
        e5: 1.0,
        e6: 1.0,
        e7: konst(1.0),
    };
    LqGameSpec {
        horizon: 1.0,
        a0: CoefficientFn::ZERO,
        a1: CoefficientFn::ZERO,
        a2: CoefficientFn::ZERO,
        a3: CoefficientFn::ZERO,
        a4: CoefficientFn::ZERO,
        b0: CoefficientFn::ZERO,
        c0: CoefficientFn::ZERO,
        c1: CoefficientFn::ZERO,
        c2: CoefficientFn::ZERO,
        c3: CoefficientFn::ZERO,
        d0: CoefficientFn::ZERO,
        cost1: cost(),
        cost2: cost(),
        m: 1.0,
        terminal: TerminalCondition { kappa0: 1.0, kappa1: 0.0 },
        info: InfoStructure::WFiltration,
    }
}
