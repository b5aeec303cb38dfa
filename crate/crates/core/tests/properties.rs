//! Randomized invariants: algebraic identities the solver must satisfy for
//! *every* input, checked over generated coefficient functions, weight sets,
//! and policies.

use proptest::prelude::*;

use dsgame_core::coeff::CoefficientFn;
use dsgame_core::instances::nonzero_sum_benchmark;
use dsgame_core::model::{CostWeights, Player};
use dsgame_core::noise::{TimeGrid, TreeNoise};
use dsgame_core::oracle::{eval_cost_on_tree, solve_on_tree, PolicyOnTree};

fn coefficient_strategy() -> impl Strategy<Value = CoefficientFn> {
    let constant = (-2.0f64..2.0).prop_map(CoefficientFn::Constant);
    let piecewise = (
        proptest::collection::vec(-2.0f64..2.0, 1..4),
        proptest::collection::vec(0.01f64..0.9, 0..3),
    )
        .prop_map(|(values, mut cuts)| {
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cuts.dedup();
            let mut pieces = vec![(0.0, values[0])];
            for (j, c) in cuts.iter().enumerate() {
                pieces.push((*c, values[(j + 1) % values.len()]));
            }
            CoefficientFn::PiecewiseConstant(pieces)
        });
    let polynomial = proptest::collection::vec(-1.0f64..1.0, 1..4)
        .prop_map(CoefficientFn::Polynomial);
    prop_oneof![constant, piecewise, polynomial]
}

fn weights_strategy() -> impl Strategy<Value = CostWeights> {
    (
        coefficient_strategy(),
        coefficient_strategy(),
        coefficient_strategy(),
        coefficient_strategy(),
        coefficient_strategy(),
        coefficient_strategy(),
        -2.0f64..2.0,
        -2.0f64..2.0,
    )
        .prop_map(|(w_y, w_z, w_cap_y, w_cap_z, w_v1, w_v2, w_terminal_y, w_initial_cap_y)| {
            CostWeights { w_y, w_z, w_cap_y, w_cap_z, w_v1, w_v2, w_terminal_y, w_initial_cap_y }
        })
}

/// A policy with independently random values at every node of a depth-3 tree.
fn policy_strategy(depth: usize) -> impl Strategy<Value = PolicyOnTree> {
    let slots = (1usize << depth) - 1;
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2 * slots..=2 * slots).prop_map(
        move |values| {
            let mut policy = PolicyOnTree::zero(depth);
            let mut it = values.into_iter();
            for k in 0..depth {
                for w in 0..(1usize << k) {
                    let (v1, v2) = it.next().unwrap();
                    policy.set_control(Player::One, k, w, v1);
                    policy.set_control(Player::Two, k, w, v2);
                }
            }
            policy
        },
    )
}

fn add_constants(a: &CoefficientFn, b: &CoefficientFn, t_grid: &[f64]) -> CoefficientFn {
    // Piecewise sum realized on the evaluation grid: since costs only read
    // weights at grid nodes, agreeing there is agreeing everywhere it counts.
    let mut pieces = Vec::new();
    for &t in t_grid {
        pieces.push((t, a.eval(t) + b.eval(t)));
    }
    pieces[0].0 = 0.0;
    CoefficientFn::PiecewiseConstant(pieces)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Negating every weight negates the cost bit-for-bit: products and sums
    /// of IEEE doubles negate exactly.
    #[test]
    fn cost_negation_is_exact(weights in weights_strategy(), policy in policy_strategy(3)) {
        let spec = nonzero_sum_benchmark();
        let grid = TimeGrid::new(spec.horizon, 3).unwrap();
        let noise = TreeNoise::new(&grid).unwrap();
        let sol = solve_on_tree(&spec, &noise, &policy).unwrap();
        let j = eval_cost_on_tree(&weights, &sol, &noise, &policy).unwrap();
        let j_neg = eval_cost_on_tree(&weights.negated(), &sol, &noise, &policy).unwrap();
        prop_assert_eq!(j_neg, -j);
    }

    /// The cost is linear in the weight set: evaluating the sum of two weight
    /// sets matches the sum of the evaluations (up to roundoff from the
    /// different summation order).
    #[test]
    fn cost_is_additive_in_weights(
        a in weights_strategy(),
        b in weights_strategy(),
        policy in policy_strategy(3),
    ) {
        let spec = nonzero_sum_benchmark();
        let grid = TimeGrid::new(spec.horizon, 3).unwrap();
        let noise = TreeNoise::new(&grid).unwrap();
        let sol = solve_on_tree(&spec, &noise, &policy).unwrap();
        let nodes: Vec<f64> = (0..3).map(|k| grid.node(k)).collect();
        let combined = CostWeights {
            w_y: add_constants(&a.w_y, &b.w_y, &nodes),
            w_z: add_constants(&a.w_z, &b.w_z, &nodes),
            w_cap_y: add_constants(&a.w_cap_y, &b.w_cap_y, &nodes),
            w_cap_z: add_constants(&a.w_cap_z, &b.w_cap_z, &nodes),
            w_v1: add_constants(&a.w_v1, &b.w_v1, &nodes),
            w_v2: add_constants(&a.w_v2, &b.w_v2, &nodes),
            w_terminal_y: a.w_terminal_y + b.w_terminal_y,
            w_initial_cap_y: a.w_initial_cap_y + b.w_initial_cap_y,
        };
        let ja = eval_cost_on_tree(&a, &sol, &noise, &policy).unwrap();
        let jb = eval_cost_on_tree(&b, &sol, &noise, &policy).unwrap();
        let jab = eval_cost_on_tree(&combined, &sol, &noise, &policy).unwrap();
        let scale = 1.0 + ja.abs() + jb.abs();
        prop_assert!((jab - (ja + jb)).abs() <= 1e-12 * scale,
            "J(a+b) = {jab}, J(a)+J(b) = {}", ja + jb);
    }

    /// Solving the same instance twice yields bit-identical trees.
    #[test]
    fn oracle_is_deterministic(policy in policy_strategy(3)) {
        let spec = nonzero_sum_benchmark();
        let grid = TimeGrid::new(spec.horizon, 3).unwrap();
        let noise = TreeNoise::new(&grid).unwrap();
        let first = solve_on_tree(&spec, &noise, &policy).unwrap();
        let second = solve_on_tree(&spec, &noise, &policy).unwrap();
        prop_assert_eq!(first, second);
    }

    /// Coefficient integrals are additive over adjacent intervals.
    #[test]
    fn integral_is_additive_over_splits(
        c in coefficient_strategy(),
        a in 0.0f64..0.5,
        mid in 0.0f64..1.0,
        b in 0.5f64..1.0,
    ) {
        let (lo, hi) = (a.min(b), a.max(b));
        let m = lo + mid * (hi - lo);
        let whole = c.integral(lo, hi);
        let parts = c.integral(lo, m) + c.integral(m, hi);
        prop_assert!((whole - parts).abs() <= 1e-12 * (1.0 + whole.abs()),
            "integral({lo},{hi}) = {whole} but split at {m} gives {parts}");
    }

    /// Piecewise evaluation agrees with an independent linear scan for the
    /// piece containing `t`.
    #[test]
    fn piecewise_eval_matches_linear_scan(
        c in coefficient_strategy(),
        t in 0.0f64..1.0,
    ) {
        if let CoefficientFn::PiecewiseConstant(pieces) = &c {
            let mut expect = f64::NAN;
            for (j, &(brk, v)) in pieces.iter().enumerate() {
                let next = pieces.get(j + 1).map(|p| p.0).unwrap_or(f64::INFINITY);
                if t >= brk && t < next {
                    expect = v;
                }
            }
            prop_assert_eq!(c.eval(t), expect);
        }
    }

    /// Cumulative noise values telescope: the step increment recovers the
    /// difference of consecutive level values.
    #[test]
    fn noise_level_values_telescope(bits in 0usize..256, k in 0usize..8) {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let noise = TreeNoise::new(&grid).unwrap();
        let before = noise.level_value(bits, 8, k);
        let after = noise.level_value(bits, 8, k + 1);
        let inc = noise.increment(bits, k);
        prop_assert!((after - before - inc).abs() < 1e-15);
    }

    /// Perturbing a policy shifts exactly the targeted player's controls by
    /// `eps * dir` and leaves the other player untouched.
    #[test]
    fn policy_perturbation_is_exact_and_one_sided(
        policy in policy_strategy(3),
        eps in -1.0f64..1.0,
    ) {
        let dir = |k: usize, w: usize| (k as f64) - 0.5 * (w as f64);
        let shifted = policy.perturb(Player::One, eps, dir);
        for k in 0..3 {
            for w in 0..(1usize << k) {
                let base = policy.control(Player::One, k, w);
                prop_assert_eq!(shifted.control(Player::One, k, w), base + eps * dir(k, w));
                prop_assert_eq!(
                    shifted.control(Player::Two, k, w),
                    policy.control(Player::Two, k, w)
                );
            }
        }
    }

    /// Filtering a level averages each forward block: cross-checked against a
    /// direct loop over the addressing scheme.
    #[test]
    fn filter_level_averages_forward_blocks(policy in policy_strategy(3)) {
        let spec = nonzero_sum_benchmark();
        let grid = TimeGrid::new(spec.horizon, 3).unwrap();
        let noise = TreeNoise::new(&grid).unwrap();
        let sol = solve_on_tree(&spec, &noise, &policy).unwrap();
        for k in 0..=3 {
            let filtered = sol.cap_y.filter_level(k);
            prop_assert_eq!(filtered.len(), 1usize << k);
            for (w, &f) in filtered.iter().enumerate() {
                let suffixes = 1usize << (3 - k);
                let mean = (0..suffixes).map(|b| sol.cap_y.at(k, w, b)).sum::<f64>()
                    / suffixes as f64;
                prop_assert!((f - mean).abs() < 1e-15);
            }
        }
    }
}
