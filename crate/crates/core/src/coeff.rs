//! Deterministic time-dependent coefficients.
//!
//! The model restricts coefficients to three closed-under-arithmetic families
//! so that the time integrals needed by closed-form checks are exactly
//! computable: constants, left-closed piecewise constants, and polynomials in
//! `t` (ascending coefficient order).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A deterministic coefficient function of time on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientFn {
    /// `t -> v`.
    Constant(f64),
    /// Left-closed pieces `[t_j, t_{j+1}) -> v_j`; breakpoints strictly
    /// increasing with the first at `0`. The last piece extends to `T`.
    PiecewiseConstant(Vec<(f64, f64)>),
    /// `c_0 + c_1 t + c_2 t^2 + ...` evaluated by Horner's rule.
    Polynomial(Vec<f64>),
}

impl CoefficientFn {
    pub const ZERO: CoefficientFn = CoefficientFn::Constant(0.0);

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            CoefficientFn::Constant(v) => *v,
            CoefficientFn::PiecewiseConstant(pieces) => {
                let mut v = pieces[0].1;
                for &(brk, val) in pieces {
                    if t >= brk {
                        v = val;
                    } else {
                        break;
                    }
                }
                v
            }
            CoefficientFn::Polynomial(cs) => {
                let mut acc = 0.0;
                for &c in cs.iter().rev() {
                    acc = acc * t + c;
                }
                acc
            }
        }
    }

    /// Exact integral over `[a, b]`, `a <= b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            CoefficientFn::Constant(v) => v * (b - a),
            CoefficientFn::PiecewiseConstant(pieces) => {
                let mut total = 0.0;
                for (idx, &(brk, val)) in pieces.iter().enumerate() {
                    let lo = if brk > a { brk } else { a };
                    let hi = match pieces.get(idx + 1) {
                        Some(&(next, _)) if next < b => next,
                        _ => b,
                    };
                    if hi > lo {
                        total += val * (hi - lo);
                    }
                }
                total
            }
            CoefficientFn::Polynomial(cs) => {
                let anti = |t: f64| -> f64 {
                    let mut acc = 0.0;
                    for (k, &c) in cs.iter().enumerate().rev() {
                        acc = acc * t + c / (k as f64 + 1.0);
                    }
                    acc * t
                };
                anti(b) - anti(a)
            }
        }
    }

    /// Exact sign flip (`t -> -self(t)`), preserving the representation kind.
    pub fn negated(&self) -> CoefficientFn {
        match self {
            CoefficientFn::Constant(v) => CoefficientFn::Constant(-v),
            CoefficientFn::PiecewiseConstant(pieces) => CoefficientFn::PiecewiseConstant(
                pieces.iter().map(|&(brk, v)| (brk, -v)).collect(),
            ),
            CoefficientFn::Polynomial(cs) => {
                CoefficientFn::Polynomial(cs.iter().map(|&c| -c).collect())
            }
        }
    }

    /// Structural zero test: every representable value is `0`.
    pub fn is_zero(&self) -> bool {
        match self {
            CoefficientFn::Constant(v) => *v == 0.0,
            CoefficientFn::PiecewiseConstant(pieces) => pieces.iter().all(|&(_, v)| v == 0.0),
            CoefficientFn::Polynomial(cs) => cs.iter().all(|&c| c == 0.0),
        }
    }

    /// Checks representation invariants (finite data, sorted breakpoints
    /// starting at 0, nonempty) and reports the first problem.
    pub fn check_well_formed(&self, name: &'static str) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidArgument { arg: name, reason });
        match self {
            CoefficientFn::Constant(v) => {
                if !v.is_finite() {
                    return fail(format!("constant value {v} is not finite"));
                }
            }
            CoefficientFn::PiecewiseConstant(pieces) => {
                if pieces.is_empty() {
                    return fail("piecewise coefficient has no pieces".into());
                }
                if pieces[0].0 != 0.0 {
                    return fail(format!("first breakpoint must be 0, got {}", pieces[0].0));
                }
                for w in pieces.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return fail(format!(
                            "breakpoints must be strictly increasing ({} then {})",
                            w[0].0, w[1].0
                        ));
                    }
                }
                for &(brk, v) in pieces {
                    if !brk.is_finite() || !v.is_finite() {
                        return fail(format!("non-finite piece ({brk}, {v})"));
                    }
                }
            }
            CoefficientFn::Polynomial(cs) => {
                if cs.is_empty() {
                    return fail("polynomial has no coefficients".into());
                }
                for &c in cs {
                    if !c.is_finite() {
                        return fail(format!("non-finite polynomial coefficient {c}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Evaluation points that witness the range of the function on `[0, T]`
    /// for sign checks: piece values are checked exactly, polynomials on a
    /// dense sample (documented approximation for high-degree oscillation).
    pub fn sign_check_points(&self, t_end: f64) -> Vec<f64> {
        match self {
            CoefficientFn::Constant(_) => vec![0.0],
            CoefficientFn::PiecewiseConstant(pieces) => {
                pieces.iter().map(|&(brk, _)| brk).filter(|&b| b <= t_end).collect()
            }
            CoefficientFn::Polynomial(cs) => {
                if cs.len() <= 1 {
                    return vec![0.0];
                }
                let samples = 256;
                (0..=samples).map(|k| t_end * k as f64 / samples as f64).collect()
            }
        }
    }

    /// Minimum of the coefficient over the sign-check points.
    pub fn min_on(&self, t_end: f64) -> (f64, f64) {
        let mut best_t = 0.0;
        let mut best_v = f64::INFINITY;
        for t in self.sign_check_points(t_end) {
            let v = self.eval(t);
            if v < best_v {
                best_v = v;
                best_t = t;
            }
        }
        (best_v, best_t)
    }
}
