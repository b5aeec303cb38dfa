//! The filtered forward-backward system, its Riccati decoupling, filtered
//! trajectory simulation, and candidate equilibrium synthesis.
//!
//! Conditioning the game state and both players' adjoint processes on the
//! observed filtration produces a linear forward-backward system in the
//! 3-vectors
//!
//! ```text
//! x^ = (y~, p1~, p2~)   (forward),   Y^ = (Y~, q1~, q2~)   (backward),
//! Z^ = martingale integrand of Y^ against dW,
//! ```
//!
//! with dynamics (all blocks time-dependent 3x3 matrices / 3-vectors)
//!
//! ```text
//! dx^ = (Fxx x^ + FxY Y^ + FxZ Z^ + fx) dt + (Gxx x^ + GxY Y^ + GxZ Z^ + gx) dW
//! dY^ = (FYx x^ + FYY Y^ + FYZ Z^ + fY) dt + Z^ dW
//! Y^(T) = G_T x^(T) + (kappa0 + kappa1 W(T)) e1,     x^(0) = K Y^(0).
//! ```
//!
//! The decoupling ansatz `Y^ = P(t) x^ + h0(t) + h1(t) W(t)` (affine in the
//! running noise so an affine-in-`W(T)` terminal value stays representable)
//! closes into matrix/vector ODEs for `P, h0, h1`, integrated backward with
//! classical fourth-order Runge-Kutta. Substituting the ansatz into the
//! forward equation leaves one ordinary SDE for `x^`, stepped by
//! Euler-Maruyama.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::coeff::CoefficientFn;
use crate::hamiltonian::ControlPair;
use crate::mat::{vadd, vscale, Mat, VecN};
use crate::model::{InfoStructure, LqGameSpec, Player, validate_spec};
use crate::noise::{PathEnsemble, TimeGrid};
use crate::{math, Error, Result};

/// A scalar function of time.
pub type TimeFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Square matrix of time-dependent entries (absent entries are zero).
pub struct TimeMat {
    n: usize,
    entries: Vec<Option<TimeFn>>,
}

impl TimeMat {
    pub fn zeros(n: usize) -> TimeMat {
        let mut entries = Vec::with_capacity(n * n);
        entries.resize_with(n * n, || None);
        TimeMat { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, i: usize, j: usize, f: TimeFn) {
        self.entries[i * self.n + j] = Some(f);
    }

    /// Installs a coefficient function (cloned) as entry `(i, j)`.
    pub fn set_coeff(&mut self, i: usize, j: usize, c: &CoefficientFn) {
        let c = c.clone();
        self.set(i, j, Box::new(move |t| c.eval(t)));
    }

    /// Installs a constant entry.
    pub fn set_const(&mut self, i: usize, j: usize, v: f64) {
        self.set(i, j, Box::new(move |_| v));
    }

    pub fn eval(&self, t: f64) -> Mat {
        let mut m = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if let Some(f) = &self.entries[i * self.n + j] {
                    m.set(i, j, f(t));
                }
            }
        }
        m
    }
}

/// Vector of time-dependent entries (absent entries are zero).
pub struct TimeVec {
    n: usize,
    entries: Vec<Option<TimeFn>>,
}

impl TimeVec {
    pub fn zeros(n: usize) -> TimeVec {
        let mut entries = Vec::with_capacity(n);
        entries.resize_with(n, || None);
        TimeVec { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, i: usize, f: TimeFn) {
        self.entries[i] = Some(f);
    }

    pub fn set_coeff(&mut self, i: usize, c: &CoefficientFn) {
        let c = c.clone();
        self.set(i, Box::new(move |t| c.eval(t)));
    }

    pub fn eval(&self, t: f64) -> VecN {
        (0..self.n)
            .map(|i| self.entries[i].as_ref().map(|f| f(t)).unwrap_or(0.0))
            .collect()
    }
}

/// Block description of the filtered linear forward-backward system.
pub struct LinearFbsdeSystem {
    pub dim: usize,
    /// Forward drift blocks on `(x^, Y^, Z^)` and affine part.
    pub forward_drift_x: TimeMat,
    pub forward_drift_y: TimeMat,
    pub forward_drift_z: TimeMat,
    pub forward_affine: TimeVec,
    /// Forward diffusion blocks and affine part.
    pub forward_diff_x: TimeMat,
    pub forward_diff_y: TimeMat,
    pub forward_diff_z: TimeMat,
    pub forward_diff_affine: TimeVec,
    /// Backward drift blocks and affine part.
    pub backward_drift_x: TimeMat,
    pub backward_drift_y: TimeMat,
    pub backward_drift_z: TimeMat,
    pub backward_affine: TimeVec,
    /// `Y^(T) = terminal_gain x^(T) + (kappa0 + kappa1 W(T)) e1`.
    pub terminal_gain: Mat,
    pub kappa0: f64,
    pub kappa1: f64,
    /// `x^(0) = initial_coupling Y^(0)`.
    pub initial_coupling: Mat,
}

/// Builds the filtered system for a partial-information spec, with the
/// candidate equilibrium feedback already substituted into the backward
/// drift. Requires a valid spec observing the `W`-filtration.
pub fn assemble_filtering_system(spec: &LqGameSpec) -> Result<LinearFbsdeSystem> {
    validate_spec(spec).into_result()?;
    if spec.info != InfoStructure::WFiltration {
        return Err(Error::UnsupportedConfiguration(alloc::string::String::from(
            "the filtered system is defined for the partial-information case \
             (info = w-filtration); full-information specs bypass filtering",
        )));
    }
    let n = 3;

    // Forward stack x^ = (y~, p1~, p2~); backward stack Y^ = (Y~, q1~, q2~).
    let mut forward_drift_x = TimeMat::zeros(n);
    forward_drift_x.set_coeff(0, 0, &spec.c1);
    forward_drift_x.set_coeff(1, 1, &spec.a1);
    forward_drift_x.set_coeff(2, 2, &spec.a1);

    let mut forward_drift_y = TimeMat::zeros(n);
    forward_drift_y.set_coeff(0, 0, &spec.c2);
    forward_drift_y.set_coeff(1, 0, &spec.cost1.e3);
    forward_drift_y.set_coeff(2, 0, &spec.cost2.e3);
    forward_drift_y.set_coeff(1, 1, &spec.c2.negated());
    forward_drift_y.set_coeff(2, 2, &spec.c2.negated());

    let mut forward_drift_z = TimeMat::zeros(n);
    forward_drift_z.set_coeff(0, 0, &spec.c3);

    let mut forward_affine = TimeVec::zeros(n);
    forward_affine.set_coeff(0, &spec.c0);

    let mut forward_diff_x = TimeMat::zeros(n);
    forward_diff_x.set_coeff(1, 1, &spec.a2);
    forward_diff_x.set_coeff(2, 2, &spec.a2);

    let mut forward_diff_y = TimeMat::zeros(n);
    forward_diff_y.set_coeff(1, 1, &spec.c3.negated());
    forward_diff_y.set_coeff(2, 2, &spec.c3.negated());

    let mut forward_diff_z = TimeMat::zeros(n);
    forward_diff_z.set_coeff(1, 0, &spec.cost1.e4);
    forward_diff_z.set_coeff(2, 0, &spec.cost2.e4);

    let mut forward_diff_affine = TimeVec::zeros(n);
    forward_diff_affine.set_coeff(0, &spec.d0);

    // Backward drift of Y~ carries the substituted feedback
    // a3 u1 = -(a3^2/e17) p1~ and a4 u2 = -(a4^2/e27) p2~, negated again by
    // moving the system from "-dY" form to "dY" form.
    let mut backward_drift_x = TimeMat::zeros(n);
    {
        let (a3, e17) = (spec.a3.clone(), spec.cost1.e7.clone());
        backward_drift_x.set(0, 1, Box::new(move |t| {
            let g = a3.eval(t);
            g * g / e17.eval(t)
        }));
        let (a4, e27) = (spec.a4.clone(), spec.cost2.e7.clone());
        backward_drift_x.set(0, 2, Box::new(move |t| {
            let g = a4.eval(t);
            g * g / e27.eval(t)
        }));
    }
    backward_drift_x.set_coeff(1, 0, &spec.cost1.e1);
    backward_drift_x.set_coeff(2, 0, &spec.cost2.e1);

    let mut backward_drift_y = TimeMat::zeros(n);
    backward_drift_y.set_coeff(0, 0, &spec.a1.negated());
    backward_drift_y.set_coeff(1, 1, &spec.c1.negated());
    backward_drift_y.set_coeff(2, 2, &spec.c1.negated());

    let mut backward_drift_z = TimeMat::zeros(n);
    backward_drift_z.set_coeff(0, 0, &spec.a2.negated());

    let mut backward_affine = TimeVec::zeros(n);
    backward_affine.set_coeff(0, &spec.a0.negated());

    let mut terminal_gain = Mat::zeros(n);
    terminal_gain.set(1, 0, -spec.cost1.e5);
    terminal_gain.set(2, 0, -spec.cost2.e5);

    let mut initial_coupling = Mat::zeros(n);
    initial_coupling.set(0, 0, spec.m);
    initial_coupling.set(1, 0, spec.cost1.e6);
    initial_coupling.set(1, 1, -spec.m);
    initial_coupling.set(2, 0, spec.cost2.e6);
    initial_coupling.set(2, 2, -spec.m);

    Ok(LinearFbsdeSystem {
        dim: n,
        forward_drift_x,
        forward_drift_y,
        forward_drift_z,
        forward_affine,
        forward_diff_x,
        forward_diff_y,
        forward_diff_z,
        forward_diff_affine,
        backward_drift_x,
        backward_drift_y,
        backward_drift_z,
        backward_affine,
        terminal_gain,
        kappa0: spec.terminal.kappa0,
        kappa1: spec.terminal.kappa1,
        initial_coupling,
    })
}

/// Numerical guard-rails for the decoupling integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecouplingLimits {
    /// Condition-number ceiling for `(I - P GxZ)` and `(I - K P(0))`.
    pub max_condition: f64,
    /// Ceiling on `|P|` entries before the integration is declared blown up.
    pub max_entry: f64,
}

impl Default for DecouplingLimits {
    fn default() -> Self {
        DecouplingLimits { max_condition: 1e12, max_entry: 1e8 }
    }
}

/// The decoupling field and offsets on a grid, plus the deterministic initial
/// forward state.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    grid: TimeGrid,
    /// `P(t_k)`, `k = 0..=N`.
    p: Vec<Mat>,
    /// `h1(t_k)`.
    h1: Vec<VecN>,
    /// `h0(t_k)`.
    h0: Vec<VecN>,
    /// `x^(0)`, the same on every path.
    x0: VecN,
    /// Largest condition number of `(I - P GxZ)` seen at any stage evaluation.
    pub max_lambda_cond: f64,
    /// Condition number of the initial coupling solve `(I - K P(0))`.
    pub coupling_cond: f64,
}

impl RiccatiSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn p_at(&self, k: usize) -> &Mat {
        &self.p[k]
    }

    pub fn h1_at(&self, k: usize) -> &VecN {
        &self.h1[k]
    }

    pub fn h0_at(&self, k: usize) -> &VecN {
        &self.h0[k]
    }

    pub fn x0(&self) -> &VecN {
        &self.x0
    }
}

struct DecoupledOde<'a> {
    sys: &'a LinearFbsdeSystem,
    limits: DecouplingLimits,
}

struct OdeState {
    p: Mat,
    h1: VecN,
    h0: VecN,
}

impl OdeState {
    fn axpy(&self, alpha: f64, d: &OdeState) -> OdeState {
        OdeState {
            p: self.p.add(&d.p.scale(alpha)),
            h1: crate::mat::axpy(&self.h1, alpha, &d.h1),
            h0: crate::mat::axpy(&self.h0, alpha, &d.h0),
        }
    }
}

impl<'a> DecoupledOde<'a> {
    /// `Lambda = (I - P GxZ)^-1` with the condition guard, plus its condition
    /// number.
    fn lambda(&self, t: f64, p: &Mat) -> Result<(Mat, f64)> {
        let n = self.sys.dim;
        let gxz = self.sys.forward_diff_z.eval(t);
        let m = Mat::identity(n).sub(&p.mul(&gxz));
        let cond = m.cond_1();
        if !cond.is_finite() || cond > self.limits.max_condition {
            return Err(Error::DecouplingBreakdown { t, cond, limit: self.limits.max_condition });
        }
        let inv = m.inverse().ok_or(Error::DecouplingBreakdown {
            t,
            cond: f64::INFINITY,
            limit: self.limits.max_condition,
        })?;
        Ok((inv, cond))
    }

    /// Time derivatives of `(P, h1, h0)` and the condition number seen.
    fn derivative(&self, t: f64, s: &OdeState) -> Result<(OdeState, f64)> {
        let sys = self.sys;
        let p = &s.p;
        let (lambda, cond) = self.lambda(t, p)?;

        let fxx = sys.forward_drift_x.eval(t);
        let fxy = sys.forward_drift_y.eval(t);
        let fxz = sys.forward_drift_z.eval(t);
        let gxx = sys.forward_diff_x.eval(t);
        let gxy = sys.forward_diff_y.eval(t);
        let fyx = sys.backward_drift_x.eval(t);
        let fyy = sys.backward_drift_y.eval(t);
        let fyz = sys.backward_drift_z.eval(t);
        let fx = sys.forward_affine.eval(t);
        let gx = sys.forward_diff_affine.eval(t);
        let fy = sys.backward_affine.eval(t);

        // Martingale blocks: Z^ = Lambda (M1 x^ + MW W + M0).
        let m1 = p.mul(&gxx.add(&gxy.mul(p)));
        let mw = p.mul_vec(&gxy.mul_vec(&s.h1));
        let m0 = vadd(&p.mul_vec(&vadd(&gxy.mul_vec(&s.h0), &gx)), &s.h1);

        // Common factor (FYZ - P FxZ) Lambda.
        let z_feed = fyz.sub(&p.mul(&fxz)).mul(&lambda);
        // Common factor (FYY - P FxY).
        let y_feed = fyy.sub(&p.mul(&fxy));

        let dp = fyx
            .add(&fyy.mul(p))
            .sub(&p.mul(&fxx))
            .sub(&p.mul(&fxy).mul(p))
            .add(&z_feed.mul(&m1));
        let dh1 = vadd(&y_feed.mul_vec(&s.h1), &z_feed.mul_vec(&mw));
        let dh0_core = vadd(&y_feed.mul_vec(&s.h0), &z_feed.mul_vec(&m0));
        let dh0 = vadd(&vadd(&dh0_core, &fy), &vscale(&p.mul_vec(&fx), -1.0));
        Ok((OdeState { p: dp, h1: dh1, h0: dh0 }, cond))
    }
}

/// Integrates the decoupling ODEs backward from `T` to `0` with classical
/// fourth-order Runge-Kutta on the grid nodes, then solves the initial
/// coupling for the deterministic starting state.
pub fn solve_decoupling(
    sys: &LinearFbsdeSystem,
    grid: &TimeGrid,
    limits: DecouplingLimits,
) -> Result<RiccatiSolution> {
    let n = sys.dim;
    let steps = grid.steps();
    let ode = DecoupledOde { sys, limits };

    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    let mut state = OdeState {
        p: sys.terminal_gain.clone(),
        h1: vscale(&e1, sys.kappa1),
        h0: vscale(&e1, sys.kappa0),
    };

    let mut p_nodes = vec![Mat::zeros(n); steps + 1];
    let mut h1_nodes = vec![vec![0.0; n]; steps + 1];
    let mut h0_nodes = vec![vec![0.0; n]; steps + 1];
    p_nodes[steps] = state.p.clone();
    h1_nodes[steps] = state.h1.clone();
    h0_nodes[steps] = state.h0.clone();

    let mut max_cond = 0.0_f64;
    let track = |c: f64, acc: &mut f64| {
        if c > *acc {
            *acc = c;
        }
    };

    for k in (0..steps).rev() {
        let t_hi = grid.node(k + 1);
        let t_lo = grid.node(k);
        let h = t_lo - t_hi; // negative step
        let t_mid = 0.5 * (t_hi + t_lo);

        let (k1, c1) = ode.derivative(t_hi, &state)?;
        track(c1, &mut max_cond);
        let (k2, c2) = ode.derivative(t_mid, &state.axpy(0.5 * h, &k1))?;
        track(c2, &mut max_cond);
        let (k3, c3) = ode.derivative(t_mid, &state.axpy(0.5 * h, &k2))?;
        track(c3, &mut max_cond);
        let (k4, c4) = ode.derivative(t_lo, &state.axpy(h, &k3))?;
        track(c4, &mut max_cond);

        let combined = k1.axpy(2.0, &k2).axpy(2.0, &k3).axpy(1.0, &k4);
        state = state.axpy(h / 6.0, &combined);

        let p_max = state.p.max_abs();
        if !p_max.is_finite() || p_max > limits.max_entry {
            return Err(Error::RiccatiBlowup { t: t_lo, max_abs: p_max, limit: limits.max_entry });
        }
        p_nodes[k] = state.p.clone();
        h1_nodes[k] = state.h1.clone();
        h0_nodes[k] = state.h0.clone();
    }

    // x^(0) solves (I - K P(0)) x0 = K h0(0); W(0) = 0 removes h1.
    let kmat = &sys.initial_coupling;
    let lhs = Mat::identity(n).sub(&kmat.mul(&p_nodes[0]));
    let rhs = kmat.mul_vec(&h0_nodes[0]);
    let (x0, coupling_cond) = lhs.solve(&rhs).ok_or(Error::DecouplingBreakdown {
        t: 0.0,
        cond: f64::INFINITY,
        limit: limits.max_condition,
    })?;
    if coupling_cond > limits.max_condition {
        return Err(Error::DecouplingBreakdown {
            t: 0.0,
            cond: coupling_cond,
            limit: limits.max_condition,
        });
    }

    Ok(RiccatiSolution {
        grid: grid.clone(),
        p: p_nodes,
        h1: h1_nodes,
        h0: h0_nodes,
        x0,
        max_lambda_cond: max_cond,
        coupling_cond,
    })
}

/// Per-node matrices of the decoupled forward dynamics, prepared once so each
/// Euler-Maruyama step is a handful of small mat-vec products.
struct NodeData {
    /// Ansatz blocks: `Y^ = p x + h0 + h1 W`.
    p: Mat,
    h0: VecN,
    h1: VecN,
    /// `Z^ = z_x x + z_w W + z_c`.
    z_x: Mat,
    z_w: VecN,
    z_c: VecN,
    /// Forward drift after substitution: `drift_x x + drift_w W + drift_c`.
    drift_x: Mat,
    drift_w: VecN,
    drift_c: VecN,
    /// Forward diffusion after substitution.
    diff_x: Mat,
    diff_w: VecN,
    diff_c: VecN,
    /// Backward drift blocks (un-substituted) for residual evaluation.
    back_x: Mat,
    back_y: Mat,
    back_z: Mat,
    back_aff: VecN,
}

/// Steps the decoupled system: substitutes the ansatz into the forward
/// dynamics and exposes one-step Euler-Maruyama transitions plus ansatz
/// evaluation of the backward quantities.
pub struct DecoupledStepper {
    grid: TimeGrid,
    x0: VecN,
    nodes: Vec<NodeData>,
}

impl DecoupledStepper {
    pub fn new(
        sys: &LinearFbsdeSystem,
        ric: &RiccatiSolution,
        limits: DecouplingLimits,
    ) -> Result<DecoupledStepper> {
        let grid = ric.grid().clone();
        let ode = DecoupledOde { sys, limits };
        let mut nodes = Vec::with_capacity(grid.steps() + 1);
        for k in 0..=grid.steps() {
            let t = grid.node(k);
            let p = ric.p_at(k).clone();
            let h0 = ric.h0_at(k).clone();
            let h1 = ric.h1_at(k).clone();
            let (lambda, _cond) = ode.lambda(t, &p)?;

            let gxx = sys.forward_diff_x.eval(t);
            let gxy = sys.forward_diff_y.eval(t);
            let gx = sys.forward_diff_affine.eval(t);
            let z_x = lambda.mul(&p.mul(&gxx.add(&gxy.mul(&p))));
            let z_w = lambda.mul_vec(&p.mul_vec(&gxy.mul_vec(&h1)));
            let z_c = lambda.mul_vec(&vadd(&p.mul_vec(&vadd(&gxy.mul_vec(&h0), &gx)), &h1));

            let fxx = sys.forward_drift_x.eval(t);
            let fxy = sys.forward_drift_y.eval(t);
            let fxz = sys.forward_drift_z.eval(t);
            let fx = sys.forward_affine.eval(t);
            let drift_x = fxx.add(&fxy.mul(&p)).add(&fxz.mul(&z_x));
            let drift_w = vadd(&fxy.mul_vec(&h1), &fxz.mul_vec(&z_w));
            let drift_c = vadd(&vadd(&fxy.mul_vec(&h0), &fxz.mul_vec(&z_c)), &fx);

            let gxz = sys.forward_diff_z.eval(t);
            let diff_x = gxx.add(&gxy.mul(&p)).add(&gxz.mul(&z_x));
            let diff_w = vadd(&gxy.mul_vec(&h1), &gxz.mul_vec(&z_w));
            let diff_c = vadd(&vadd(&gxy.mul_vec(&h0), &gxz.mul_vec(&z_c)), &gx);

            nodes.push(NodeData {
                p,
                h0,
                h1,
                z_x,
                z_w,
                z_c,
                drift_x,
                drift_w,
                drift_c,
                diff_x,
                diff_w,
                diff_c,
                back_x: sys.backward_drift_x.eval(t),
                back_y: sys.backward_drift_y.eval(t),
                back_z: sys.backward_drift_z.eval(t),
                back_aff: sys.backward_affine.eval(t),
            });
        }
        Ok(DecoupledStepper { grid, x0: ric.x0().clone(), nodes })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Deterministic initial forward state.
    pub fn initial_x(&self) -> &VecN {
        &self.x0
    }

    /// One Euler-Maruyama step from node `k` with running-noise value `w` and
    /// increment `dw`.
    pub fn x_step(&self, k: usize, x: &[f64], w: f64, dw: f64) -> VecN {
        let node = &self.nodes[k];
        let dt = self.grid.delta();
        let drift = vadd(&vadd(&node.drift_x.mul_vec(x), &vscale(&node.drift_w, w)), &node.drift_c);
        let diff = vadd(&vadd(&node.diff_x.mul_vec(x), &vscale(&node.diff_w, w)), &node.diff_c);
        let mut out = x.to_vec();
        for i in 0..out.len() {
            out[i] += dt * drift[i] + dw * diff[i];
        }
        out
    }

    /// Ansatz evaluation `Y^ = P x + h0 + h1 W` at node `k`.
    pub fn cap_y(&self, k: usize, x: &[f64], w: f64) -> VecN {
        let node = &self.nodes[k];
        vadd(&vadd(&node.p.mul_vec(x), &node.h0), &vscale(&node.h1, w))
    }

    /// Ansatz evaluation of the martingale integrand at node `k`.
    pub fn cap_z(&self, k: usize, x: &[f64], w: f64) -> VecN {
        let node = &self.nodes[k];
        vadd(&vadd(&node.z_x.mul_vec(x), &vscale(&node.z_w, w)), &node.z_c)
    }

    /// Backward drift `FYx x + FYY Y + FYZ Z + fY` at node `k`.
    pub fn backward_drift(&self, k: usize, x: &[f64], cap_y: &[f64], cap_z: &[f64]) -> VecN {
        let node = &self.nodes[k];
        vadd(
            &vadd(&node.back_x.mul_vec(x), &node.back_y.mul_vec(cap_y)),
            &vadd(&node.back_z.mul_vec(cap_z), &node.back_aff),
        )
    }
}

/// The candidate equilibrium feedback `u1 = -(a3/e17) p1~`,
/// `u2 = -(a4/e27) p2~` as closed-form maps of time and the filtered adjoint
/// states. Adapted to the observed filtration by construction: the inputs are
/// driven by `W` only.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPolicy {
    a3: CoefficientFn,
    a4: CoefficientFn,
    e17: CoefficientFn,
    e27: CoefficientFn,
}

impl EquilibriumPolicy {
    pub fn from_spec(spec: &LqGameSpec) -> EquilibriumPolicy {
        EquilibriumPolicy {
            a3: spec.a3.clone(),
            a4: spec.a4.clone(),
            e17: spec.cost1.e7.clone(),
            e27: spec.cost2.e7.clone(),
        }
    }

    /// Feedback gain of one player at time `t` (`u_i = gain * p_i~`).
    pub fn gain(&self, player: Player, t: f64) -> f64 {
        match player {
            Player::One => -self.a3.eval(t) / self.e17.eval(t),
            Player::Two => -self.a4.eval(t) / self.e27.eval(t),
        }
    }

    pub fn controls(&self, t: f64, p1: f64, p2: f64) -> ControlPair {
        ControlPair {
            v1: self.gain(Player::One, t) * p1,
            v2: self.gain(Player::Two, t) * p2,
        }
    }
}

/// A feedback policy tabulated at grid nodes:
/// `u_i(t_k, p_i~) = gain_i[k] * p_i~ + offset_i[k]`.
///
/// This is the operational form: it serializes to a table, composes onto
/// noise trees, and supports deliberate corruption (offset shifts) for
/// negative-control tests.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePolicy {
    grid: TimeGrid,
    pub gain1: Vec<f64>,
    pub offset1: Vec<f64>,
    pub gain2: Vec<f64>,
    pub offset2: Vec<f64>,
}

impl NodePolicy {
    /// Tabulates a closed-form feedback at the grid nodes.
    pub fn tabulate(policy: &EquilibriumPolicy, grid: &TimeGrid) -> NodePolicy {
        let mut gain1 = Vec::with_capacity(grid.steps() + 1);
        let mut gain2 = Vec::with_capacity(grid.steps() + 1);
        for k in 0..=grid.steps() {
            let t = grid.node(k);
            gain1.push(policy.gain(Player::One, t));
            gain2.push(policy.gain(Player::Two, t));
        }
        NodePolicy {
            grid: grid.clone(),
            offset1: vec![0.0; grid.steps() + 1],
            offset2: vec![0.0; grid.steps() + 1],
            gain1,
            gain2,
        }
    }

    pub fn from_parts(
        grid: TimeGrid,
        gain1: Vec<f64>,
        offset1: Vec<f64>,
        gain2: Vec<f64>,
        offset2: Vec<f64>,
    ) -> Result<NodePolicy> {
        let want = grid.steps() + 1;
        for (name, v) in [
            ("gain1", &gain1),
            ("offset1", &offset1),
            ("gain2", &gain2),
            ("offset2", &offset2),
        ] {
            if v.len() != want {
                return Err(Error::InvalidArgument {
                    arg: "policy table",
                    reason: alloc::format!(
                        "{name} has {} rows, grid with {} steps needs {want}",
                        v.len(),
                        grid.steps()
                    ),
                });
            }
        }
        Ok(NodePolicy { grid, gain1, offset1, gain2, offset2 })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn controls(&self, k: usize, p1: f64, p2: f64) -> ControlPair {
        ControlPair {
            v1: self.gain1[k] * p1 + self.offset1[k],
            v2: self.gain2[k] * p2 + self.offset2[k],
        }
    }

    /// Returns a copy with one player's offsets shifted by a constant —
    /// a deliberately non-optimal policy for negative-control checks.
    pub fn with_offset_shift(&self, player: Player, shift: f64) -> NodePolicy {
        let mut out = self.clone();
        let offsets = match player {
            Player::One => &mut out.offset1,
            Player::Two => &mut out.offset2,
        };
        for o in offsets.iter_mut() {
            *o += shift;
        }
        out
    }
}

/// One simulated filtered path: noise and the three stacked processes at
/// every node, stored flat (`dim` values per node).
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredPath {
    pub w: Vec<f64>,
    x: Vec<f64>,
    cap_y: Vec<f64>,
    cap_z: Vec<f64>,
    dim: usize,
}

impl FilteredPath {
    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x[k * self.dim..(k + 1) * self.dim]
    }

    pub fn cap_y_at(&self, k: usize) -> &[f64] {
        &self.cap_y[k * self.dim..(k + 1) * self.dim]
    }

    pub fn cap_z_at(&self, k: usize) -> &[f64] {
        &self.cap_z[k * self.dim..(k + 1) * self.dim]
    }
}

/// Euler-Maruyama trajectories of the decoupled system over an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredTrajectories {
    grid: TimeGrid,
    pub paths: Vec<FilteredPath>,
}

impl FilteredTrajectories {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Ensemble mean of one backward component at node `k`.
    pub fn mean_cap_y(&self, component: usize, k: usize) -> f64 {
        let sum: f64 = self.paths.iter().map(|p| p.cap_y_at(k)[component]).sum();
        sum / self.paths.len() as f64
    }
}

/// Simulates one path given its forward-noise increments.
pub fn simulate_one(stepper: &DecoupledStepper, dw: &[f64]) -> FilteredPath {
    let n = stepper.dim();
    let steps = stepper.grid().steps();
    debug_assert_eq!(dw.len(), steps);
    let mut x = Vec::with_capacity(n * (steps + 1));
    let mut cap_y = Vec::with_capacity(n * (steps + 1));
    let mut cap_z = Vec::with_capacity(n * (steps + 1));
    let mut w_nodes = Vec::with_capacity(steps + 1);

    let mut cur = stepper.initial_x().clone();
    let mut w = 0.0;
    for k in 0..=steps {
        w_nodes.push(w);
        x.extend_from_slice(&cur);
        cap_y.extend_from_slice(&stepper.cap_y(k, &cur, w));
        cap_z.extend_from_slice(&stepper.cap_z(k, &cur, w));
        if k < steps {
            cur = stepper.x_step(k, &cur, w, dw[k]);
            w += dw[k];
        }
    }
    FilteredPath { w: w_nodes, x, cap_y, cap_z, dim: n }
}

/// Simulates the whole ensemble. The per-path work is independent; results
/// depend only on each path's increments, never on evaluation order.
pub fn simulate_filtered(stepper: &DecoupledStepper, paths: &PathEnsemble) -> Result<FilteredTrajectories> {
    if paths.grid() != stepper.grid() {
        return Err(Error::InvalidArgument {
            arg: "paths",
            reason: alloc::string::String::from("ensemble grid differs from the decoupling grid"),
        });
    }
    let out = (0..paths.count()).map(|j| simulate_one(stepper, paths.dw(j))).collect();
    Ok(FilteredTrajectories { grid: stepper.grid().clone(), paths: out })
}

/// Discrete residual statistics of the backward dynamics under the ansatz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats {
    /// Largest single-component one-step residual.
    pub max_abs: f64,
    /// Root-mean-square of single-step residual components — decays at order
    /// 3/2 in the step size (the surviving term is a product of one `dt` and
    /// one `dW` factor).
    pub rms_step: f64,
    /// Root-mean-square over paths of the time-accumulated residual
    /// `sqrt(sum_k |r_k|^2)` — the per-path discretization error over the
    /// whole horizon; decays at first order in the step size.
    pub l2_time: f64,
}

/// Simulates the forward states and measures how well the reconstructed
/// backward process satisfies its one-step dynamics:
/// `r_k = Y^_{k+1} - Y^_k - drift(t_k) dt - Z^_k dW_k` per path, step, and
/// component.
pub fn decoupling_residual(stepper: &DecoupledStepper, paths: &PathEnsemble) -> Result<ResidualStats> {
    if paths.grid() != stepper.grid() {
        return Err(Error::InvalidArgument {
            arg: "paths",
            reason: alloc::string::String::from("ensemble grid differs from the decoupling grid"),
        });
    }
    let steps = stepper.grid().steps();
    let dt = stepper.grid().delta();
    let mut max_abs = 0.0_f64;
    let mut sum_sq = 0.0_f64;
    let mut count = 0usize;
    let mut path_l2_sum = 0.0_f64;

    for j in 0..paths.count() {
        let dw = paths.dw(j);
        let mut x = stepper.initial_x().clone();
        let mut w = 0.0;
        let mut path_sq = 0.0;
        for k in 0..steps {
            let y_k = stepper.cap_y(k, &x, w);
            let z_k = stepper.cap_z(k, &x, w);
            let drift = stepper.backward_drift(k, &x, &y_k, &z_k);
            let x_next = stepper.x_step(k, &x, w, dw[k]);
            let w_next = w + dw[k];
            let y_next = stepper.cap_y(k + 1, &x_next, w_next);
            for i in 0..y_k.len() {
                let r = y_next[i] - y_k[i] - drift[i] * dt - z_k[i] * dw[k];
                let a = math::abs(r);
                if a > max_abs {
                    max_abs = a;
                }
                sum_sq += r * r;
                path_sq += r * r;
                count += 1;
            }
            x = x_next;
            w = w_next;
        }
        path_l2_sum += path_sq;
    }
    Ok(ResidualStats {
        max_abs,
        rms_step: math::sqrt(sum_sq / count as f64),
        l2_time: math::sqrt(path_l2_sum / paths.count() as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PlayerCost, TerminalCondition};
    use crate::noise::sample_paths;

    fn konst(x: f64) -> CoefficientFn {
        CoefficientFn::Constant(x)
    }

    fn base_spec() -> LqGameSpec {
        let cost = |e7: f64| PlayerCost {
            e1: konst(0.0),
            e2: konst(0.0),
            e3: konst(0.0),
            e4: konst(0.0),
            e5: 0.0,
            e6: 0.0,
            e7: konst(e7),
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
            cost1: cost(1.0),
            cost2: cost(1.0),
            m: 1.0,
            terminal: TerminalCondition { kappa0: 1.0, kappa1: 0.0 },
            info: InfoStructure::WFiltration,
        }
    }

    fn zero_system_keeps_constant_offsets() -> (LinearFbsdeSystem, RiccatiSolution) {
        let spec = base_spec();
        let sys = assemble_filtering_system(&spec).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let ric = solve_decoupling(&sys, &grid, DecouplingLimits::default()).unwrap();
        (sys, ric)
    }

    #[test]
    fn all_zero_coefficients_give_constant_solution() {
        let (_sys, ric) = zero_system_keeps_constant_offsets();
        for k in 0..=8 {
            assert_eq!(ric.p_at(k).max_abs(), 0.0);
            assert_eq!(ric.h1_at(k), &vec![0.0; 3]);
            assert_eq!(ric.h0_at(k), &vec![1.0, 0.0, 0.0]);
        }
        // x0 = K (1, 0, 0) with M = 1 and zero boundary weights: (1, 0, 0).
        assert_eq!(ric.x0(), &vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_block_structure_matches_direct_substitution() {
        let spec = base_spec();
        let sys = assemble_filtering_system(&spec).unwrap();
        let t = 0.37;
        assert_eq!(sys.forward_drift_x.eval(t).max_abs(), 0.0);
        assert_eq!(sys.backward_drift_x.eval(t).max_abs(), 0.0);
        assert_eq!(sys.forward_diff_z.eval(t).max_abs(), 0.0);
        let k = &sys.initial_coupling;
        assert_eq!(k.get(0, 0), 1.0);
        assert_eq!(k.get(1, 1), -1.0);
        assert_eq!(k.get(2, 2), -1.0);
        assert_eq!(k.get(1, 0), 0.0);
    }

    #[test]
    fn full_information_is_rejected() {
        let mut spec = base_spec();
        spec.info = InfoStructure::Full;
        assert!(matches!(
            assemble_filtering_system(&spec),
            Err(Error::UnsupportedConfiguration(_))
        ));
    }

    #[test]
    fn scalar_riccati_matches_closed_form() {
        // n = 1: P' = -P^2 with P(1) = 0.5 has P(t) = 1/(1 + t).
        let mut sys = scalar_system();
        sys.forward_drift_y.set_const(0, 0, 1.0);
        sys.terminal_gain.set(0, 0, 0.5);
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let ric = solve_decoupling(&sys, &grid, DecouplingLimits::default()).unwrap();
        for k in 0..=64 {
            let t = grid.node(k);
            let exact = 1.0 / (1.0 + t);
            assert!(
                (ric.p_at(k).get(0, 0) - exact).abs() < 1e-8,
                "node {k}: {} vs {exact}",
                ric.p_at(k).get(0, 0)
            );
        }
        assert!((ric.p_at(0).get(0, 0) - 1.0).abs() < 1e-8);
    }

    fn scalar_system() -> LinearFbsdeSystem {
        LinearFbsdeSystem {
            dim: 1,
            forward_drift_x: TimeMat::zeros(1),
            forward_drift_y: TimeMat::zeros(1),
            forward_drift_z: TimeMat::zeros(1),
            forward_affine: TimeVec::zeros(1),
            forward_diff_x: TimeMat::zeros(1),
            forward_diff_y: TimeMat::zeros(1),
            forward_diff_z: TimeMat::zeros(1),
            forward_diff_affine: TimeVec::zeros(1),
            backward_drift_x: TimeMat::zeros(1),
            backward_drift_y: TimeMat::zeros(1),
            backward_drift_z: TimeMat::zeros(1),
            backward_affine: TimeVec::zeros(1),
            terminal_gain: Mat::zeros(1),
            kappa0: 0.0,
            kappa1: 0.0,
            initial_coupling: Mat::zeros(1),
        }
    }

    #[test]
    fn exponential_offset_reaches_euler_number() {
        // a1 = 1, terminal offset 1: h0 solves h0' = -h0 backward from 1,
        // giving h0(0) = e; with unit coupling the forward state starts there.
        let mut spec = base_spec();
        spec.a1 = konst(1.0);
        let sys = assemble_filtering_system(&spec).unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let ric = solve_decoupling(&sys, &grid, DecouplingLimits::default()).unwrap();
        let e = core::f64::consts::E;
        assert!((ric.h0_at(0)[0] - e).abs() < 1e-8, "{}", ric.h0_at(0)[0]);
        assert!((ric.x0()[0] - e).abs() < 1e-8);
        // Y~(0) = P(0) x0 + h0(0) with P = 0.
        let stepper = DecoupledStepper::new(&sys, &ric, DecouplingLimits::default()).unwrap();
        let y0 = stepper.cap_y(0, ric.x0(), 0.0);
        assert!((y0[0] - e).abs() < 1e-8);
    }

    #[test]
    fn riccati_blowup_is_reported() {
        let mut sys = scalar_system();
        // P' = constant 1e9 integrates backward to -1e9 * (1 - t).
        sys.backward_drift_x.set_const(0, 0, 1e9);
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let err = solve_decoupling(&sys, &grid, DecouplingLimits::default()).unwrap_err();
        assert!(matches!(err, Error::RiccatiBlowup { .. }), "{err:?}");
    }

    #[test]
    fn decoupling_breakdown_is_reported() {
        let mut sys = scalar_system();
        // (1 - P GxZ) = 1 - 0.5*2 = 0 at the terminal time.
        sys.forward_diff_z.set_const(0, 0, 2.0);
        sys.terminal_gain.set(0, 0, 0.5);
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let err = solve_decoupling(&sys, &grid, DecouplingLimits::default()).unwrap_err();
        assert!(matches!(err, Error::DecouplingBreakdown { .. }), "{err:?}");
    }

    #[test]
    fn lambda_stays_identity_without_z_feedback() {
        // GxZ = 0 means the fixed-point matrix is exactly I at all times.
        let mut spec = base_spec();
        spec.cost1.e4 = konst(0.0);
        spec.cost2.e4 = konst(0.0);
        spec.a1 = konst(0.5);
        spec.c1 = konst(-0.3);
        let sys = assemble_filtering_system(&spec).unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let ric = solve_decoupling(&sys, &grid, DecouplingLimits::default()).unwrap();
        assert!((ric.max_lambda_cond - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_solution_has_zero_residual() {
        let (sys, ric) = zero_system_keeps_constant_offsets();
        let stepper = DecoupledStepper::new(&sys, &ric, DecouplingLimits::default()).unwrap();
        let paths = sample_paths(ric.grid(), 64, 11).unwrap();
        let stats = decoupling_residual(&stepper, &paths).unwrap();
        assert_eq!(stats.max_abs, 0.0);
        assert_eq!(stats.rms_step, 0.0);
        assert_eq!(stats.l2_time, 0.0);
        let traj = simulate_filtered(&stepper, &paths).unwrap();
        for p in &traj.paths {
            assert_eq!(p.x_at(8), &[1.0, 0.0, 0.0]);
            assert_eq!(p.cap_y_at(3), &[1.0, 0.0, 0.0]);
            assert_eq!(p.cap_z_at(5), &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn node_policy_matches_closed_form_and_corrupts_cleanly() {
        let mut spec = base_spec();
        spec.a3 = konst(4.0);
        spec.a4 = konst(1.0);
        spec.cost1.e7 = konst(2.0);
        let policy = EquilibriumPolicy::from_spec(&spec);
        assert_eq!(policy.gain(Player::One, 0.3), -2.0);
        let c = policy.controls(0.3, 3.0, 0.5);
        assert_eq!(c.v1, -6.0);
        assert_eq!(c.v2, -0.5);

        let grid = TimeGrid::new(1.0, 4).unwrap();
        let table = NodePolicy::tabulate(&policy, &grid);
        let c2 = table.controls(2, 3.0, 0.5);
        assert_eq!(c2.v1, -6.0);
        assert_eq!(c2.v2, -0.5);
        let shifted = table.with_offset_shift(Player::One, 0.2);
        let c3 = shifted.controls(2, 3.0, 0.5);
        assert!((c3.v1 - (-5.8)).abs() < 1e-15);
        assert_eq!(c3.v2, -0.5);
    }

    #[test]
    fn simulation_is_deterministic_for_fixed_seed() {
        let mut spec = base_spec();
        spec.a1 = konst(0.3);
        spec.c1 = konst(-0.2);
        spec.d0 = konst(0.3);
        spec.terminal = TerminalCondition { kappa0: 0.5, kappa1: 0.25 };
        let sys = assemble_filtering_system(&spec).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let ric = solve_decoupling(&sys, &grid, DecouplingLimits::default()).unwrap();
        let stepper = DecoupledStepper::new(&sys, &ric, DecouplingLimits::default()).unwrap();
        let paths = sample_paths(&grid, 32, 9).unwrap();
        let a = simulate_filtered(&stepper, &paths).unwrap();
        let b = simulate_filtered(&stepper, &paths).unwrap();
        assert_eq!(a, b);
    }
}
