//! Small dense linear algebra for the decoupling system.
//!
//! Dimensions here are tiny (1 for scalar test systems, 3 for the filtered
//! state/adjoint stack), so a straightforward row-major `Vec<f64>` matrix with
//! Gauss-Jordan inversion is both adequate and easy to audit. Condition
//! numbers are estimated in the 1-norm as `||A||_1 * ||A^-1||_1`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::abs;

/// Row-major square matrix of runtime dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    n: usize,
    a: Vec<f64>,
}

/// Column vector of runtime dimension `n`.
pub type VecN = Vec<f64>;

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from a row-major slice of length `n * n`.
    pub fn from_rows(n: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), n * n, "row-major data must have n*n entries");
        Mat { n, a: rows.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    pub fn entries(&self) -> &[f64] {
        &self.a
    }

    pub fn add(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.n, other.n);
        let a = self.a.iter().zip(&other.a).map(|(x, y)| x + y).collect();
        Mat { n: self.n, a }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.n, other.n);
        let a = self.a.iter().zip(&other.a).map(|(x, y)| x - y).collect();
        Mat { n: self.n, a }
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { n: self.n, a: self.a.iter().map(|x| x * s).collect() }
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += aik * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> VecN {
        debug_assert_eq!(self.n, v.len());
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.get(i, j) * v[j];
            }
            out[i] = s;
        }
        out
    }

    /// Largest absolute entry; used by the Riccati trust-region check.
    pub fn max_abs(&self) -> f64 {
        crate::math::max_abs(&self.a)
    }

    /// 1-norm (maximum absolute column sum).
    pub fn norm_1(&self) -> f64 {
        let n = self.n;
        let mut best = 0.0;
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += abs(self.get(i, j));
            }
            if s > best {
                best = s;
            }
        }
        best
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    ///
    /// Returns `None` when a pivot degenerates to zero (exactly singular up to
    /// rounding); near-singular but formally invertible inputs are the
    /// caller's business via [`Mat::cond_1`].
    pub fn inverse(&self) -> Option<Mat> {
        let n = self.n;
        let mut work = self.a.clone();
        let mut inv = Mat::identity(n);
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = abs(work[col * n + col]);
            for r in (col + 1)..n {
                let v = abs(work[r * n + col]);
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val == 0.0 {
                return None;
            }
            if pivot_row != col {
                for j in 0..n {
                    work.swap(col * n + j, pivot_row * n + j);
                    inv.a.swap(col * n + j, pivot_row * n + j);
                }
            }
            let p = work[col * n + col];
            for j in 0..n {
                work[col * n + j] /= p;
                inv.a[col * n + j] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = work[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    work[r * n + j] -= f * work[col * n + j];
                    inv.a[r * n + j] -= f * inv.a[col * n + j];
                }
            }
        }
        Some(inv)
    }

    /// 1-norm condition estimate, `infinity` when singular.
    pub fn cond_1(&self) -> f64 {
        match self.inverse() {
            Some(inv) => self.norm_1() * inv.norm_1(),
            None => f64::INFINITY,
        }
    }

    /// Solves `A x = b`, reporting the condition estimate alongside.
    pub fn solve(&self, b: &[f64]) -> Option<(VecN, f64)> {
        let inv = self.inverse()?;
        let cond = self.norm_1() * inv.norm_1();
        Some((inv.mul_vec(b), cond))
    }
}

/// `x + alpha * y` elementwise.
pub fn axpy(x: &[f64], alpha: f64, y: &[f64]) -> VecN {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a + alpha * b).collect()
}

/// Elementwise sum.
pub fn vadd(x: &[f64], y: &[f64]) -> VecN {
    axpy(x, 1.0, y)
}

/// Scalar multiple.
pub fn vscale(x: &[f64], s: f64) -> VecN {
    x.iter().map(|a| a * s).collect()
}
