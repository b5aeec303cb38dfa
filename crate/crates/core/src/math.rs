//! Thin wrappers over `libm` so the crate uses one math library everywhere,
//! independent of whether `std` happens to be linked.
//!
//! Formula-heavy modules import these as free functions (`sqrt(x)`, not
//! `x.sqrt()`), which keeps the `no_std` build and the test build on the exact
//! same code path.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Used by tests as the inverse check for [`ln`]; `cfg(test)` keeps the
/// release surface to exactly the functions the solvers call.
#[cfg(test)]
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Stable two-pass maximum of |x| over a slice; returns 0 for empty input.
pub fn max_abs(xs: &[f64]) -> f64 {
    let mut m = 0.0;
    for &x in xs {
        let a = abs(x);
        if a > m {
            m = a;
        }
    }
    m
}
