//! Principal branch `W0` of the Lambert-W function on `[-1/e, inf)`.
//!
//! Initial guess by region (branch-point series near `-1/e`, `ln(1+x)` in the
//! middle, `L1 - L2 + L2/L1` asymptote for large `x`), then Halley refinement.

use crate::error::{Error, Result};
use crate::Scalar;

const MAX_ITER: usize = 100;
const BRANCH_SLACK: f64 = 1e-15;

/// Principal-branch Lambert W: the `w >= -1` with `w * e^w = x`.
pub fn lambert_w0<T: Scalar>(x: T) -> Result<T> {
    let one = T::one();
    let inv_e = one / T::E();
    let branch = -inv_e;
    if x.is_nan() || x < branch - T::lit(BRANCH_SLACK) {
        return Err(Error::domain(format!("lambert_w0 requires x >= -1/e, got {x}")));
    }
    if x.is_infinite() {
        return Ok(x);
    }
    if x <= branch {
        return Ok(-one);
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x == T::E() {
        return Ok(one);
    }

    let mut w = initial_guess(x);
    let tol = T::lit(1e-15).max(T::epsilon());
    let two = T::lit(2.0);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + one;
        if wp1 == T::zero() {
            break;
        }
        let denom = ew * wp1 - (w + two) * f / (two * wp1);
        if denom == T::zero() || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        w = (w - step).max(-one);
        if step.abs() <= tol * (one + w.abs()) {
            break;
        }
    }
    Ok(w)
}

fn initial_guess<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x < T::lit(-0.32) {
        // W(x) = -1 + p - p^2/3 + 11/72 p^3 - ..., p = sqrt(2(e x + 1)).
        let p = (T::lit(2.0) * (T::E() * x + one)).max(T::zero()).sqrt();
        -one + p - p * p / T::lit(3.0) + T::lit(11.0 / 72.0) * p * p * p
    } else if x <= T::lit(3.0) {
        x.ln_1p() * T::lit(0.75)
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// Case-(c) boundary of the uniform-root family: `c2 = exp(W0(-c1 ln c1))`,
/// the root of `c1 ln c1 + c2 ln c2 = 0` with `c2 > 1`.
pub fn umslr_case_c_c2<T: Scalar>(c1: T) -> Result<T> {
    if !(c1 > T::zero() && c1 < T::one()) {
        return Err(Error::domain(format!("case (c) boundary needs 0 < c1 < 1, got {c1}")));
    }
    Ok(lambert_w0(-c1 * c1.ln())?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    /// Bisection on `w e^w = x` over `[-1, max(1, x)]`; independent of Halley.
    fn bisect_w(x: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0f64, x.max(1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() > x {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn bisect_c2(c1: f64) -> f64 {
        let target = -c1 * c1.ln();
        let (mut lo, mut hi) = (1.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.ln() > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn tabulated_points_exact() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_eq!(lambert_w0(E).unwrap(), 1.0);
        assert_eq!(lambert_w0(-1.0 / E).unwrap(), -1.0);
    }

    #[test]
    fn omega_constant() {
        let w = lambert_w0(1.0).unwrap();
        assert!((w - bisect_w(1.0)).abs() < 1e-12);
        assert!((w - 0.5671432904).abs() < 1e-10);
    }

    #[test]
    fn agrees_with_bisection() {
        for &x in &[-0.36, -0.3, -0.1, 0.05, 0.5, 2.0, 7.5, 100.0, 1e4, 1e6] {
            let w = lambert_w0(x).unwrap();
            assert!((w - bisect_w(x)).abs() < 1e-10 * (1.0 + w.abs()), "x={x}");
        }
    }

    #[test]
    fn domain_error_below_branch() {
        assert!(lambert_w0(-0.5).is_err());
        assert!(lambert_w0(f64::NAN).is_err());
        assert_eq!(lambert_w0(-1.0 / E - 5e-16).unwrap(), -1.0);
    }

    #[test]
    fn branch_point_accuracy() {
        let w = lambert_w0(-1.0 / E + 1e-14).unwrap();
        assert!((w + 1.0).abs() < 1e-6);
    }

    #[test]
    fn case_c_boundary() {
        let c2 = umslr_case_c_c2(0.5).unwrap();
        assert!((c2 - bisect_c2(0.5)).abs() < 1e-10);
        assert!((c2 - 1.3043).abs() < 1e-4);
        // c1 = 1/e gives c2 ln c2 = 1/e, i.e. c2 = exp(W(1/e)).
        let c1 = 1.0 / E;
        let c2 = umslr_case_c_c2(c1).unwrap();
        assert!((c2 * c2.ln() + c1 * c1.ln()).abs() <= 1e-10);
        assert!((c2 - bisect_c2(c1)).abs() < 1e-10);
        assert!((c2 - 1.0f64 / E).abs() > 0.5);
        for bad in [0.0, 1.0, -0.2, 1.5] {
            assert!(umslr_case_c_c2(bad).is_err());
        }
    }

    #[test]
    fn single_precision() {
        let w = lambert_w0(1.0f32).unwrap();
        assert!((w - 0.567_143_3).abs() < 1e-6);
        let x = 50.0f32;
        let w = lambert_w0(x).unwrap();
        assert!((w * w.exp() - x).abs() < 1e-4 * x);
    }
}
