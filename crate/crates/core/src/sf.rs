//! Stochasticity factors: the random multiplier `u_k` applied to the step size.
//!
//! Two families are supported. `Constant` is the deterministic baseline
//! (`u_k = value`). `UniformRoot` draws `u_k` uniformly on
//! `[c1^(1/(k+1)), c2^(1/(k+1))]`; both ends of the support drift toward 1 as
//! `k` grows, so the factor anneals to the plain step size.
//!
//! Moments are exact closed forms, not estimates.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::unit_uniform;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SfSpec<T> {
    Constant { value: T },
    UniformRoot { c1: T, c2: T },
}

/// Direction of a finite series under exact pairwise comparison of neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
    NonMonotone,
}

impl Monotonicity {
    /// Classifies `series` with zero tie tolerance.
    pub fn of<T: PartialOrd>(series: &[T]) -> Self {
        let mut up = false;
        let mut down = false;
        for w in series.windows(2) {
            if w[1] > w[0] {
                up = true;
            } else if w[1] < w[0] {
                down = true;
            }
        }
        match (up, down) {
            (true, true) => Monotonicity::NonMonotone,
            (true, false) => Monotonicity::Increasing,
            (false, true) => Monotonicity::Decreasing,
            (false, false) => Monotonicity::Constant,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Monotonicity::Increasing => "increasing",
            Monotonicity::Decreasing => "decreasing",
            Monotonicity::Constant => "constant",
            Monotonicity::NonMonotone => "non-monotone",
        }
    }
}

impl std::fmt::Display for Monotonicity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `c^(1/(k+1))`, exact at `k = 0`.
fn root<T: Scalar>(c: T, k: usize) -> T {
    if k == 0 {
        c
    } else {
        c.powf(T::one() / T::from_usize_lossy(k + 1))
    }
}

impl<T: Scalar> SfSpec<T> {
    pub fn constant(value: T) -> Result<Self> {
        let s = SfSpec::Constant { value };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform_root(c1: T, c2: T) -> Result<Self> {
        let s = SfSpec::UniformRoot { c1, c2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SfSpec::Constant { value } => {
                if !(value.is_finite() && value > T::zero()) {
                    return Err(Error::validation(format!(
                        "sf.value must be a positive finite real, got {value}"
                    )));
                }
            }
            SfSpec::UniformRoot { c1, c2 } => {
                if !(c1.is_finite() && c1 > T::zero()) {
                    return Err(Error::validation(format!(
                        "sf.c1 must be a positive finite real, got {c1}"
                    )));
                }
                if !(c2.is_finite() && c2 > c1) {
                    return Err(Error::validation(format!(
                        "sf.c2 must exceed sf.c1 (0 < c1 < c2), got c1={c1}, c2={c2}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SfSpec::Constant { .. })
    }

    /// Closed support `[lo, hi]` of `u_k`.
    pub fn support_bounds(&self, k: usize) -> (T, T) {
        match *self {
            SfSpec::Constant { value } => (value, value),
            SfSpec::UniformRoot { c1, c2 } => (root(c1, k), root(c2, k)),
        }
    }

    /// Draws `u_k` by inverse transform, one 64-bit word per uniform draw.
    /// `Constant` consumes nothing from `rng`.
    pub fn sample<R: RngCore + ?Sized>(&self, k: usize, rng: &mut R) -> T {
        match *self {
            SfSpec::Constant { value } => value,
            SfSpec::UniformRoot { .. } => {
                let (lo, hi) = self.support_bounds(k);
                let u: T = unit_uniform(rng);
                (lo + (hi - lo) * u).max(lo).min(hi)
            }
        }
    }

    pub fn mean(&self, k: usize) -> T {
        let (lo, hi) = self.support_bounds(k);
        match self {
            SfSpec::Constant { value } => *value,
            SfSpec::UniformRoot { .. } => (lo + hi) / T::lit(2.0),
        }
    }

    pub fn variance(&self, k: usize) -> T {
        match self {
            SfSpec::Constant { .. } => T::zero(),
            SfSpec::UniformRoot { .. } => {
                let (lo, hi) = self.support_bounds(k);
                let w = hi - lo;
                w * w / T::lit(12.0)
            }
        }
    }

    /// `sup_k` of the support upper bound over an unbounded horizon.
    ///
    /// For `c2 < 1` this is the limit 1, which no finite `k` attains.
    pub fn sup_support_limit(&self) -> T {
        match *self {
            SfSpec::Constant { value } => value,
            SfSpec::UniformRoot { c2, .. } => c2.max(T::one()),
        }
    }

    /// Closed-form moment series for `k = 0..=k_max`.
    pub fn moment_profile(&self, k_max: usize) -> Result<MomentProfile<T>> {
        self.validate()?;
        if k_max == 0 {
            return Err(Error::validation(
                "moment profile needs k_max >= 1 (direction undefined on one point)",
            ));
        }
        let mean: Vec<T> = (0..=k_max).map(|k| self.mean(k)).collect();
        let variance: Vec<T> = (0..=k_max).map(|k| self.variance(k)).collect();
        let mu1 = mean.iter().copied().fold(T::infinity(), T::min);
        let sup_support = (0..=k_max)
            .map(|k| self.support_bounds(k).1)
            .fold(T::neg_infinity(), T::max);
        Ok(MomentProfile {
            k_max,
            mean_direction: Monotonicity::of(&mean),
            var_direction: Monotonicity::of(&variance),
            mean,
            variance,
            mu1,
            sup_support,
            sup_support_limit: self.sup_support_limit(),
        })
    }
}

/// Exact mean/variance series of a stochasticity factor over a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile<T> {
    pub k_max: usize,
    /// `E[u_k]` for `k = 0..=k_max`.
    pub mean: Vec<T>,
    /// `Var[u_k]` for `k = 0..=k_max`.
    pub variance: Vec<T>,
    /// Smallest mean over the horizon.
    pub mu1: T,
    /// Largest support upper bound over the horizon.
    pub sup_support: T,
    /// Largest support upper bound over all `k`, including the limit.
    pub sup_support_limit: T,
    pub mean_direction: Monotonicity,
    pub var_direction: Monotonicity,
}

impl<T: Scalar> MomentProfile<T> {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn ur(c1: f64, c2: f64) -> SfSpec<f64> {
        SfSpec::uniform_root(c1, c2).unwrap()
    }

    #[test]
    fn constant_sample_is_exact() {
        let s = SfSpec::constant(1.0).unwrap();
        let mut r = rng::sf_stream(0);
        assert_eq!(s.sample(17, &mut r), 1.0);
        assert_eq!(s.mean(123), 1.0);
        assert_eq!(s.variance(5), 0.0);
        assert_eq!(SfSpec::constant(0.7).unwrap().support_bounds(9), (0.7, 0.7));
    }

    #[test]
    fn uniform_root_first_iterate() {
        let s = ur(0.3, 0.8);
        assert_eq!(s.support_bounds(0), (0.3, 0.8));
        assert!((s.mean(0) - 0.55).abs() < 1e-15);
        assert!((s.variance(0) - 0.25 / 12.0).abs() < 1e-15);
        let mut r = rng::sf_stream(42);
        let u = s.sample(0, &mut r);
        assert!((0.3..=0.8).contains(&u));
        let mut r2 = rng::sf_stream(42);
        assert_eq!(u, s.sample(0, &mut r2));
    }

    #[test]
    fn square_root_support() {
        assert_eq!(ur(0.25, 1.0).support_bounds(1), (0.5, 1.0));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(SfSpec::uniform_root(0.8, 0.3).is_err());
        assert!(SfSpec::uniform_root(0.5, 0.5).is_err());
        assert!(SfSpec::uniform_root(0.0, 0.5).is_err());
        assert!(SfSpec::constant(0.0).is_err());
        assert!(SfSpec::constant(f64::NAN).is_err());
    }

    #[test]
    fn monte_carlo_matches_closed_form_at_k1() {
        // 10^6 draws; the estimator's standard errors are computed from the sample.
        let s = ur(0.3, 0.8);
        let n = 1_000_000usize;
        let mut r = rng::sf_stream(2024);
        let (mut m1, mut m2, mut m4) = (0.0, 0.0, 0.0);
        let draws: Vec<f64> = (0..n).map(|_| s.sample(1, &mut r)).collect();
        for &u in &draws {
            m1 += u;
        }
        m1 /= n as f64;
        for &u in &draws {
            let d = u - m1;
            m2 += d * d;
            m4 += d * d * d * d;
        }
        m2 /= (n - 1) as f64;
        m4 /= n as f64;
        let se_mean = (m2 / n as f64).sqrt();
        let se_var = ((m4 - m2 * m2) / n as f64).sqrt();
        assert!((m1 - s.mean(1)).abs() < 3.0 * se_mean, "{m1} vs {}", s.mean(1));
        assert!((m2 - s.variance(1)).abs() < 3.0 * se_var, "{m2} vs {}", s.variance(1));
        // Values quoted for this configuration, agreement to 1e-3.
        assert!((s.mean(1) - 0.721071).abs() < 1e-3);
        assert!((s.variance(1) - 0.010019).abs() < 1e-3);
    }

    #[test]
    fn profile_directions() {
        let p = ur(0.3, 0.8).moment_profile(10_000).unwrap();
        assert_eq!(p.mean_direction, Monotonicity::Increasing);
        assert_eq!(p.var_direction, Monotonicity::Decreasing);
        assert_eq!(p.mu1, 0.55);
        assert_eq!(p.sup_support, ur(0.3, 0.8).support_bounds(10_000).1);
        assert_eq!(p.sup_support_limit, 1.0);

        let c = SfSpec::constant(1.0).unwrap().moment_profile(100).unwrap();
        assert_eq!(c.mean_direction, Monotonicity::Constant);
        assert_eq!(c.var_direction, Monotonicity::Constant);
        assert_eq!((c.mu1, c.sup_support), (1.0, 1.0));

        // c^(1/(k+1)) falls toward 1 when c > 1.
        let a = ur(2.0, 4.0).moment_profile(10_000).unwrap();
        assert_eq!(a.mean_direction, Monotonicity::Decreasing);
        assert_eq!(a.sup_support, 4.0);
    }

    #[test]
    fn sub_unit_variance_can_rise_first() {
        // sqrt(0.05) + sqrt(0.1) < 1: the support widens from [0.05, 0.1] to
        // [0.224, 0.316] before it starts shrinking.
        let p = ur(0.05, 0.1).moment_profile(1_000).unwrap();
        assert!(p.variance[1] > p.variance[0]);
        assert_eq!(p.var_direction, Monotonicity::NonMonotone);
        assert_eq!(p.mean_direction, Monotonicity::Increasing);
        let q = ur(0.3, 0.8).moment_profile(1_000).unwrap();
        assert_eq!(q.var_direction, Monotonicity::Decreasing);
    }

    #[test]
    fn profile_rejects_single_point() {
        assert!(ur(0.3, 0.8).moment_profile(0).is_err());
    }

    #[test]
    fn large_k_tends_to_one() {
        for (c1, c2) in [(0.3, 0.8), (0.01, 0.5), (2.0, 4.0), (0.5, 3.0)] {
            let s = ur(c1, c2);
            let k = 1_000_000;
            assert!((s.support_bounds(k).1 - 1.0).abs() < 1e-3);
            assert!((s.mean(k) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let s = SfSpec::<f32>::uniform_root(0.3, 0.8).unwrap();
        let p = s.moment_profile(1_000).unwrap();
        assert_eq!(p.mean_direction, Monotonicity::Increasing);
        let mut r = rng::sf_stream(1);
        for k in 0..1000 {
            let (lo, hi) = s.support_bounds(k);
            let u = s.sample(k, &mut r);
            assert!(lo <= u && u <= hi);
        }
    }

    proptest! {
        #[test]
        fn sample_within_support(c1 in 1e-3f64..5.0, gap in 1e-3f64..5.0, k in 0usize..100_000, seed: u64) {
            let s = ur(c1, c1 + gap);
            let (lo, hi) = s.support_bounds(k);
            prop_assert!(0.0 < lo && lo < hi);
            let mut r = rng::sf_stream(seed);
            for _ in 0..16 {
                let u = s.sample(k, &mut r);
                prop_assert!(lo <= u && u <= hi);
            }
        }

        #[test]
        fn moments_match_support(c1 in 1e-3f64..5.0, gap in 1e-3f64..5.0, k in 0usize..1_000_000) {
            let s = ur(c1, c1 + gap);
            let (lo, hi) = s.support_bounds(k);
            let mid = (lo + hi) / 2.0;
            let var = (hi - lo).powi(2) / 12.0;
            prop_assert!((s.mean(k) - mid).abs() <= 1e-15 * mid.abs());
            prop_assert!((s.variance(k) - var).abs() <= 1e-15 * var.abs());
        }

        #[test]
        fn sub_unit_moments_are_ordered(c1 in 1e-3f64..0.99, frac in 0.01f64..0.99, k in 0usize..200_000) {
            let c2 = c1 + (1.0 - c1) * frac;
            prop_assume!(c2 < 1.0 && c2 > c1);
            let s = ur(c1, c2);
            prop_assert!(s.mean(k) < 1.0);
            prop_assert!(s.variance(k) < s.mean(k));
            prop_assert!(s.mean(k + 1) > s.mean(k));
        }

        // The width c2^s - c1^s rises in s up to s* = ln(ln c1 / ln c2) / ln(c2 / c1)
        // and falls after it. Along s = 1/(k+1) the variance therefore rises
        // while both points sit above s* and falls once they are below it; it
        // rises at all exactly when it rises at k = 0, i.e. sqrt(c1) + sqrt(c2) < 1.
        #[test]
        fn sub_unit_variance_is_unimodal(c1 in 1e-6f64..0.99, frac in 1e-3f64..0.99, k in 0usize..64) {
            let c2 = c1 + (1.0 - c1) * frac;
            prop_assume!(c2 < 1.0 && c2 > c1);
            let s = ur(c1, c2);
            let s_star = (c1.ln() / c2.ln()).ln() / (c2 / c1).ln();
            let (a, b) = (1.0 / (k as f64 + 1.0), 1.0 / (k as f64 + 2.0));
            if a < s_star * (1.0 - 1e-9) {
                prop_assert!(s.variance(k + 1) < s.variance(k));
            }
            if b > s_star * (1.0 + 1e-9) {
                prop_assert!(s.variance(k + 1) > s.variance(k));
            }
            let margin = c1.sqrt() + c2.sqrt() - 1.0;
            if margin > 1e-9 {
                prop_assert!(s.variance(k + 1) < s.variance(k));
            } else if margin < -1e-9 {
                prop_assert!(s.variance(1) > s.variance(0));
            }
        }
    }
}
