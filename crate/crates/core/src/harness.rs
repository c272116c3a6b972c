//! Rate envelopes, the weighted `g_k` recurrence, and an empirical trend test
//! comparing measured min-gradient norms against an envelope.

use std::fmt;

use crate::error::{Error, Result};
use crate::optimizer::{StepSizeSchedule, Trajectory};
use crate::sf::SfSpec;
use crate::validator::TheoremCase;
use crate::Scalar;

/// Slope threshold (log-log) separating a decaying ratio from a flat one.
pub const SLOPE_THRESHOLD: f64 = 0.05;

/// `g_0 = grads[0]`, `g_{k+1} = (1 - w_k) g_k + w_k grads[k]` with
/// `w_k = 2 eta_k / sum_{t<=k} eta_t`.
///
/// `w_0 = 2`, which forces `g_1 = grads[0]`. For `k >= 1` the schedules here give
/// `w_k <= 1`, so each step is a convex combination; the result is kept within
/// its two endpoints to absorb rounding. Returns `grads.len() + 1` values.
pub fn gk_sequence<T: Scalar>(grads: &[T], schedule: &StepSizeSchedule<T>) -> Result<Vec<T>> {
    if grads.is_empty() {
        return Err(Error::validation("g_k recurrence needs at least one gradient norm"));
    }
    if let Some(i) = grads.iter().position(|g| !(g.is_finite() && *g >= T::zero())) {
        return Err(Error::validation(format!(
            "squared gradient norm at k={i} is negative or non-finite: {}",
            grads[i]
        )));
    }
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(grads.len() + 1);
    let mut g = grads[0];
    let mut sum = T::zero();
    out.push(g);
    for (k, &x) in grads.iter().enumerate() {
        let eta = schedule.step_size(k);
        sum = sum + eta;
        let w = two * eta / sum;
        let mut next = g + w * (x - g);
        if w >= T::zero() && w <= T::one() {
            next = next.max(g.min(x)).min(g.max(x));
        }
        g = next;
        out.push(g);
    }
    Ok(out)
}

/// Fills `traj.g_series` from the per-iterate gradient norms.
pub fn attach_g_series<T: Scalar>(traj: &mut Trajectory<T>, schedule: &StepSizeSchedule<T>) -> Result<()> {
    if traj.iterate_grad_sq.is_empty() {
        return Err(Error::validation(
            "trajectory has no per-iterate gradient norms (track_iterate_grads was off)",
        ));
    }
    traj.g_series = gk_sequence(&traj.iterate_grad_sq, schedule)?;
    Ok(())
}

/// Ingredients of one envelope value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeComponents<T> {
    pub mean: T,
    pub variance: T,
    /// `sum_{t<k} eta_t`.
    pub sum_eta: T,
    /// For case11a, `1 / (E (1 - Var/E) sum eta)`, logged next to the
    /// statement form for comparison.
    pub proof_form: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEnvelope<T> {
    pub case: TheoremCase,
    pub ks: Vec<usize>,
    pub values: Vec<T>,
    pub components: Vec<EnvelopeComponents<T>>,
    /// Whether the caller established the case's preconditions.
    pub certified: bool,
}

fn envelope_value<T: Scalar>(
    case: TheoremCase,
    mean: T,
    variance: T,
    sum_eta: T,
    k: usize,
) -> Result<EnvelopeComponents<T>> {
    let one = T::one();
    let gap = mean - variance;
    let needs_gap = matches!(case, TheoremCase::Case11a | TheoremCase::Case12);
    if needs_gap && gap <= T::zero() {
        return Err(Error::domain(format!(
            "{case} envelope needs E[u_k] - Var[u_k] > 0, got {gap:e} at k={k}"
        )));
    }
    if sum_eta.is_nan() || sum_eta <= T::zero() {
        return Err(Error::domain(format!("sum of step sizes is not positive at k={k}")));
    }
    let proof_form = match case {
        TheoremCase::Case11a => Some(one / (mean * (one - variance / mean) * sum_eta)),
        _ => None,
    };
    Ok(EnvelopeComponents {
        mean,
        variance,
        sum_eta,
        proof_form,
    })
}

fn value_of<T: Scalar>(case: TheoremCase, c: &EnvelopeComponents<T>) -> T {
    let one = T::one();
    match case {
        TheoremCase::Case11a => one / ((c.mean - c.variance) * c.sum_eta),
        TheoremCase::Case11b => one / (c.mean * c.sum_eta),
        TheoremCase::Case12 => (c.mean - c.variance) / c.sum_eta,
        TheoremCase::DeterministicBaseline => one / c.sum_eta,
    }
}

/// Envelope of `case` at iteration `k >= 1`, using `sum_{t<k} eta_t`.
pub fn envelope<T: Scalar>(case: TheoremCase, sf: &SfSpec<T>, schedule: &StepSizeSchedule<T>, k: usize) -> Result<T> {
    if k == 0 {
        return Err(Error::validation("envelopes are defined for k >= 1"));
    }
    sf.validate()?;
    let sum = (0..k).fold(T::zero(), |s, t| s + schedule.step_size(t));
    let c = envelope_value(case, sf.mean(k), sf.variance(k), sum, k)?;
    Ok(value_of(case, &c))
}

/// Envelope evaluated at ascending `ks`, all `>= 1`.
pub fn envelope_series<T: Scalar>(
    case: TheoremCase,
    sf: &SfSpec<T>,
    schedule: &StepSizeSchedule<T>,
    ks: &[usize],
    certified: bool,
) -> Result<RateEnvelope<T>> {
    sf.validate()?;
    if ks.first() == Some(&0) {
        return Err(Error::validation("envelopes are defined for k >= 1"));
    }
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("envelope points must be strictly ascending"));
    }
    let mut components = Vec::with_capacity(ks.len());
    let mut values = Vec::with_capacity(ks.len());
    let mut sum = T::zero();
    let mut t = 0;
    for &k in ks {
        while t < k {
            sum = sum + schedule.step_size(t);
            t += 1;
        }
        let c = envelope_value(case, sf.mean(k), sf.variance(k), sum, k)?;
        values.push(value_of(case, &c));
        components.push(c);
    }
    Ok(RateEnvelope {
        case,
        ks: ks.to_vec(),
        values,
        components,
        certified,
    })
}

/// Envelope at a trajectory's eval points with `k >= 1`.
pub fn envelope_for_trajectory<T: Scalar>(
    case: TheoremCase,
    sf: &SfSpec<T>,
    schedule: &StepSizeSchedule<T>,
    traj: &Trajectory<T>,
    certified: bool,
) -> Result<RateEnvelope<T>> {
    let ks: Vec<usize> = traj.eval_k.iter().copied().filter(|&k| k >= 1).collect();
    envelope_series(case, sf, schedule, &ks, certified)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    ConsistentWithLittleO,
    Inconclusive,
    Violation,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::ConsistentWithLittleO => "consistent_with_little_o",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Violation => "violation",
        })
    }
}

/// Finite-horizon surrogate for `min grad^2 = o(envelope)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LittleODiagnostic<T> {
    pub ks: Vec<usize>,
    /// `min_grad_sq[k] / envelope[k]`.
    pub ratios: Vec<T>,
    /// Least-squares slope of `ln r_k` on `ln k` over `[k_hi/2, k_hi]`.
    pub window_slope: T,
    pub r_lo: T,
    pub r_hi: T,
    pub verdict: Verdict,
}

/// Trend test on `r_k = min_grad_sq[k] / envelope[k]`.
///
/// `min_grad_sq` is aligned with `envelope.ks`. The verdict is
/// `ConsistentWithLittleO` when the trailing slope is `<= -0.05` and
/// `r_{k_hi} < r_{k_lo}`, `Violation` when the slope is `>= 0.05` and
/// `r_{k_hi} > 2 r_{k_lo}`, and `Inconclusive` otherwise.
pub fn little_o_diagnostic<T: Scalar>(
    min_grad_sq: &[T],
    envelope: &RateEnvelope<T>,
    k_lo: usize,
    k_hi: usize,
) -> Result<LittleODiagnostic<T>> {
    if min_grad_sq.len() != envelope.ks.len() {
        return Err(Error::validation(format!(
            "{} measurements for {} envelope points",
            min_grad_sq.len(),
            envelope.ks.len()
        )));
    }
    if k_lo >= k_hi {
        return Err(Error::validation(format!("need k_lo < k_hi, got {k_lo} >= {k_hi}")));
    }
    let idx = |k: usize| {
        envelope
            .ks
            .binary_search(&k)
            .map_err(|_| Error::validation(format!("k={k} is not an envelope point")))
    };
    let (i_lo, i_hi) = (idx(k_lo)?, idx(k_hi)?);
    let mut ratios = Vec::with_capacity(min_grad_sq.len());
    for ((&m, &e), &k) in min_grad_sq.iter().zip(&envelope.values).zip(&envelope.ks) {
        if e.is_nan() || e <= T::zero() {
            return Err(Error::domain(format!("envelope is not positive at k={k}")));
        }
        if !(m.is_finite() && m >= T::zero()) {
            return Err(Error::validation(format!("invalid min_grad_sq {m} at k={k}")));
        }
        ratios.push(m / e);
    }

    let half = k_hi / 2;
    let pts: Vec<(f64, f64)> = envelope
        .ks
        .iter()
        .zip(&ratios)
        .filter(|(&k, &r)| k >= half.max(1) && k <= k_hi && r > T::zero())
        .map(|(&k, &r)| ((k as f64).ln(), r.as_f64().ln()))
        .collect();
    let r_lo = ratios[i_lo];
    let r_hi = ratios[i_hi];
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    } else if r_hi == T::zero() && r_lo > T::zero() {
        // Exact zero at the end of the window: the ratio collapsed.
        f64::NEG_INFINITY
    } else {
        0.0
    };

    let verdict = if slope <= -SLOPE_THRESHOLD && r_hi < r_lo {
        Verdict::ConsistentWithLittleO
    } else if slope >= SLOPE_THRESHOLD && r_hi > T::lit(2.0) * r_lo {
        Verdict::Violation
    } else {
        Verdict::Inconclusive
    };
    Ok(LittleODiagnostic {
        ks: envelope.ks.clone(),
        ratios,
        window_slope: T::lit(slope),
        r_lo,
        r_hi,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::ScheduleFamily;

    fn sched(f: ScheduleFamily, eta: f64) -> StepSizeSchedule<f64> {
        StepSizeSchedule::new(f, eta).unwrap()
    }

    #[test]
    fn recurrence_examples() {
        let s = sched(ScheduleFamily::InverseK, 1.0);
        assert_eq!(gk_sequence(&[4.0], &s).unwrap(), vec![4.0, 4.0]);
        let g = gk_sequence(&[4.0, 1.0], &s).unwrap();
        // Hand recurrence: w_1 = 2(1/2)/(3/2) = 2/3, g_2 = 4/3 + 2/3.
        assert!((g[2] - 2.0).abs() < 1e-15);
        for f in ScheduleFamily::ALL {
            let g = gk_sequence(&[0.37; 50], &sched(f, 0.3)).unwrap();
            assert!(g.iter().all(|&v| v == 0.37));
        }
        assert!(gk_sequence::<f64>(&[], &s).is_err());
        assert!(gk_sequence(&[1.0, -0.5], &s).is_err());
    }

    #[test]
    fn recurrence_bounded_by_running_min_and_scale_free() {
        let mut r = crate::rng::stream(3, 0);
        use rand::Rng;
        for f in ScheduleFamily::ALL {
            let grads: Vec<f64> = (0..2000).map(|_| r.random::<f64>() * 10.0).collect();
            let s = sched(f, 0.2);
            let g = gk_sequence(&grads, &s).unwrap();
            let mut m = f64::INFINITY;
            for k in 1..g.len() {
                m = m.min(grads[k - 1]);
                assert!(g[k] >= m);
            }
            let g10 = gk_sequence(&grads, &s.scaled(10.0).unwrap()).unwrap();
            for (a, b) in g.iter().zip(&g10) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_factor_reduces_to_baseline() {
        let sf = SfSpec::constant(1.0).unwrap();
        let s = sched(ScheduleFamily::InverseSqrtK, 0.3);
        for k in [1, 2, 17, 500] {
            let base = envelope(TheoremCase::DeterministicBaseline, &sf, &s, k).unwrap();
            let sum: f64 = (0..k).map(|t| s.step_size(t)).sum();
            assert_eq!(base, 1.0 / sum);
            for case in TheoremCase::ALL {
                assert_eq!(envelope(case, &sf, &s, k).unwrap(), base);
            }
        }
    }

    #[test]
    fn case12_value_and_ordering() {
        let sf = SfSpec::uniform_root(0.3, 0.8).unwrap();
        let s = sched(ScheduleFamily::InverseK, 1.0);
        let m = (0.3f64.powf(1.0 / 3.0) + 0.8f64.powf(1.0 / 3.0)) / 2.0;
        let v = (0.8f64.powf(1.0 / 3.0) - 0.3f64.powf(1.0 / 3.0)).powi(2) / 12.0;
        let e = envelope(TheoremCase::Case12, &sf, &s, 2).unwrap();
        assert!((e - (m - v) / 1.5).abs() < 1e-14);
        assert!((e - 0.52886).abs() < 1e-5);
        let ks: Vec<usize> = (1..=2000).collect();
        let a = envelope_series(TheoremCase::Case12, &sf, &s, &ks, true).unwrap();
        let b = envelope_series(TheoremCase::DeterministicBaseline, &sf, &s, &ks, true).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x < y));
        assert!(envelope(TheoremCase::Case12, &sf, &s, 0).is_err());
    }

    #[test]
    fn series_matches_pointwise() {
        let sf = SfSpec::uniform_root(2.0, 4.0).unwrap();
        let s = sched(ScheduleFamily::InverseK, 0.5);
        let ks = [1, 3, 10, 77];
        for case in TheoremCase::ALL {
            let series = envelope_series(case, &sf, &s, &ks, false).unwrap();
            for (i, &k) in ks.iter().enumerate() {
                assert_eq!(series.values[i], envelope(case, &sf, &s, k).unwrap());
            }
        }
        let p = envelope_series(TheoremCase::Case11a, &sf, &s, &ks, false).unwrap();
        for (v, c) in p.values.iter().zip(&p.components) {
            assert!((v - c.proof_form.unwrap()).abs() <= 1e-12 * v);
        }
    }

    #[test]
    fn nonpositive_gap_is_an_error() {
        // Var > E needs a very wide support: c2 huge relative to c1 at k = 0.
        let sf = SfSpec::uniform_root(1e-3, 40.0).unwrap();
        let s = sched(ScheduleFamily::Constant, 1.0);
        let err = envelope(TheoremCase::Case12, &sf, &s, 1).unwrap_err();
        assert!(err.to_string().contains("k=1"));
        assert!(envelope(TheoremCase::Case11b, &sf, &s, 1).is_ok());
    }

    fn synthetic(scale: impl Fn(usize) -> f64) -> (RateEnvelope<f64>, Vec<f64>) {
        let sf = SfSpec::uniform_root(0.3, 0.8).unwrap();
        let s = sched(ScheduleFamily::InverseK, 0.1);
        let ks: Vec<usize> = (1..=1000).map(|i| i * 100).collect();
        let env = envelope_series(TheoremCase::Case12, &sf, &s, &ks, true).unwrap();
        let m = env.values.iter().zip(&ks).map(|(v, &k)| v * scale(k)).collect();
        (env, m)
    }

    #[test]
    fn diagnostic_verdicts() {
        let (env, m) = synthetic(|_| 1.0);
        let d = little_o_diagnostic(&m, &env, 1000, 100_000).unwrap();
        assert!(d.window_slope.abs() < 1e-9);
        assert_eq!(d.verdict, Verdict::Inconclusive);

        let (env, m) = synthetic(|k| 1.0 / k as f64);
        let d = little_o_diagnostic(&m, &env, 1000, 100_000).unwrap();
        assert!((d.window_slope + 1.0).abs() < 1e-9);
        assert_eq!(d.verdict, Verdict::ConsistentWithLittleO);

        let (env, m) = synthetic(|k| k as f64);
        let d = little_o_diagnostic(&m, &env, 1000, 100_000).unwrap();
        assert_eq!(d.verdict, Verdict::Violation);

        assert!(little_o_diagnostic(&m, &env, 100_000, 1000).is_err());
        assert!(little_o_diagnostic(&m, &env, 150, 100_000).is_err());
        assert!(little_o_diagnostic(&m[1..], &env, 1000, 100_000).is_err());
    }
}
