//! Hyperparameter and assumption checks that decide which rate case a
//! configuration certifies.
//!
//! Every per-iteration condition is evaluated on each `k` up to a finite
//! horizon and the first failing `k` is reported. Nothing here proves a
//! condition for all `k`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lambert::umslr_case_c_c2;
use crate::optimizer::{ScheduleFamily, StepSizeSchedule};
use crate::sf::{MomentProfile, Monotonicity, SfSpec};
use crate::Scalar;

/// Horizon used for the numeric direction attached to a monotonicity class.
pub const CLASSIFY_HORIZON: usize = 10_000;
/// Default horizon for per-iteration condition checks.
pub const DEFAULT_HORIZON: usize = 100_000;
/// Tolerance on the case-(c) boundary curve.
pub const CASE_C_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TheoremCase {
    Case11a,
    Case11b,
    Case12,
    DeterministicBaseline,
}

impl TheoremCase {
    pub const ALL: [TheoremCase; 4] = [
        TheoremCase::Case11a,
        TheoremCase::Case11b,
        TheoremCase::Case12,
        TheoremCase::DeterministicBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremCase::Case11a => "case11a",
            TheoremCase::Case11b => "case11b",
            TheoremCase::Case12 => "case12",
            TheoremCase::DeterministicBaseline => "deterministic",
        }
    }
}

impl fmt::Display for TheoremCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "case11a" | "1.1a" | "11a" => Ok(TheoremCase::Case11a),
            "case11b" | "1.1b" | "11b" => Ok(TheoremCase::Case11b),
            "case12" | "1.2" | "12" => Ok(TheoremCase::Case12),
            "deterministic" | "baseline" | "deterministic_baseline" => Ok(TheoremCase::DeterministicBaseline),
            other => Err(Error::validation(format!("unknown theorem case `{other}`"))),
        }
    }
}

/// Outcome of one checked condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionReport {
    pub condition_name: String,
    pub holds: bool,
    /// First failing iteration, for per-iteration conditions.
    pub first_violation_k: Option<usize>,
    pub detail: String,
    /// Reported for information only; does not gate certification.
    pub informational: bool,
}

impl ConditionReport {
    pub fn new(name: &str, holds: bool, first_violation_k: Option<usize>, detail: String) -> Self {
        ConditionReport {
            condition_name: name.to_string(),
            holds,
            first_violation_k,
            detail,
            informational: false,
        }
    }

    fn info(mut self) -> Self {
        self.informational = true;
        self
    }

    /// One-line text form: `PASS|FAIL|INFO+|INFO- name [k=..] : detail`.
    pub fn to_line(&self) -> String {
        let tag = match (self.informational, self.holds) {
            (false, true) => "PASS",
            (false, false) => "FAIL",
            (true, true) => "INFO+",
            (true, false) => "INFO-",
        };
        let k = self
            .first_violation_k
            .map_or_else(|| "-".to_string(), |k| k.to_string());
        format!("{tag} {} first_violation_k={k} : {}", self.condition_name, self.detail)
    }
}

pub const REPORT_CSV_HEADER: &str = "condition,holds,first_violation_k,informational,detail";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV form of a list of reports, newline-terminated.
pub fn reports_to_csv(reports: &[ConditionReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(&r.condition_name),
            r.holds,
            r.first_violation_k.map_or_else(String::new, |k| k.to_string()),
            r.informational,
            csv_field(&r.detail)
        ));
    }
    out
}

/// Whether every gating report holds.
pub fn all_hold(reports: &[ConditionReport]) -> bool {
    reports.iter().filter(|r| !r.informational).all(|r| r.holds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prop1Case {
    A,
    B,
    C,
    D,
    None,
}

impl fmt::Display for Prop1Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Prop1Case::A => "a",
            Prop1Case::B => "b",
            Prop1Case::C => "c",
            Prop1Case::D => "d",
            Prop1Case::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Classification<T> {
    pub case: Prop1Case,
    /// Direction of the closed-form mean over `k = 0..=CLASSIFY_HORIZON`.
    pub mean_direction: Monotonicity,
    /// `exp(W0(-c1 ln c1))` when `0 < c1 < 1`.
    pub case_c_boundary: Option<T>,
    /// `0 < c1 < 1` and `1 < c2 < exp(W0(1/e))`, the interval variant of case (c).
    /// Informational only.
    pub in_interval_variant: bool,
}

/// Labels `(c1, c2)` with the monotonicity case of the uniform-root mean and
/// reports the numerically observed direction alongside.
pub fn classify_prop1<T: Scalar>(c1: T, c2: T) -> Result<Prop1Classification<T>> {
    let spec = SfSpec::uniform_root(c1, c2)?;
    let one = T::one();
    let case_c_boundary = if c1 < one { Some(umslr_case_c_c2(c1)?) } else { None };
    let case = if c1 >= one && c2 > one {
        Prop1Case::A
    } else if c1 < one && c2 <= one {
        Prop1Case::B
    } else if case_c_boundary.is_some_and(|b| (c2 - b).abs() <= T::lit(CASE_C_TOL)) {
        Prop1Case::C
    } else if c1 < one && c2 > one / c1 {
        Prop1Case::D
    } else {
        Prop1Case::None
    };
    let upper = crate::lambert::lambert_w0(one / T::E())?.exp();
    let profile = spec.moment_profile(CLASSIFY_HORIZON)?;
    Ok(Prop1Classification {
        case,
        mean_direction: profile.mean_direction,
        case_c_boundary,
        in_interval_variant: c1 < one && c2 > one && c2 < upper,
    })
}

/// Partial sums `(sum eta, sum eta^2, sum_{k>=1} eta_k / sum_{j<k} eta_j)` up to `horizon`.
fn partial_sums<T: Scalar>(schedule: &StepSizeSchedule<T>, horizon: usize) -> (T, T, T) {
    let (mut s1, mut s2, mut s3) = (T::zero(), T::zero(), T::zero());
    for k in 0..=horizon {
        let e = schedule.step_size(k);
        if k >= 1 {
            s3 = s3 + e / s1;
        }
        s1 = s1 + e;
        s2 = s2 + e * e;
    }
    (s1, s2, s3)
}

/// Step-size conditions: strictly decreasing, `sum eta = inf`,
/// `sum eta^2 < inf`, `sum eta_k / sum_{j<k} eta_j = inf`.
///
/// Verdicts for the three series are analytic per family; numeric partial sums
/// over the horizon go in the detail.
pub fn check_assumption2<T: Scalar>(schedule: &StepSizeSchedule<T>, horizon: usize) -> Result<Vec<ConditionReport>> {
    if horizon < 2 {
        return Err(Error::validation("assumption checks need horizon >= 2"));
    }
    StepSizeSchedule::new(schedule.family, schedule.eta)?;
    let first_non_decrease = (0..horizon).find(|&k| schedule.step_size(k + 1) >= schedule.step_size(k));
    let decreasing = ConditionReport::new(
        "eta decreasing",
        first_non_decrease.is_none(),
        first_non_decrease,
        match (schedule.family, first_non_decrease) {
            (ScheduleFamily::Constant, _) => "constant step is non-increasing but not strictly decreasing".into(),
            (_, None) => format!("strictly decreasing over k <= {horizon}"),
            (_, Some(k)) => format!("eta_{} >= eta_{k}", k + 1),
        },
    );

    let (s1, s2, s3) = partial_sums(schedule, horizon);
    let (sum_diverges, sq_converges, ratio_diverges) = match schedule.family {
        ScheduleFamily::Constant => (true, false, true),
        ScheduleFamily::InverseK => (true, true, true),
        ScheduleFamily::InverseSqrtK => (true, false, true),
    };
    let fam = schedule.family;
    Ok(vec![
        decreasing,
        ConditionReport::new(
            "sum eta = inf",
            sum_diverges,
            None,
            format!("analytic for {fam}; partial sum to k={horizon}: {s1:e}"),
        ),
        ConditionReport::new(
            "sum eta^2 < inf",
            sq_converges,
            None,
            format!("analytic for {fam}; partial sum to k={horizon}: {s2:e}"),
        ),
        ConditionReport::new(
            "sum eta_k / sum_{j<k} eta_j = inf",
            ratio_diverges,
            None,
            format!("analytic for {fam}; partial sum to k={horizon}: {s3:e}"),
        ),
    ])
}

fn first_k<F: Fn(usize) -> bool>(horizon: usize, ok: F) -> Option<usize> {
    (0..=horizon).find(|&k| !ok(k))
}

fn first_pair<F: Fn(usize) -> bool>(horizon: usize, ok: F) -> Option<usize> {
    (0..horizon).find(|&k| !ok(k))
}

fn per_k(name: &str, horizon: usize, violation: Option<usize>, what: &str) -> ConditionReport {
    let detail = match violation {
        None => format!("{what} for all k <= {horizon}"),
        Some(k) => format!("{what} fails at k={k}"),
    };
    ConditionReport::new(name, violation.is_none(), violation, detail)
}

/// Checks the preconditions of one rate case on `k = 0..=horizon`.
pub fn check_theorem_case<T: Scalar>(
    profile: &MomentProfile<T>,
    case: TheoremCase,
    b: T,
    l: T,
    schedule: &StepSizeSchedule<T>,
    horizon: usize,
) -> Result<Vec<ConditionReport>> {
    if profile.k_max < horizon {
        return Err(Error::validation(format!(
            "moment profile covers k <= {}, checks requested to k = {horizon}",
            profile.k_max
        )));
    }
    if horizon == 0 {
        return Err(Error::validation("theorem checks need horizon >= 1"));
    }
    if !(b > T::zero() && l > T::zero()) {
        return Err(Error::validation(format!("B and L must be positive, got B={b}, L={l}")));
    }
    let mean = &profile.mean;
    let var = &profile.variance;
    let one = T::one();
    let eta = |k: usize| schedule.step_size(k);
    let bl = b * l;

    let mut out = vec![ConditionReport::new(
        "sf bounded with positive first moment",
        profile.mu1 > T::zero() && profile.sup_support_limit.is_finite(),
        None,
        format!("mu1 = {:e}, sup u_k = {:e}", profile.mu1, profile.sup_support_limit),
    )];

    let mean_dec = || {
        per_k(
            "mean decreasing",
            horizon,
            first_pair(horizon, |k| mean[k + 1] < mean[k]),
            "E[u_k+1] < E[u_k]",
        )
    };
    let mean_inc = || {
        per_k(
            "mean increasing",
            horizon,
            first_pair(horizon, |k| mean[k + 1] > mean[k]),
            "E[u_k+1] > E[u_k]",
        )
    };

    match case {
        TheoremCase::Case11a => {
            out.push(mean_dec());
            out.push(per_k(
                "variance increasing",
                horizon,
                first_pair(horizon, |k| var[k + 1] > var[k]),
                "Var[u_k+1] > Var[u_k]",
            ));
            out.push(per_k(
                "mean > variance + 1",
                horizon,
                first_k(horizon, |k| mean[k] > var[k] + one),
                "E[u_k] > Var[u_k] + 1",
            ));
            out.push(per_k(
                "eta_k <= 1/(B L E[u_k])",
                horizon,
                first_k(horizon, |k| eta(k) <= one / (bl * mean[k])),
                "step bound",
            ));
            out.push(
                per_k(
                    "increment: dVar > dE",
                    horizon,
                    first_pair(horizon, |k| var[k + 1] - var[k] > mean[k + 1] - mean[k]),
                    "Var[u_k+1]-Var[u_k] > E[u_k+1]-E[u_k]",
                )
                .info(),
            );
        }
        TheoremCase::Case11b => {
            out.push(mean_dec());
            let c2 = profile.sup_support_limit;
            out.push(per_k(
                "eta_k <= 1/(B L c2)",
                horizon,
                first_k(horizon, |k| eta(k) <= one / (bl * c2)),
                &format!("step bound with c2 = sup_k u_k = {c2:e}"),
            ));
        }
        TheoremCase::Case12 => {
            out.push(mean_inc());
            out.push(per_k(
                "variance decreasing",
                horizon,
                first_pair(horizon, |k| var[k + 1] < var[k]),
                "Var[u_k+1] < Var[u_k]",
            ));
            out.push(per_k(
                "mean < 1",
                horizon,
                first_k(horizon, |k| mean[k] < one),
                "E[u_k] < 1",
            ));
            out.push(per_k(
                "variance/mean < 1",
                horizon,
                first_k(horizon, |k| var[k] / mean[k] < one),
                "Var[u_k]/E[u_k] < 1",
            ));
            out.push(per_k(
                "eta_k <= 1/(B L)",
                horizon,
                first_k(horizon, |k| eta(k) <= one / bl),
                "step bound",
            ));
            out.push(
                per_k(
                    "increment: dVar < dE",
                    horizon,
                    first_pair(horizon, |k| var[k + 1] - var[k] < mean[k + 1] - mean[k]),
                    "Var[u_k+1]-Var[u_k] < E[u_k+1]-E[u_k]",
                )
                .info(),
            );
        }
        TheoremCase::DeterministicBaseline => {
            out.push(per_k(
                "unit factor",
                horizon,
                first_k(horizon, |k| mean[k] == one && var[k] == T::zero()),
                "E[u_k] = 1 and Var[u_k] = 0",
            ));
            out.push(per_k(
                "eta_k <= 1/(B L)",
                horizon,
                first_k(horizon, |k| eta(k) <= one / bl),
                "step bound",
            ));
        }
    }
    Ok(out)
}

/// Whether the case's envelope is strictly tighter than `1/sum eta` at every
/// `k` of the profile.
pub fn acceleration_check<T: Scalar>(profile: &MomentProfile<T>, case: TheoremCase) -> ConditionReport {
    let one = T::one();
    let (pred, what): (Box<dyn Fn(usize) -> bool + '_>, &str) = match case {
        TheoremCase::Case11a => (
            Box::new(|k| profile.mean[k] > profile.variance[k] + one),
            "E[u_k] > Var[u_k] + 1",
        ),
        TheoremCase::Case11b => (Box::new(|k| profile.mean[k] > one), "E[u_k] > 1"),
        TheoremCase::Case12 => (
            Box::new(|k| profile.mean[k] - profile.variance[k] < one),
            "E[u_k] - Var[u_k] < 1",
        ),
        TheoremCase::DeterministicBaseline => {
            return ConditionReport::new(
                "acceleration",
                false,
                Some(0),
                "the deterministic envelope cannot be strictly tighter than itself".into(),
            );
        }
    };
    let n = profile.len();
    let holding = (0..n).filter(|&k| pred(k)).count();
    let first = (0..n).find(|&k| !pred(k));
    let detail = match first {
        None => format!("{what} for all k <= {}", profile.k_max),
        Some(0) => format!("{what} fails at k=0; holds on {holding} of {n} iterations"),
        Some(k) => format!("{what} holds on k in [0, {}]; {holding} of {n} iterations", k - 1),
    };
    ConditionReport::new("acceleration", first.is_none(), first, detail)
}
