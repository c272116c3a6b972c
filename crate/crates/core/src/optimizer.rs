//! The MSLR iterate `x_{k+1} = x_k - eta_k u_k grad f_{v_k}(x_k)` and its trajectory record.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::rng;
use crate::sf::SfSpec;
use crate::Scalar;

/// Loss above which a run is treated as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleFamily {
    /// `eta_k = eta`
    Constant,
    /// `eta_k = eta / (k + 1)`
    InverseK,
    /// `eta_k = eta / sqrt(k + 1)`
    InverseSqrtK,
}

impl ScheduleFamily {
    pub const ALL: [ScheduleFamily; 3] = [
        ScheduleFamily::Constant,
        ScheduleFamily::InverseK,
        ScheduleFamily::InverseSqrtK,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleFamily::Constant => "constant",
            ScheduleFamily::InverseK => "inverse_k",
            ScheduleFamily::InverseSqrtK => "inverse_sqrt_k",
        }
    }
}

impl fmt::Display for ScheduleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown schedule family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeSchedule<T> {
    pub family: ScheduleFamily,
    pub eta: T,
}

impl<T: Scalar> StepSizeSchedule<T> {
    pub fn new(family: ScheduleFamily, eta: T) -> Result<Self> {
        if !(eta.is_finite() && eta > T::zero()) {
            return Err(Error::validation(format!(
                "schedule.eta must be a positive finite real, got {eta}"
            )));
        }
        Ok(StepSizeSchedule { family, eta })
    }

    pub fn step_size(&self, k: usize) -> T {
        let k1 = T::from_usize_lossy(k + 1);
        match self.family {
            ScheduleFamily::Constant => self.eta,
            ScheduleFamily::InverseK => self.eta / k1,
            ScheduleFamily::InverseSqrtK => self.eta / k1.sqrt(),
        }
    }

    /// The same family with every step multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(self.family, self.eta * factor)
    }
}

/// One MSLR step: `x - (eta_k u_k) g`. With `u_k = 1` this is plain SGD.
pub fn sgd_step<T: Scalar>(x: &[T], g: &[T], eta_k: T, u_k: T) -> Result<Vec<T>> {
    if x.len() != g.len() {
        return Err(Error::validation(format!(
            "iterate has length {}, gradient has length {}",
            x.len(),
            g.len()
        )));
    }
    if !(eta_k.is_finite() && eta_k > T::zero() && u_k.is_finite() && u_k > T::zero()) {
        return Err(Error::validation(format!(
            "step needs positive finite eta_k and u_k, got {eta_k} and {u_k}"
        )));
    }
    if x.iter().chain(g).any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite iterate or gradient"));
    }
    let lr = eta_k * u_k;
    Ok(x.iter().zip(g).map(|(&xi, &gi)| xi - lr * gi).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions<T> {
    pub iterations: usize,
    /// Cadence of full-gradient evaluations for the recorded series.
    pub eval_every: usize,
    /// Starting point; defaults to the all-ones vector.
    pub x0: Option<Vec<T>>,
    pub seed: u64,
    /// Also record `||grad f(x_k)||^2` at every iterate, as the `g_k`
    /// recurrence needs.
    pub track_iterate_grads: bool,
}

impl<T> RunOptions<T> {
    pub fn new(iterations: usize, eval_every: usize, seed: u64) -> Self {
        RunOptions {
            iterations,
            eval_every,
            x0: None,
            seed,
            track_iterate_grads: true,
        }
    }
}

/// Per-iteration record of one run.
///
/// Eval-point series (`eval_k`, `loss`, `grad_norm_sq`, `min_grad_sq`) are taken
/// at every multiple of `eval_every` and at the last iterate. `min_grad_sq` is a
/// running minimum over eval points only. Per-step series (`eta_series`,
/// `u_series`, `sample_tags`) have one entry per completed step; `sum_eta[k]`
/// is `sum_{t<k} eta_t` for `k = 0..=iterations`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    /// Completed steps.
    pub iterations: usize,
    pub eval_every: usize,
    pub eval_k: Vec<usize>,
    pub loss: Vec<T>,
    pub grad_norm_sq: Vec<T>,
    pub min_grad_sq: Vec<T>,
    /// `||grad f(x_k)||^2` at every iterate; empty unless tracked.
    pub iterate_grad_sq: Vec<T>,
    /// `g_k` recurrence, one longer than `iterate_grad_sq`; filled by the harness.
    pub g_series: Vec<T>,
    pub eta_series: Vec<T>,
    pub u_series: Vec<T>,
    /// Realized gradient sample identifiers, one per step.
    pub sample_tags: Vec<u64>,
    pub sum_eta: Vec<T>,
    /// False once an iterate leaves the problem's certified box.
    pub certified: bool,
    pub truncated: bool,
    pub truncation_reason: Option<String>,
    pub seed: u64,
    pub config_digest: String,
    pub final_x: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    /// Position of iteration `k` among the eval points.
    pub fn eval_index(&self, k: usize) -> Option<usize> {
        self.eval_k.binary_search(&k).ok()
    }

    pub fn g_at(&self, k: usize) -> Option<T> {
        self.g_series.get(k).copied()
    }
}

/// Digest of everything that defines a run except its seed.
pub fn config_digest<T: Scalar>(
    problem: &ProblemSpec<T>,
    schedule: &StepSizeSchedule<T>,
    sf: &SfSpec<T>,
    opts: &RunOptions<T>,
) -> String {
    let mut h = Sha256::new();
    h.update(problem.params.as_bytes());
    h.update(format!("|schedule={}:{:e}", schedule.family, schedule.eta));
    match sf {
        SfSpec::Constant { value } => h.update(format!("|sf=constant:{value:e}")),
        SfSpec::UniformRoot { c1, c2 } => h.update(format!("|sf=uniform_root:{c1:e}:{c2:e}")),
    }
    h.update(format!(
        "|iterations={}|eval_every={}|track={}",
        opts.iterations, opts.eval_every, opts.track_iterate_grads
    ));
    if let Some(x0) = &opts.x0 {
        for v in x0 {
            h.update(format!("|{v:e}"));
        }
    }
    hex::encode(&h.finalize()[..8])
}

fn norm_sq<T: Scalar>(g: &[T]) -> T {
    g.iter().fold(T::zero(), |s, &v| s + v * v)
}

/// Runs the MSLR iterate for `opts.iterations` steps.
///
/// Gradient noise and the stochasticity factor come from separate sub-streams
/// of `opts.seed`, so runs that differ only in `sf` see the same gradient
/// samples. Divergence (loss above 1e12, or any non-finite value) stops the run
/// early and marks the trajectory truncated instead of returning an error.
pub fn run<T: Scalar>(
    problem: &ProblemSpec<T>,
    schedule: &StepSizeSchedule<T>,
    sf: &SfSpec<T>,
    opts: &RunOptions<T>,
) -> Result<Trajectory<T>> {
    if opts.iterations == 0 {
        return Err(Error::validation("iterations must be >= 1"));
    }
    if opts.eval_every == 0 {
        return Err(Error::validation("eval_every must be >= 1"));
    }
    sf.validate()?;
    StepSizeSchedule::new(schedule.family, schedule.eta)?;
    let mut x = match &opts.x0 {
        Some(x0) => {
            if x0.len() != problem.dim {
                return Err(Error::validation(format!(
                    "x0 has length {}, problem dimension is {}",
                    x0.len(),
                    problem.dim
                )));
            }
            x0.clone()
        }
        None => vec![T::one(); problem.dim],
    };
    problem.loss(&x)?;

    let n = opts.iterations;
    let mut grad_rng = rng::gradient_stream(opts.seed);
    let mut sf_rng = rng::sf_stream(opts.seed);
    let n_eval = n / opts.eval_every + 2;
    let mut t = Trajectory {
        iterations: 0,
        eval_every: opts.eval_every,
        eval_k: Vec::with_capacity(n_eval),
        loss: Vec::with_capacity(n_eval),
        grad_norm_sq: Vec::with_capacity(n_eval),
        min_grad_sq: Vec::with_capacity(n_eval),
        iterate_grad_sq: Vec::with_capacity(if opts.track_iterate_grads { n + 1 } else { 0 }),
        g_series: Vec::new(),
        eta_series: Vec::with_capacity(n),
        u_series: Vec::with_capacity(n),
        sample_tags: Vec::with_capacity(n),
        sum_eta: Vec::with_capacity(n + 1),
        certified: problem.in_domain(&x),
        truncated: false,
        truncation_reason: None,
        seed: opts.seed,
        config_digest: config_digest(problem, schedule, sf, opts),
        final_x: Vec::new(),
    };
    let limit = T::lit(DIVERGENCE_LOSS);
    let mut sum = T::zero();
    t.sum_eta.push(sum);

    for k in 0..=n {
        let is_eval = k % opts.eval_every == 0 || k == n;
        if is_eval || opts.track_iterate_grads {
            let gsq = norm_sq(&problem.full_gradient(&x)?);
            if !gsq.is_finite() {
                t.truncated = true;
                t.truncation_reason = Some(format!("non-finite gradient norm at k={k}"));
                break;
            }
            if is_eval {
                let loss = problem.loss(&x)?;
                if !loss.is_finite() || loss > limit {
                    t.truncated = true;
                    t.truncation_reason = Some(format!("loss {loss} exceeded {DIVERGENCE_LOSS:e} at k={k}"));
                    break;
                }
                let running = t.min_grad_sq.last().map_or(gsq, |&m| m.min(gsq));
                t.eval_k.push(k);
                t.loss.push(loss);
                t.grad_norm_sq.push(gsq);
                t.min_grad_sq.push(running);
            }
            if opts.track_iterate_grads {
                t.iterate_grad_sq.push(gsq);
            }
        }
        if k == n {
            break;
        }

        let eta = schedule.step_size(k);
        let u = sf.sample(k, &mut sf_rng);
        let sample = match problem.stochastic_gradient(&x, &mut grad_rng) {
            Ok(s) => s,
            Err(Error::Runtime(msg)) => {
                t.truncated = true;
                t.truncation_reason = Some(format!("{msg} at k={k}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let next = sgd_step(&x, &sample.vector, eta, u)?;
        t.eta_series.push(eta);
        t.u_series.push(u);
        t.sample_tags.push(sample.sample_tag);
        sum = sum + eta;
        t.sum_eta.push(sum);
        t.iterations = k + 1;
        if next.iter().any(|v| !v.is_finite()) {
            t.truncated = true;
            t.truncation_reason = Some(format!("non-finite iterate after step {k}"));
            x = next;
            break;
        }
        x = next;
        if t.certified && !problem.in_domain(&x) {
            t.certified = false;
        }
    }
    t.final_x = x;
    Ok(t)
}
