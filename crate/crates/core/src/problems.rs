//! Synthetic smooth stochastic objectives with exact constants.
//!
//! Each problem carries its smoothness constant `L` and a triple `(A, B, C)`
//! such that `E||grad f_v(x)||^2 <= A (f(x) - f_low) + B ||grad f(x)||^2 + C`,
//! where `f_low` is `f_star` when known and a recorded lower bound otherwise.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;
use crate::Scalar;

/// Stream id used for synthetic data generation.
const DATA_STREAM: u64 = 3;

/// Fraction of labels flipped in the synthetic classification data.
const LABEL_FLIP: f64 = 0.1;

/// Declared certification box for Rosenbrock, per coordinate.
pub const ROSENBROCK_BOX: (f64, f64) = (-2.0, 2.0);

/// Gershgorin bound on the Rosenbrock Hessian over [-2, 2]^2:
/// |h11| <= 2 + 400*2 + 1200*4 = 5602, |h12| <= 400*2 = 800, |h22| = 200.
pub const ROSENBROCK_L: f64 = 5602.0 + 800.0;

/// One stochastic gradient draw together with the realized sample `v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample<T> {
    pub vector: Vec<T>,
    /// Identifies the realized sample: the summand index for finite sums, a
    /// hash of the noise vector for additive-noise models.
    pub sample_tag: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind<T> {
    Quadratic {
        diag: Vec<T>,
        sigma: T,
    },
    Rosenbrock {
        sigma: T,
    },
    Logistic {
        /// Row-major `n x d`.
        features: Vec<T>,
        labels: Vec<T>,
        n: usize,
        reg: T,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<T> {
    pub name: String,
    pub dim: usize,
    /// Smoothness constant `L` of the full objective.
    pub l: T,
    pub f_star: Option<T>,
    /// Lower bound on `f` used when `f_star` is unknown.
    pub f_lower: T,
    pub a: T,
    pub b: T,
    pub c: T,
    /// Per-coordinate box on which `l` is certified; `None` means global.
    pub domain_box: Option<(T, T)>,
    /// Canonical parameter string, used for run digests.
    pub params: String,
    /// Construction notes (e.g. data regeneration).
    pub notes: Vec<String>,
    kind: Kind<T>,
}

fn check_finite<T: Scalar>(x: &[T], what: &str) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!("{what} has a non-finite entry at index {i}")));
    }
    Ok(())
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn gaussian_noise<T: Scalar, R: RngCore + ?Sized>(dim: usize, sigma: T, rng: &mut R) -> (Vec<T>, u64) {
    let mut h = DefaultHasher::new();
    let noise = (0..dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z.to_bits().hash(&mut h);
            sigma * T::lit(z)
        })
        .collect();
    (noise, h.finish())
}

/// `f(x) = 1/2 x^T Q x` with diagonal `Q`, eigenvalues log-spaced in `[1, cond]`,
/// plus i.i.d. `N(0, sigma^2)` gradient noise per coordinate.
pub fn make_quadratic<T: Scalar>(dim: usize, cond: T, sigma: T, seed: u64) -> Result<ProblemSpec<T>> {
    if dim == 0 {
        return Err(Error::validation("problem.dim must be >= 1"));
    }
    if !(cond.is_finite() && cond >= T::one()) {
        return Err(Error::validation(format!("problem.cond must be >= 1, got {cond}")));
    }
    if !(sigma.is_finite() && sigma >= T::zero()) {
        return Err(Error::validation(format!("problem.sigma must be >= 0, got {sigma}")));
    }
    let diag: Vec<T> = if dim == 1 {
        vec![cond]
    } else {
        let last = T::from_usize_lossy(dim - 1);
        (0..dim)
            .map(|i| {
                if i == dim - 1 {
                    cond
                } else {
                    cond.powf(T::from_usize_lossy(i) / last)
                }
            })
            .collect()
    };
    Ok(ProblemSpec {
        name: "quadratic".into(),
        dim,
        l: cond,
        f_star: Some(T::zero()),
        f_lower: T::zero(),
        a: T::zero(),
        b: T::one(),
        c: sigma * sigma * T::from_usize_lossy(dim),
        domain_box: None,
        params: format!("quadratic(dim={dim},cond={cond},sigma={sigma},seed={seed})"),
        notes: Vec::new(),
        kind: Kind::Quadratic { diag, sigma },
    })
}

/// Two-dimensional Rosenbrock function with additive `N(0, sigma^2)` gradient noise.
///
/// `l` is certified on `[-2, 2]^2` only.
pub fn make_rosenbrock<T: Scalar>(sigma: T) -> Result<ProblemSpec<T>> {
    if !(sigma.is_finite() && sigma >= T::zero()) {
        return Err(Error::validation(format!("problem.sigma must be >= 0, got {sigma}")));
    }
    Ok(ProblemSpec {
        name: "rosenbrock".into(),
        dim: 2,
        l: T::lit(ROSENBROCK_L),
        f_star: Some(T::zero()),
        f_lower: T::zero(),
        a: T::zero(),
        b: T::one(),
        c: T::lit(2.0) * sigma * sigma,
        domain_box: Some((T::lit(ROSENBROCK_BOX.0), T::lit(ROSENBROCK_BOX.1))),
        params: format!("rosenbrock(sigma={sigma})"),
        notes: Vec::new(),
        kind: Kind::Rosenbrock { sigma },
    })
}

/// Finite-sum logistic regression with a nonconvex regularizer
/// `reg * sum_j x_j^2 / (1 + x_j^2)` on synthetic data.
///
/// Features are standard normal, labels are the sign of a random linear score
/// with 10% of them flipped. A draw whose labels are all equal is discarded and
/// regenerated from `seed + 1`, repeating until both classes appear; each
/// regeneration is recorded in `notes`.
///
/// Every summand is nonnegative, so `f_lower = 0`. Each summand `f_i` is
/// `L_i`-smooth with `L_i = |a_i|^2/4 + 2 reg`, which gives `A = 2 max_i L_i`,
/// `B = 1`, `C = 0`. The full objective uses the trace bound
/// `L = mean_i |a_i|^2 / 4 + 2 reg`.
pub fn make_logreg_nonconvex<T: Scalar>(n: usize, d: usize, reg: T, seed: u64) -> Result<ProblemSpec<T>> {
    if n < 2 {
        return Err(Error::validation("problem.n must be >= 2"));
    }
    if d == 0 {
        return Err(Error::validation("problem.d must be >= 1"));
    }
    if !(reg.is_finite() && reg >= T::zero()) {
        return Err(Error::validation(format!("problem.reg must be >= 0, got {reg}")));
    }
    let mut notes = Vec::new();
    let mut data_seed = seed;
    let (features, labels) = loop {
        let mut r = rng::stream(data_seed, DATA_STREAM);
        let w: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let a: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
            let score: f64 = a.iter().zip(&w).map(|(x, y)| x * y).sum();
            let mut y = if score >= 0.0 { 1.0 } else { -1.0 };
            if r.random::<f64>() < LABEL_FLIP {
                y = -y;
            }
            features.extend(a.into_iter().map(T::lit));
            labels.push(T::lit(y));
        }
        if labels.iter().any(|&y| y != labels[0]) {
            break (features, labels);
        }
        notes.push(format!(
            "data seed {data_seed} produced a single class; regenerated with seed {}",
            data_seed.wrapping_add(1)
        ));
        data_seed = data_seed.wrapping_add(1);
    };

    let quarter = T::lit(0.25);
    let reg_l = T::lit(2.0) * reg;
    let row_l: Vec<T> = features.chunks(d).map(|a| dot(a, a) * quarter + reg_l).collect();
    let l_max = row_l.iter().copied().fold(T::zero(), T::max);
    let l_mean = row_l.iter().copied().fold(T::zero(), |s, v| s + v) / T::from_usize_lossy(n);

    Ok(ProblemSpec {
        name: "logreg".into(),
        dim: d,
        l: l_mean,
        f_star: None,
        f_lower: T::zero(),
        a: T::lit(2.0) * l_max,
        b: T::one(),
        c: T::zero(),
        domain_box: None,
        params: format!("logreg(n={n},d={d},reg={reg},seed={seed})"),
        notes,
        kind: Kind::Logistic {
            features,
            labels,
            n,
            reg,
        },
    })
}

impl<T: Scalar> ProblemSpec<T> {
    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::validation(format!(
                "point has length {}, problem dimension is {}",
                x.len(),
                self.dim
            )));
        }
        check_finite(x, "point")
    }

    /// Number of summands for finite-sum problems.
    pub fn n_summands(&self) -> Option<usize> {
        match &self.kind {
            Kind::Logistic { n, .. } => Some(*n),
            _ => None,
        }
    }

    /// Whether `x` lies in the box on which `l` is certified.
    pub fn in_domain(&self, x: &[T]) -> bool {
        match self.domain_box {
            None => true,
            Some((lo, hi)) => x.iter().all(|&v| v >= lo && v <= hi),
        }
    }

    /// Lower bound used in the expected-smoothness inequality.
    pub fn f_reference(&self) -> T {
        self.f_star.unwrap_or(self.f_lower)
    }

    pub fn loss(&self, x: &[T]) -> Result<T> {
        self.check_input(x)?;
        let half = T::lit(0.5);
        let v = match &self.kind {
            Kind::Quadratic { diag, .. } => half * diag.iter().zip(x).fold(T::zero(), |s, (&q, &xi)| s + q * xi * xi),
            Kind::Rosenbrock { .. } => {
                let (a, b) = (x[0], x[1]);
                let r = b - a * a;
                (T::one() - a).powi(2) + T::lit(100.0) * r * r
            }
            Kind::Logistic { n, .. } => {
                let total = (0..*n).fold(T::zero(), |s, i| s + self.summand_loss_unchecked(i, x));
                total / T::from_usize_lossy(*n)
            }
        };
        Ok(v)
    }

    pub fn full_gradient(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let g = match &self.kind {
            Kind::Quadratic { diag, .. } => diag.iter().zip(x).map(|(&q, &xi)| q * xi).collect(),
            Kind::Rosenbrock { .. } => {
                let (a, b) = (x[0], x[1]);
                let r = b - a * a;
                vec![-T::lit(2.0) * (T::one() - a) - T::lit(400.0) * a * r, T::lit(200.0) * r]
            }
            Kind::Logistic { n, .. } => {
                let mut acc = vec![T::zero(); self.dim];
                for i in 0..*n {
                    for (s, gi) in acc.iter_mut().zip(self.summand_gradient_unchecked(i, x)) {
                        *s = *s + gi;
                    }
                }
                let inv = T::one() / T::from_usize_lossy(*n);
                acc.into_iter().map(|v| v * inv).collect()
            }
        };
        Ok(g)
    }

    /// Gradient of one uniformly drawn summand, or the full gradient plus noise.
    pub fn stochastic_gradient<R: RngCore + ?Sized>(&self, x: &[T], rng: &mut R) -> Result<GradientSample<T>> {
        self.check_input(x)?;
        let sample = match &self.kind {
            Kind::Quadratic { sigma, .. } | Kind::Rosenbrock { sigma } => {
                let g = self.full_gradient(x)?;
                let (noise, tag) = gaussian_noise(self.dim, *sigma, rng);
                GradientSample {
                    vector: g.into_iter().zip(noise).map(|(a, b)| a + b).collect(),
                    sample_tag: tag,
                }
            }
            Kind::Logistic { n, .. } => {
                let i = rng.random_range(0..*n);
                GradientSample {
                    vector: self.summand_gradient_unchecked(i, x),
                    sample_tag: i as u64,
                }
            }
        };
        check_finite(&sample.vector, "stochastic gradient").map_err(|e| Error::Runtime(e.to_string()))?;
        Ok(sample)
    }

    /// Gradient of summand `i` of a finite-sum problem.
    pub fn summand_gradient(&self, i: usize, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        match self.n_summands() {
            Some(n) if i < n => Ok(self.summand_gradient_unchecked(i, x)),
            Some(n) => Err(Error::validation(format!("summand {i} out of range 0..{n}"))),
            None => Err(Error::validation(format!("{} is not a finite-sum problem", self.name))),
        }
    }

    fn summand_loss_unchecked(&self, i: usize, x: &[T]) -> T {
        let Kind::Logistic {
            features, labels, reg, ..
        } = &self.kind
        else {
            unreachable!("finite-sum only")
        };
        let a = &features[i * self.dim..(i + 1) * self.dim];
        let margin = labels[i] * dot(a, x);
        let penalty = x.iter().fold(T::zero(), |s, &v| {
            let v2 = v * v;
            s + v2 / (T::one() + v2)
        });
        softplus(-margin) + *reg * penalty
    }

    fn summand_gradient_unchecked(&self, i: usize, x: &[T]) -> Vec<T> {
        let Kind::Logistic {
            features, labels, reg, ..
        } = &self.kind
        else {
            unreachable!("finite-sum only")
        };
        let a = &features[i * self.dim..(i + 1) * self.dim];
        let y = labels[i];
        let coef = -y * sigmoid(-y * dot(a, x));
        a.iter()
            .zip(x)
            .map(|(&aj, &xj)| {
                let denom = T::one() + xj * xj;
                coef * aj + *reg * T::lit(2.0) * xj / (denom * denom)
            })
            .collect()
    }
}
