//! Multi-seed experiments and the comparison methodology: Welch t-tests at a
//! ladder of checkpoints with a Bonferroni family-wise correction.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optimizer::{run, RunOptions, StepSizeSchedule, Trajectory};
use crate::problems::ProblemSpec;
use crate::rng::split;
use crate::scalar::fmt17;
use crate::sf::SfSpec;
use crate::Scalar;

/// Seeds per arm in the reference protocol.
pub const DEFAULT_SEEDS: usize = 40;
pub const DEFAULT_FWER: f64 = 0.05;
/// Number of log-spaced checkpoints in the automatic ladder.
pub const DEFAULT_CHECKPOINTS: usize = 10;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

fn cf_tolerance<T: Scalar>() -> T {
    T::lit(1e-14).max(T::epsilon() * T::lit(10.0))
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf<T: Scalar>(x: T, a: T, b: T) -> T {
    let one = T::one();
    let tiny = T::min_positive_value() / T::epsilon();
    let tol = cf_tolerance::<T>();
    let (qab, qap, qam) = (a + b, a + one, a - one);
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=10_000usize {
        let m = T::from_usize_lossy(m);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() < tol {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta<T: Scalar>(x: T, a: T, b: T) -> Result<T> {
    if !(a > T::zero() && b > T::zero()) {
        return Err(Error::domain(format!("incomplete beta needs a, b > 0, got {a}, {b}")));
    }
    if x.is_nan() || x < T::zero() || x > T::one() {
        return Err(Error::domain(format!("incomplete beta needs 0 <= x <= 1, got {x}")));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x == T::one() {
        return Ok(T::one());
    }
    let one = T::one();
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (one - x).ln();
    let front = ln_front.exp();
    if x < (a + one) / (a + b + T::lit(2.0)) {
        Ok(front * beta_cf(x, a, b) / a)
    } else {
        Ok(one - front * beta_cf(one - x, b, a) / b)
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf<T: Scalar>(t: T, df: T) -> Result<T> {
    if df.is_nan() || df <= T::zero() {
        return Err(Error::domain(format!("degrees of freedom must be positive, got {df}")));
    }
    if t.is_infinite() {
        return Ok(if t > T::zero() { T::one() } else { T::zero() });
    }
    let half = T::lit(0.5);
    let tail = half * reg_inc_beta(df / (df + t * t), df * half, half)?;
    Ok(if t > T::zero() { T::one() - tail } else { tail })
}

/// Two-sided p-value `P(|T_df| >= |t|)`.
pub fn two_sided_p<T: Scalar>(t: T, df: T) -> Result<T> {
    if df.is_nan() || df <= T::zero() {
        return Err(Error::domain(format!("degrees of freedom must be positive, got {df}")));
    }
    if t.is_infinite() {
        return Ok(T::zero());
    }
    let half = T::lit(0.5);
    let p = reg_inc_beta(df / (df + t * t), df * half, half)?;
    Ok(p.max(T::zero()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest<T> {
    pub t: T,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: T,
    pub p: T,
    /// Both samples have zero variance; `t`, `df` and `p` follow conventions
    /// (`p = 1` for equal means, `p = 0` otherwise, `df = n_a + n_b - 2`).
    pub degenerate: bool,
}

fn mean_var<T: Scalar>(x: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(x.len());
    let mean = x.iter().fold(T::zero(), |s, &v| s + v) / n;
    let ss = x.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean));
    (mean, ss / (n - T::one()))
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t<T: Scalar>(a: &[T], b: &[T]) -> Result<WelchTest<T>> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::validation(format!(
            "welch_t needs at least 2 samples per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::validation("welch_t samples must be finite"));
    }
    let (na, nb) = (T::from_usize_lossy(a.len()), T::from_usize_lossy(b.len()));
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == T::zero() {
        let equal = ma == mb;
        return Ok(WelchTest {
            t: if equal {
                T::zero()
            } else if ma > mb {
                T::infinity()
            } else {
                T::neg_infinity()
            },
            df: na + nb - T::lit(2.0),
            p: if equal { T::one() } else { T::zero() },
            degenerate: true,
        });
    }
    let one = T::one();
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - one) + sb * sb / (nb - one));
    let p = if t == T::zero() { one } else { two_sided_p(t, df)? };
    Ok(WelchTest {
        t,
        df,
        p,
        degenerate: false,
    })
}

/// `flag_i = p_i <= fwer / m`.
pub fn bonferroni<T: Scalar>(pvals: &[T], fwer: T) -> Result<Vec<bool>> {
    if pvals.is_empty() {
        return Err(Error::validation("bonferroni needs at least one p-value"));
    }
    if !(fwer > T::zero() && fwer < T::one()) {
        return Err(Error::validation(format!("fwer must be in (0, 1), got {fwer}")));
    }
    if let Some(p) = pvals.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
        return Err(Error::validation(format!("p-value {p} outside [0, 1]")));
    }
    let thr = fwer / T::from_usize_lossy(pvals.len());
    Ok(pvals.iter().map(|&p| p <= thr).collect())
}

/// `count` log-spaced eval points in `[eval_every, iterations]`, snapped to
/// multiples of `eval_every` (the last is always `iterations`). Duplicates
/// after snapping are dropped, so short horizons may yield fewer points.
pub fn default_checkpoints(iterations: usize, eval_every: usize, count: usize) -> Vec<usize> {
    if iterations == 0 || eval_every == 0 || count == 0 {
        return Vec::new();
    }
    let lo = eval_every.min(iterations) as f64;
    let hi = iterations as f64;
    let mut out: Vec<usize> = (0..count)
        .map(|i| {
            if i + 1 == count {
                return iterations;
            }
            let f = if count == 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
            let k = (lo.ln() + f * (hi.ln() - lo.ln())).exp();
            let snapped = ((k / eval_every as f64).round() as usize).max(1) * eval_every;
            snapped.min(iterations)
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// All seeds of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSet<T> {
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub trajectories: Vec<Trajectory<T>>,
    /// Planned horizon.
    pub iterations: usize,
    pub eval_every: usize,
}

impl<T: Scalar> RunSet<T> {
    pub fn n_truncated(&self) -> usize {
        self.trajectories.iter().filter(|t| t.truncated).count()
    }
}

/// Seed `i` of an experiment: `split(master_seed, i)`.
pub fn derive_seeds(master_seed: u64, n_seeds: usize) -> Vec<u64> {
    (0..n_seeds as u64).map(|i| split(master_seed, i)).collect()
}

/// Runs one configuration for `n_seeds` derived seeds, concurrently.
///
/// `template.seed` is ignored. Diverged runs stay in the set with their
/// truncation flag.
pub fn run_multi_seed<T: Scalar>(
    problem: &ProblemSpec<T>,
    schedule: &StepSizeSchedule<T>,
    sf: &SfSpec<T>,
    template: &RunOptions<T>,
    n_seeds: usize,
    master_seed: u64,
) -> Result<RunSet<T>> {
    if n_seeds < 2 {
        return Err(Error::validation(format!("n_seeds must be >= 2, got {n_seeds}")));
    }
    let seeds = derive_seeds(master_seed, n_seeds);
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::Runtime("derived seeds collide".into()));
    }
    let trajectories = seeds
        .par_iter()
        .map(|&seed| {
            let mut opts = template.clone();
            opts.seed = seed;
            run(problem, schedule, sf, &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let config_digest = trajectories[0].config_digest.clone();
    Ok(RunSet {
        config_digest,
        seeds,
        trajectories,
        iterations: template.iterations,
        eval_every: template.eval_every,
    })
}

/// Compares the realized gradient samples of two paired run sets and returns
/// the first `(seed index, iteration)` where they differ, if any.
pub fn first_stream_mismatch<T: Scalar>(a: &RunSet<T>, b: &RunSet<T>) -> Result<Option<(usize, usize)>> {
    if a.seeds != b.seeds {
        return Err(Error::validation("stream pairing needs identical seed lists"));
    }
    for (i, (ta, tb)) in a.trajectories.iter().zip(&b.trajectories).enumerate() {
        let n = ta.sample_tags.len().min(tb.sample_tags.len());
        if let Some(k) = (0..n).find(|&k| ta.sample_tags[k] != tb.sample_tags[k]) {
            return Ok(Some((i, k)));
        }
        if !ta.truncated && !tb.truncated && ta.sample_tags.len() != tb.sample_tags.len() {
            return Ok(Some((i, n)));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Loss,
    MinGradSq,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Loss => "loss",
            Metric::MinGradSq => "min_grad_sq",
        }
    }

    fn extract<T: Scalar>(self, t: &Trajectory<T>, k: usize) -> Option<T> {
        let i = t.eval_index(k)?;
        Some(match self {
            Metric::Loss => t.loss[i],
            Metric::MinGradSq => t.min_grad_sq[i],
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(Metric::Loss),
            "min_grad_sq" => Ok(Metric::MinGradSq),
            other => Err(Error::validation(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pairing {
    /// Same seed list on both arms; per-seed win counts are reported.
    Paired,
    Unpaired,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStat<T> {
    pub k: usize,
    pub mean_a: T,
    pub mean_b: T,
    pub t: T,
    pub df: T,
    pub p: T,
    pub significant: bool,
    pub degenerate: bool,
    /// Seeds where arm a is strictly lower (paired only).
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport<T> {
    pub method: String,
    pub correction: String,
    pub fwer: T,
    pub metric: Metric,
    pub paired: bool,
    pub config_a: String,
    pub config_b: String,
    pub n_a: usize,
    pub n_b: usize,
    /// Truncated runs left out of the tests.
    pub excluded_a: usize,
    pub excluded_b: usize,
    pub rows: Vec<CheckpointStat<T>>,
}

/// Welch t-test of `metric` at each checkpoint, Bonferroni-corrected across
/// checkpoints.
pub fn compare<T: Scalar>(
    a: &RunSet<T>,
    b: &RunSet<T>,
    metric: Metric,
    checkpoints: &[usize],
    pairing: Pairing,
    fwer: T,
) -> Result<ComparisonReport<T>> {
    if a.iterations != b.iterations || a.eval_every != b.eval_every {
        return Err(Error::validation(format!(
            "run sets differ in horizon or cadence: ({}, {}) vs ({}, {})",
            a.iterations, a.eval_every, b.iterations, b.eval_every
        )));
    }
    if checkpoints.is_empty() {
        return Err(Error::validation("no checkpoints"));
    }
    if let Some(&k) = checkpoints
        .iter()
        .find(|&&k| k > a.iterations || (k % a.eval_every != 0 && k != a.iterations))
    {
        return Err(Error::validation(format!("checkpoint {k} is not an eval point")));
    }
    if pairing == Pairing::Paired && a.seeds != b.seeds {
        return Err(Error::validation("paired comparison needs identical seed lists"));
    }
    let live_a: Vec<&Trajectory<T>> = a.trajectories.iter().filter(|t| !t.truncated).collect();
    let live_b: Vec<&Trajectory<T>> = b.trajectories.iter().filter(|t| !t.truncated).collect();

    let mut rows = Vec::with_capacity(checkpoints.len());
    let mut pvals = Vec::with_capacity(checkpoints.len());
    for &k in checkpoints {
        let pick = |ts: &[&Trajectory<T>]| -> Result<Vec<T>> {
            ts.iter()
                .map(|t| {
                    metric
                        .extract(t, k)
                        .ok_or_else(|| Error::validation(format!("checkpoint {k} missing from seed {}", t.seed)))
                })
                .collect()
        };
        let xa = pick(&live_a)?;
        let xb = pick(&live_b)?;
        let w = welch_t(&xa, &xb)?;
        let (ma, _) = mean_var(&xa);
        let (mb, _) = mean_var(&xb);
        let (mut wins_a, mut wins_b, mut ties) = (0, 0, 0);
        if pairing == Pairing::Paired {
            for (ta, tb) in a.trajectories.iter().zip(&b.trajectories) {
                if ta.truncated || tb.truncated {
                    continue;
                }
                match (metric.extract(ta, k), metric.extract(tb, k)) {
                    (Some(va), Some(vb)) if va < vb => wins_a += 1,
                    (Some(va), Some(vb)) if vb < va => wins_b += 1,
                    (Some(_), Some(_)) => ties += 1,
                    _ => {}
                }
            }
        }
        pvals.push(w.p);
        rows.push(CheckpointStat {
            k,
            mean_a: ma,
            mean_b: mb,
            t: w.t,
            df: w.df,
            p: w.p,
            significant: false,
            degenerate: w.degenerate,
            wins_a,
            wins_b,
            ties,
        });
    }
    for (row, flag) in rows.iter_mut().zip(bonferroni(&pvals, fwer)?) {
        row.significant = flag;
    }
    Ok(ComparisonReport {
        method: "welch".into(),
        correction: "bonferroni".into(),
        fwer,
        metric,
        paired: pairing == Pairing::Paired,
        config_a: a.config_digest.clone(),
        config_b: b.config_digest.clone(),
        n_a: a.trajectories.len(),
        n_b: b.trajectories.len(),
        excluded_a: a.n_truncated(),
        excluded_b: b.n_truncated(),
        rows,
    })
}

pub const REPORT_HEADER: &str = "k,mean_a,mean_b,t,df,p,significant,degenerate,wins_a,wins_b,ties";

impl<T: Scalar> ComparisonReport<T> {
    /// CSV with `# key=value` metadata lines, then [`REPORT_HEADER`] and one row
    /// per checkpoint. Floats carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# method={}\n", self.method));
        s.push_str(&format!("# correction={}\n", self.correction));
        s.push_str(&format!("# fwer={}\n", fmt17(self.fwer)));
        s.push_str(&format!("# metric={}\n", self.metric));
        s.push_str(&format!("# paired={}\n", self.paired));
        s.push_str(&format!("# config_a={}\n", self.config_a));
        s.push_str(&format!("# config_b={}\n", self.config_b));
        s.push_str(&format!("# n_a={}\n# n_b={}\n", self.n_a, self.n_b));
        s.push_str(&format!(
            "# excluded_a={}\n# excluded_b={}\n",
            self.excluded_a, self.excluded_b
        ));
        s.push_str(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.k,
                fmt17(r.mean_a),
                fmt17(r.mean_b),
                fmt17(r.t),
                fmt17(r.df),
                fmt17(r.p),
                r.significant,
                r.degenerate,
                r.wins_a,
                r.wins_b,
                r.ties
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        fn perr(line: usize, key: &str, msg: impl Into<String>) -> Error {
            Error::Parse {
                line,
                key: key.to_string(),
                msg: msg.into(),
            }
        }
        fn num<V: FromStr>(line: usize, key: &str, v: &str) -> Result<V> {
            v.parse().map_err(|_| perr(line, key, format!("cannot parse `{v}`")))
        }
        let mut meta = std::collections::BTreeMap::new();
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if let Some(rest) = raw.strip_prefix("# ") {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| perr(line, rest, "metadata line lacks `=`"))?;
                meta.insert(k.to_string(), (line, v.to_string()));
            } else if raw == REPORT_HEADER {
                seen_header = true;
            } else if !raw.is_empty() {
                if !seen_header {
                    return Err(perr(line, "header", "row before header"));
                }
                let f: Vec<&str> = raw.split(',').collect();
                if f.len() != 11 {
                    return Err(perr(line, "row", format!("expected 11 fields, got {}", f.len())));
                }
                rows.push(CheckpointStat {
                    k: num(line, "k", f[0])?,
                    mean_a: num(line, "mean_a", f[1])?,
                    mean_b: num(line, "mean_b", f[2])?,
                    t: num(line, "t", f[3])?,
                    df: num(line, "df", f[4])?,
                    p: num(line, "p", f[5])?,
                    significant: num(line, "significant", f[6])?,
                    degenerate: num(line, "degenerate", f[7])?,
                    wins_a: num(line, "wins_a", f[8])?,
                    wins_b: num(line, "wins_b", f[9])?,
                    ties: num(line, "ties", f[10])?,
                });
            }
        }
        let get = |key: &str| -> Result<(usize, String)> {
            meta.get(key).cloned().ok_or_else(|| perr(0, key, "missing metadata"))
        };
        let field = |key: &str| -> Result<String> { get(key).map(|(_, v)| v) };
        let parsed = |key: &str| -> Result<(usize, String)> { get(key) };
        let (l, v) = parsed("fwer")?;
        let fwer = num(l, "fwer", &v)?;
        let (l, v) = parsed("metric")?;
        let metric = v
            .parse()
            .map_err(|_| perr(l, "metric", format!("unknown metric `{v}`")))?;
        let (l, v) = parsed("paired")?;
        let paired = num(l, "paired", &v)?;
        let count = |key: &str| -> Result<usize> {
            let (l, v) = parsed(key)?;
            num(l, key, &v)
        };
        Ok(ComparisonReport {
            method: field("method")?,
            correction: field("correction")?,
            fwer,
            metric,
            paired,
            config_a: field("config_a")?,
            config_b: field("config_b")?,
            n_a: count("n_a")?,
            n_b: count("n_b")?,
            excluded_a: count("excluded_a")?,
            excluded_b: count("excluded_b")?,
            rows,
        })
    }

    /// Human-readable summary, one line per checkpoint.
    pub fn summary(&self) -> String {
        let m = self.rows.len();
        let mut s = format!(
            "{} t-test on {} with {} correction (fwer {}, m = {m}, per-test threshold {:e})\n",
            self.method,
            self.metric,
            self.correction,
            self.fwer,
            self.fwer.as_f64() / m as f64
        );
        s.push_str(&format!(
            "arm a: {} runs ({} excluded), config {}\narm b: {} runs ({} excluded), config {}\n",
            self.n_a, self.excluded_a, self.config_a, self.n_b, self.excluded_b, self.config_b
        ));
        for r in &self.rows {
            let lower = if r.mean_a < r.mean_b {
                "a lower"
            } else if r.mean_b < r.mean_a {
                "b lower"
            } else {
                "equal"
            };
            s.push_str(&format!(
                "k={:>8} mean_a={:.6e} mean_b={:.6e} t={:+.4} df={:.2} p={:.4e} {} {}",
                r.k,
                r.mean_a,
                r.mean_b,
                r.t,
                r.df,
                r.p,
                if r.significant { "significant" } else { "n.s." },
                lower
            ));
            if self.paired {
                s.push_str(&format!(" wins a/b/tie={}/{}/{}", r.wins_a, r.wins_b, r.ties));
            }
            s.push('\n');
        }
        s
    }
}
