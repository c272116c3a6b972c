//! Experiment configuration in a line-oriented `key = value` format.
//!
//! ```text
//! # comments start with '#'
//! problem = quadratic
//! problem.dim = 10
//! problem.cond = 10
//! schedule = inverse_k
//! schedule.eta = auto
//! sf = uniform_root
//! sf.c1 = 0.3
//! sf.c2 = 0.8
//! iterations = 10000
//! ```
//!
//! Required keys are `problem`, `schedule`, `sf` (with its parameters) and
//! `iterations`. Everything else has a default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optimizer::{ScheduleFamily, StepSizeSchedule};
use crate::problems::{make_logreg_nonconvex, make_quadratic, make_rosenbrock, ProblemSpec};
use crate::sf::SfSpec;
use crate::stats::{default_checkpoints, DEFAULT_CHECKPOINTS, DEFAULT_SEEDS};
use crate::validator::TheoremCase;

pub const SEED_ENV: &str = "SLRLAB_SEED";
pub const DEFAULT_EVAL_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemConfig {
    Quadratic {
        dim: usize,
        cond: f64,
        sigma: f64,
        seed: u64,
    },
    Rosenbrock {
        sigma: f64,
    },
    Logreg {
        n: usize,
        d: usize,
        reg: f64,
        seed: u64,
    },
}

impl ProblemConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemConfig::Quadratic { .. } => "quadratic",
            ProblemConfig::Rosenbrock { .. } => "rosenbrock",
            ProblemConfig::Logreg { .. } => "logreg",
        }
    }

    pub fn build(&self) -> Result<ProblemSpec<f64>> {
        match *self {
            ProblemConfig::Quadratic { dim, cond, sigma, seed } => make_quadratic(dim, cond, sigma, seed),
            ProblemConfig::Rosenbrock { sigma } => make_rosenbrock(sigma),
            ProblemConfig::Logreg { n, d, reg, seed } => make_logreg_nonconvex(n, d, reg, seed),
        }
    }

    fn allowed_keys(name: &str) -> &'static [&'static str] {
        match name {
            "quadratic" => &["problem.dim", "problem.cond", "problem.sigma", "problem.seed"],
            "rosenbrock" => &["problem.sigma"],
            "logreg" => &["problem.n", "problem.d", "problem.reg", "problem.seed"],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSetting {
    /// `1 / (B L)` of the built problem.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoints {
    /// Log-spaced eval points, see [`default_checkpoints`].
    Auto,
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub schedule: ScheduleFamily,
    pub eta: EtaSetting,
    pub sf: SfSpec<f64>,
    pub iterations: usize,
    pub eval_every: usize,
    pub n_seeds: usize,
    pub master_seed: u64,
    pub checkpoints: Checkpoints,
    pub out_dir: Option<PathBuf>,
    pub theorem_case: Option<TheoremCase>,
}

const TOP_KEYS: &[&str] = &[
    "problem",
    "schedule",
    "schedule.eta",
    "sf",
    "sf.value",
    "sf.c1",
    "sf.c2",
    "iterations",
    "eval_every",
    "n_seeds",
    "master_seed",
    "checkpoints",
    "out_dir",
    "theorem_case",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |(l, _)| *l)
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn required(&self, key: &str) -> Result<(usize, &str)> {
        self.raw(key)
            .ok_or_else(|| parse_err(0, key, "required key is missing"))
    }

    fn parsed<V: FromStr>(&self, key: &str, default: V) -> Result<V> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|_| parse_err(line, key, format!("cannot parse `{v}`"))),
        }
    }

    fn parsed_required<V: FromStr>(&self, key: &str) -> Result<V> {
        let (line, v) = self.required(key)?;
        v.parse()
            .map_err(|_| parse_err(line, key, format!("cannot parse `{v}`")))
    }

    fn check(&self, key: &str, ok: bool, msg: impl Into<String>) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(parse_err(self.line(key), key, msg))
        }
    }
}

fn parse_err(line: usize, key: &str, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn rewrap(err: Error, line: usize, key: &str) -> Error {
    match err {
        Error::Parse { .. } => err,
        other => parse_err(line, key, other.to_string()),
    }
}

/// Parses and validates a config. Errors name the offending key and line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, content, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let known = TOP_KEYS.contains(&key) || key.starts_with("problem.");
        if !known {
            return Err(parse_err(line, key, "unknown key"));
        }
        if value.is_empty() {
            return Err(parse_err(line, key, "empty value"));
        }
        if map.insert(key.to_string(), (line, value.to_string())).is_some() {
            return Err(parse_err(line, key, "duplicate key"));
        }
    }
    let e = Entries { map };

    let (pline, pname) = e.required("problem")?;
    let allowed = ProblemConfig::allowed_keys(pname);
    if allowed.is_empty() {
        return Err(parse_err(pline, "problem", format!("unknown problem `{pname}`")));
    }
    for (key, (line, _)) in &e.map {
        if key.starts_with("problem.") && !allowed.contains(&key.as_str()) {
            return Err(parse_err(*line, key, format!("not a parameter of {pname}")));
        }
    }
    let problem = match pname {
        "quadratic" => ProblemConfig::Quadratic {
            dim: e.parsed("problem.dim", 10)?,
            cond: e.parsed("problem.cond", 10.0)?,
            sigma: e.parsed("problem.sigma", 0.0)?,
            seed: e.parsed("problem.seed", 0)?,
        },
        "rosenbrock" => ProblemConfig::Rosenbrock {
            sigma: e.parsed("problem.sigma", 0.0)?,
        },
        _ => ProblemConfig::Logreg {
            n: e.parsed("problem.n", 200)?,
            d: e.parsed("problem.d", 10)?,
            reg: e.parsed("problem.reg", 0.1)?,
            seed: e.parsed("problem.seed", 0)?,
        },
    };
    match problem {
        ProblemConfig::Quadratic { dim, cond, sigma, .. } => {
            e.check("problem.dim", dim >= 1, "must be >= 1")?;
            e.check(
                "problem.cond",
                cond.is_finite() && cond >= 1.0,
                "must be a finite real >= 1",
            )?;
            e.check(
                "problem.sigma",
                sigma.is_finite() && sigma >= 0.0,
                "must be a finite real >= 0",
            )?;
        }
        ProblemConfig::Rosenbrock { sigma } => {
            e.check(
                "problem.sigma",
                sigma.is_finite() && sigma >= 0.0,
                "must be a finite real >= 0",
            )?;
        }
        ProblemConfig::Logreg { n, d, reg, .. } => {
            e.check("problem.n", n >= 2, "must be >= 2")?;
            e.check("problem.d", d >= 1, "must be >= 1")?;
            e.check(
                "problem.reg",
                reg.is_finite() && reg >= 0.0,
                "must be a finite real >= 0",
            )?;
        }
    }

    let (sline, sname) = e.required("schedule")?;
    let schedule: ScheduleFamily = sname
        .parse()
        .map_err(|_| parse_err(sline, "schedule", format!("unknown schedule `{sname}`")))?;
    let eta = match e.raw("schedule.eta") {
        None | Some((_, "auto")) => EtaSetting::Auto,
        Some((line, v)) => {
            let x: f64 = v
                .parse()
                .map_err(|_| parse_err(line, "schedule.eta", format!("cannot parse `{v}`")))?;
            e.check(
                "schedule.eta",
                x.is_finite() && x > 0.0,
                "must be a finite real > 0 or `auto`",
            )?;
            EtaSetting::Value(x)
        }
    };

    let (fline, fname) = e.required("sf")?;
    let sf = match fname {
        "constant" => {
            for k in ["sf.c1", "sf.c2"] {
                if let Some((line, _)) = e.raw(k) {
                    return Err(parse_err(line, k, "not a parameter of constant"));
                }
            }
            let value: f64 = e.parsed("sf.value", 1.0)?;
            SfSpec::constant(value).map_err(|err| rewrap(err, e.line("sf.value"), "sf.value"))?
        }
        "uniform_root" => {
            if let Some((line, _)) = e.raw("sf.value") {
                return Err(parse_err(line, "sf.value", "not a parameter of uniform_root"));
            }
            let c1: f64 = e.parsed_required("sf.c1")?;
            let c2: f64 = e.parsed_required("sf.c2")?;
            e.check("sf.c1", c1.is_finite() && c1 > 0.0, "must be a finite real > 0")?;
            e.check(
                "sf.c2",
                c2.is_finite() && c2 > c1,
                format!("sf.c2 must exceed sf.c1 ({c2} <= {c1})"),
            )?;
            SfSpec::uniform_root(c1, c2).map_err(|err| rewrap(err, e.line("sf.c2"), "sf.c2"))?
        }
        other => {
            return Err(parse_err(
                fline,
                "sf",
                format!("unknown stochasticity factor `{other}`"),
            ))
        }
    };

    let iterations: usize = e.parsed_required("iterations")?;
    e.check("iterations", iterations >= 1, "must be >= 1")?;
    let eval_every: usize = e.parsed("eval_every", DEFAULT_EVAL_EVERY)?;
    e.check("eval_every", eval_every >= 1, "must be >= 1")?;
    let n_seeds: usize = e.parsed("n_seeds", DEFAULT_SEEDS)?;
    e.check("n_seeds", n_seeds >= 1, "must be >= 1")?;
    let master_seed: u64 = e.parsed("master_seed", 0)?;

    let checkpoints = match e.raw("checkpoints") {
        None | Some((_, "auto")) => Checkpoints::Auto,
        Some((line, v)) => {
            let list = v
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| {
                    parse_err(
                        line,
                        "checkpoints",
                        format!("expected `auto` or a comma list, got `{v}`"),
                    )
                })?;
            let ok = list.windows(2).all(|w| w[0] < w[1])
                && list
                    .iter()
                    .all(|&k| k >= 1 && k <= iterations && (k % eval_every == 0 || k == iterations));
            e.check(
                "checkpoints",
                ok,
                "checkpoints must be ascending eval points in [1, iterations]",
            )?;
            Checkpoints::List(list)
        }
    };
    let out_dir = e.raw("out_dir").map(|(_, v)| PathBuf::from(v));
    let theorem_case = match e.raw("theorem_case") {
        None => None,
        Some((line, v)) => Some(
            v.parse()
                .map_err(|_| parse_err(line, "theorem_case", format!("unknown theorem case `{v}`")))?,
        ),
    };

    let cfg = ExperimentConfig {
        problem,
        schedule,
        eta,
        sf,
        iterations,
        eval_every,
        n_seeds,
        master_seed,
        checkpoints,
        out_dir,
        theorem_case,
    };
    cfg.problem.build().map_err(|err| rewrap(err, pline, "problem"))?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

impl ExperimentConfig {
    /// Resolves `schedule.eta`, computing `1 / (B L)` for `auto`.
    pub fn step_schedule(&self, problem: &ProblemSpec<f64>) -> Result<StepSizeSchedule<f64>> {
        let eta = match self.eta {
            EtaSetting::Value(v) => v,
            EtaSetting::Auto => 1.0 / (problem.b * problem.l),
        };
        StepSizeSchedule::new(self.schedule, eta)
    }

    pub fn checkpoint_list(&self) -> Vec<usize> {
        match &self.checkpoints {
            Checkpoints::Auto => default_checkpoints(self.iterations, self.eval_every, DEFAULT_CHECKPOINTS),
            Checkpoints::List(l) => l.clone(),
        }
    }

    /// Applies `SLRLAB_SEED` if it is set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                self.master_seed = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::validation(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
                Ok(())
            }
            Err(std::env::VarError::NotPresent) => Ok(()),
            Err(err) => Err(Error::validation(format!("{SEED_ENV}: {err}"))),
        }
    }
}

/// Canonical serialization; every field is written, so `parse_config` of the
/// output reproduces the config exactly.
impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "problem = {}", self.problem.name())?;
        match &self.problem {
            ProblemConfig::Quadratic { dim, cond, sigma, seed } => {
                writeln!(f, "problem.dim = {dim}")?;
                writeln!(f, "problem.cond = {cond:?}")?;
                writeln!(f, "problem.sigma = {sigma:?}")?;
                writeln!(f, "problem.seed = {seed}")?;
            }
            ProblemConfig::Rosenbrock { sigma } => writeln!(f, "problem.sigma = {sigma:?}")?,
            ProblemConfig::Logreg { n, d, reg, seed } => {
                writeln!(f, "problem.n = {n}")?;
                writeln!(f, "problem.d = {d}")?;
                writeln!(f, "problem.reg = {reg:?}")?;
                writeln!(f, "problem.seed = {seed}")?;
            }
        }
        writeln!(f, "schedule = {}", self.schedule)?;
        match self.eta {
            EtaSetting::Auto => writeln!(f, "schedule.eta = auto")?,
            EtaSetting::Value(v) => writeln!(f, "schedule.eta = {v:?}")?,
        }
        match &self.sf {
            SfSpec::Constant { value } => {
                writeln!(f, "sf = constant")?;
                writeln!(f, "sf.value = {value:?}")?;
            }
            SfSpec::UniformRoot { c1, c2 } => {
                writeln!(f, "sf = uniform_root")?;
                writeln!(f, "sf.c1 = {c1:?}")?;
                writeln!(f, "sf.c2 = {c2:?}")?;
            }
        }
        writeln!(f, "iterations = {}", self.iterations)?;
        writeln!(f, "eval_every = {}", self.eval_every)?;
        writeln!(f, "n_seeds = {}", self.n_seeds)?;
        writeln!(f, "master_seed = {}", self.master_seed)?;
        match &self.checkpoints {
            Checkpoints::Auto => writeln!(f, "checkpoints = auto")?,
            Checkpoints::List(l) => {
                let s: Vec<String> = l.iter().map(|k| k.to_string()).collect();
                writeln!(f, "checkpoints = {}", s.join(", "))?;
            }
        }
        if let Some(d) = &self.out_dir {
            writeln!(f, "out_dir = {}", d.display())?;
        }
        if let Some(c) = self.theorem_case {
            writeln!(f, "theorem_case = {c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "problem = quadratic\nschedule = inverse_k\nsf = uniform_root\nsf.c1 = 0.3\nsf.c2 = 0.8\niterations = 1000\n";

    fn err_key(text: &str) -> (usize, String) {
        match parse_config(text).unwrap_err() {
            Error::Parse { line, key, .. } => (line, key),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.n_seeds, 40);
        assert_eq!(c.eval_every, 10);
        assert_eq!(c.checkpoints, Checkpoints::Auto);
        assert_eq!(c.eta, EtaSetting::Auto);
        assert_eq!(c.sf, SfSpec::UniformRoot { c1: 0.3, c2: 0.8 });
        assert_eq!(parse_config(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn round_trip_full() {
        let text = "# a comment\nproblem = logreg  # trailing\nproblem.n = 50\nproblem.d = 3\nproblem.reg = 0.01\n\
                    schedule = inverse_sqrt_k\nschedule.eta = 0.123456789012345678\nsf = constant\nsf.value = 0.7\n\
                    iterations = 95\neval_every = 7\nn_seeds = 3\nmaster_seed = 18446744073709551615\n\
                    checkpoints = 7, 14, 95\nout_dir = /tmp/x y\ntheorem_case = 1.2\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.theorem_case, Some(TheoremCase::Case12));
        assert_eq!(c.master_seed, u64::MAX);
        let s = c.to_string();
        let back = parse_config(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_string(), s);
    }

    #[test]
    fn ordering_violation_names_c2() {
        let text = MINIMAL
            .replace("sf.c1 = 0.3", "sf.c1 = 0.8")
            .replace("sf.c2 = 0.8", "sf.c2 = 0.3");
        assert_eq!(err_key(&text), (5, "sf.c2".into()));
    }

    #[test]
    fn errors_name_key_and_line() {
        assert_eq!(err_key(&format!("{MINIMAL}bogus = 1\n")), (7, "bogus".into()));
        assert_eq!(err_key(&format!("{MINIMAL}problem.n = 4\n")), (7, "problem.n".into()));
        assert_eq!(
            err_key(&MINIMAL.replace("iterations = 1000", "iterations = ten")),
            (6, "iterations".into())
        );
        assert_eq!(err_key(&MINIMAL.replace("inverse_k", "cosine")), (2, "schedule".into()));
        assert_eq!(err_key(&format!("{MINIMAL}iterations = 5\n")), (7, "iterations".into()));
        assert_eq!(err_key(&format!("{MINIMAL}checkpoints = 10, 5\n")).1, "checkpoints");
        assert_eq!(err_key(&format!("{MINIMAL}problem.cond = 0.5\n")).1, "problem.cond");
        assert_eq!(err_key(&MINIMAL.replace("iterations = 1000\n", "")).1, "iterations");
        assert_eq!(err_key(&format!("{MINIMAL}sf.value = 1\n")).1, "sf.value");
        assert_eq!(err_key("problem quadratic\n"), (1, "problem quadratic".into()));
    }

    #[test]
    fn auto_eta_and_checkpoints() {
        let c = parse_config(MINIMAL).unwrap();
        let p = c.problem.build().unwrap();
        let s = c.step_schedule(&p).unwrap();
        assert_eq!(s.eta, 1.0 / (p.b * p.l));
        let ck = c.checkpoint_list();
        assert_eq!(ck.len(), 10);
        assert_eq!(*ck.last().unwrap(), 1000);
    }
}
