//! The `slrlab` subcommands. Each computes everything first, then writes its
//! output files, and returns the text to print.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{read_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::harness::{attach_g_series, envelope_for_trajectory, little_o_diagnostic, RateEnvelope};
use crate::optimizer::{run, RunOptions, StepSizeSchedule, Trajectory};
use crate::output::{read_trajectory_csv, render_svg, trajectory_csv, write_file, write_report, PlotLabels, Series};
use crate::problems::ProblemSpec;
use crate::rng::PRNG_ALGORITHM;
use crate::sf::SfSpec;
use crate::stats::{
    compare, derive_seeds, first_stream_mismatch, run_multi_seed, Metric, Pairing, RunSet, DEFAULT_FWER,
};
use crate::validator::{
    all_hold, check_assumption2, check_theorem_case, classify_prop1, reports_to_csv, ConditionReport, TheoremCase,
};

/// Result of a command that completed without a runtime error.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// False when a validation check failed (exit code 1).
    pub passed: bool,
    pub stdout: String,
}

/// Reads a config and applies the `SLRLAB_SEED` override.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = read_config(path)?;
    cfg.apply_seed_env()?;
    Ok(cfg)
}

struct Setup {
    problem: ProblemSpec<f64>,
    schedule: StepSizeSchedule<f64>,
    sf: SfSpec<f64>,
    opts: RunOptions<f64>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let problem = cfg.problem.build()?;
    let schedule = cfg.step_schedule(&problem)?;
    Ok(Setup {
        problem,
        schedule,
        sf: cfg.sf,
        opts: RunOptions::new(cfg.iterations, cfg.eval_every, 0),
    })
}

fn case_reports(s: &Setup, case: TheoremCase, horizon: usize) -> Result<Vec<ConditionReport>> {
    let profile = s.sf.moment_profile(horizon)?;
    check_theorem_case(&profile, case, s.problem.b, s.problem.l, &s.schedule, horizon)
}

fn push_reports(out: &mut String, title: &str, reports: &[ConditionReport]) {
    let _ = writeln!(out, "[{title}]");
    for r in reports {
        let _ = writeln!(out, "{}", r.to_line());
    }
}

fn header(cfg: &ExperimentConfig, s: &Setup) -> String {
    format!(
        "problem {} (dim {}, L = {:e}, B = {:e}), schedule {} eta = {:e}, iterations {}\n",
        s.problem.name, s.problem.dim, s.problem.l, s.problem.b, s.schedule.family, s.schedule.eta, cfg.iterations
    )
}

/// Step-size conditions, factor classification and rate-case preconditions.
///
/// With `theorem_case` set, that case must hold; otherwise every case is
/// checked and at least one must hold.
pub fn validate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = setup(cfg)?;
    let horizon = cfg.iterations.max(2);
    let mut out = header(cfg, &s);
    let a2 = check_assumption2(&s.schedule, horizon)?;
    push_reports(&mut out, "step sizes", &a2);
    if let SfSpec::UniformRoot { c1, c2 } = s.sf {
        let c = classify_prop1(c1, c2)?;
        let _ = writeln!(
            out,
            "[factor]\nmonotonicity case ({}) mean {} case-c boundary {} interval variant {}",
            c.case,
            c.mean_direction,
            c.case_c_boundary.map_or("n/a".to_string(), |b| format!("{b:.12}")),
            c.in_interval_variant
        );
    }
    let cases: Vec<TheoremCase> = match cfg.theorem_case {
        Some(c) => vec![c],
        None => TheoremCase::ALL.to_vec(),
    };
    let mut holding = Vec::new();
    for case in &cases {
        let reports = match case_reports(&s, *case, horizon) {
            Ok(r) => r,
            Err(Error::Domain(msg)) => vec![ConditionReport::new("envelope defined", false, None, msg)],
            Err(e) => return Err(e),
        };
        push_reports(&mut out, &format!("case {case}"), &reports);
        if all_hold(&reports) {
            holding.push(case.as_str());
        }
    }
    let passed = all_hold(&a2) && !holding.is_empty();
    let _ = writeln!(
        out,
        "cases holding: {}\n{}",
        if holding.is_empty() {
            "none".to_string()
        } else {
            holding.join(", ")
        },
        if passed { "VALID" } else { "INVALID" }
    );
    Ok(Outcome { passed, stdout: out })
}

fn run_seeds(s: &Setup, cfg: &ExperimentConfig) -> Result<(Vec<u64>, Vec<Trajectory<f64>>)> {
    if cfg.n_seeds >= 2 {
        let set = run_multi_seed(&s.problem, &s.schedule, &s.sf, &s.opts, cfg.n_seeds, cfg.master_seed)?;
        Ok((set.seeds, set.trajectories))
    } else {
        let seeds = derive_seeds(cfg.master_seed, 1);
        let mut opts = s.opts.clone();
        opts.seed = seeds[0];
        let t = run(&s.problem, &s.schedule, &s.sf, &opts)?;
        Ok((seeds, vec![t]))
    }
}

/// Envelope of `case` if it is defined along the trajectory.
fn try_envelope(
    case: TheoremCase,
    s: &Setup,
    traj: &Trajectory<f64>,
    certified: bool,
) -> Result<Option<RateEnvelope<f64>>> {
    match envelope_for_trajectory(case, &s.sf, &s.schedule, traj, certified) {
        Ok(e) => Ok(Some(e)),
        Err(Error::Domain(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn metadata(cfg: &ExperimentConfig, s: &Setup, seeds: &[u64], trajs: &[&Trajectory<f64>]) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "prng = {PRNG_ALGORITHM}");
    let _ = writeln!(
        m,
        "config_digest = {}",
        trajs.first().map_or("", |t| t.config_digest.as_str())
    );
    let _ = writeln!(m, "master_seed = {}", cfg.master_seed);
    let _ = writeln!(m, "n_seeds = {}", seeds.len());
    let _ = writeln!(m, "eta = {:?}", s.schedule.eta);
    let _ = writeln!(
        m,
        "gradient_tracking = every iterate for g_k; eval points every {} steps plus the final iterate",
        cfg.eval_every
    );
    for (i, (seed, t)) in seeds.iter().zip(trajs).enumerate() {
        let _ = writeln!(
            m,
            "seed_{i:03} = {seed} steps={} truncated={} certified={}{}",
            t.iterations,
            t.truncated,
            t.certified,
            t.truncation_reason
                .as_deref()
                .map_or(String::new(), |r| format!(" reason={r}"))
        );
    }
    m
}

/// Runs every seed of one config and writes `trajectory_NNN.csv`,
/// `metadata.txt` and the resolved `config.txt` into `out`.
pub fn run_command(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let s = setup(cfg)?;
    let case_ok = match cfg.theorem_case {
        Some(case) => match case_reports(&s, case, cfg.iterations) {
            Ok(r) => all_hold(&r),
            Err(Error::Domain(_)) => false,
            Err(e) => return Err(e),
        },
        None => false,
    };
    let (seeds, mut trajs) = run_seeds(&s, cfg)?;
    let files = trajs
        .par_iter_mut()
        .map(|t| {
            attach_g_series(t, &s.schedule)?;
            let det = try_envelope(TheoremCase::DeterministicBaseline, &s, t, t.certified)?;
            let case = match cfg.theorem_case {
                Some(c) => try_envelope(c, &s, t, case_ok && t.certified)?,
                None => None,
            };
            Ok(trajectory_csv(t, det.as_ref(), case.as_ref()))
        })
        .collect::<Result<Vec<String>>>()?;

    let refs: Vec<&Trajectory<f64>> = trajs.iter().collect();
    let mut stdout = header(cfg, &s);
    for (i, t) in trajs.iter().enumerate() {
        let last = t.loss.len() - 1;
        let _ = writeln!(
            stdout,
            "seed {i:03}: steps {} final loss {:.6e} min grad^2 {:.6e}{}",
            t.iterations,
            t.loss[last],
            t.min_grad_sq[last],
            if t.truncated { " (diverged)" } else { "" }
        );
    }
    for (i, text) in files.iter().enumerate() {
        write_file(&out.join(format!("trajectory_{i:03}.csv")), text)?;
    }
    write_file(&out.join("metadata.txt"), &metadata(cfg, &s, &seeds, &refs))?;
    write_file(&out.join("config.txt"), &cfg.to_string())?;
    let _ = writeln!(stdout, "wrote {} trajectories to {}", files.len(), out.display());
    Ok(Outcome { passed: true, stdout })
}

fn run_set(cfg: &ExperimentConfig) -> Result<(Setup, RunSet<f64>)> {
    let s = setup(cfg)?;
    let set = run_multi_seed(&s.problem, &s.schedule, &s.sf, &s.opts, cfg.n_seeds, cfg.master_seed)?;
    Ok((s, set))
}

/// Multi-seed comparison of two configs at the checkpoints of `a`, for both
/// the loss and the running minimum of the squared gradient norm.
///
/// Arms with the same seed list are compared paired, and their realized
/// gradient samples are checked for equality at every iteration.
pub fn compare_command(a: &ExperimentConfig, b: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    if a.iterations != b.iterations || a.eval_every != b.eval_every {
        return Err(Error::validation(
            "both configs need the same iterations and eval_every",
        ));
    }
    if a.n_seeds < 2 || b.n_seeds < 2 {
        return Err(Error::validation("compare needs n_seeds >= 2 in both configs"));
    }
    let (sa, set_a) = run_set(a)?;
    let (_, set_b) = run_set(b)?;
    let pairing = if set_a.seeds == set_b.seeds {
        Pairing::Paired
    } else {
        Pairing::Unpaired
    };
    let checkpoints = a.checkpoint_list();
    let reports = [Metric::Loss, Metric::MinGradSq]
        .iter()
        .map(|&m| compare(&set_a, &set_b, m, &checkpoints, pairing, DEFAULT_FWER))
        .collect::<Result<Vec<_>>>()?;
    let streams = match pairing {
        Pairing::Paired => match first_stream_mismatch(&set_a, &set_b)? {
            None => format!(
                "gradient streams: identical across arms at every iteration ({} seeds x {} steps)",
                set_a.seeds.len(),
                a.iterations
            ),
            Some((i, k)) => format!("gradient streams: differ at seed {i}, iteration {k}"),
        },
        Pairing::Unpaired => "gradient streams: unpaired (seed lists differ)".to_string(),
    };

    let mut summary = header(a, &sa);
    let _ = writeln!(summary, "{streams}");
    for r in &reports {
        summary.push('\n');
        summary.push_str(&r.summary());
    }
    for (r, m) in reports.iter().zip([Metric::Loss, Metric::MinGradSq]) {
        write_report(r, &out.join(format!("report_{m}.csv")))?;
    }
    write_file(&out.join("summary.txt"), &summary)?;
    let mut meta = String::new();
    let _ = writeln!(meta, "prng = {PRNG_ALGORITHM}");
    let _ = writeln!(
        meta,
        "pairing = {}",
        if pairing == Pairing::Paired {
            "paired"
        } else {
            "unpaired"
        }
    );
    let _ = writeln!(meta, "{streams}");
    let _ = writeln!(meta, "[a]\n{a}[b]\n{b}");
    write_file(&out.join("metadata.txt"), &meta)?;
    Ok(Outcome {
        passed: true,
        stdout: summary,
    })
}

/// Eval point used as the start of the diagnostic window: the largest eval
/// point `<= iterations / 100`, or the first positive one.
pub fn diagnostic_k_lo(eval_k: &[usize], iterations: usize) -> Option<usize> {
    let target = iterations / 100;
    let positive = || eval_k.iter().copied().filter(|&k| k >= 1);
    let mut below: Vec<usize> = positive().filter(|&k| k <= target).collect();
    below.pop().or_else(|| positive().next())
}

/// Envelope of `case` along the first seed's trajectory, with the little-o
/// trend diagnostic over `[iterations/100, iterations]`.
pub fn envelope_command(cfg: &ExperimentConfig, case: TheoremCase, out: &Path) -> Result<Outcome> {
    let s = setup(cfg)?;
    let reports = case_reports(&s, case, cfg.iterations)?;
    let mut opts = s.opts.clone();
    opts.seed = derive_seeds(cfg.master_seed, 1)[0];
    let mut traj = run(&s.problem, &s.schedule, &s.sf, &opts)?;
    attach_g_series(&mut traj, &s.schedule)?;
    let certified = all_hold(&reports) && traj.certified;
    let env = envelope_for_trajectory(case, &s.sf, &s.schedule, &traj, certified)?;
    let det = try_envelope(TheoremCase::DeterministicBaseline, &s, &traj, traj.certified)?;
    let min_grad: Vec<f64> = traj
        .eval_k
        .iter()
        .zip(&traj.min_grad_sq)
        .filter(|(&k, _)| k >= 1)
        .map(|(_, &m)| m)
        .collect();
    let k_hi = *traj.eval_k.last().unwrap_or(&0);
    let k_lo = diagnostic_k_lo(&traj.eval_k, traj.iterations)
        .ok_or_else(|| Error::validation("trajectory has no eval point with k >= 1"))?;
    let diag = if k_lo < k_hi {
        Some(little_o_diagnostic(&min_grad, &env, k_lo, k_hi)?)
    } else {
        None
    };

    let mut stdout = header(cfg, &s);
    push_reports(&mut stdout, &format!("case {case}"), &reports);
    let _ = writeln!(stdout, "certified: {certified}");
    let mut csv = String::from("k,min_grad_sq,envelope,ratio,mean,variance,sum_eta\n");
    for (i, &k) in env.ks.iter().enumerate() {
        let c = &env.components[i];
        let ratio = min_grad[i] / env.values[i];
        let _ = writeln!(
            csv,
            "{k},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            min_grad[i], env.values[i], ratio, c.mean, c.variance, c.sum_eta
        );
    }
    let mut diag_text = format!("case = {case}\ncertified = {certified}\nk_lo = {k_lo}\nk_hi = {k_hi}\n");
    match &diag {
        Some(d) => {
            let _ = writeln!(
                diag_text,
                "window_slope = {:.16e}\nr_lo = {:.16e}\nr_hi = {:.16e}\nverdict = {}",
                d.window_slope, d.r_lo, d.r_hi, d.verdict
            );
        }
        None => diag_text.push_str("verdict = inconclusive (horizon too short for a window)\n"),
    }
    stdout.push_str(&diag_text);

    write_file(&out.join("envelope.csv"), &csv)?;
    write_file(&out.join("diagnostic.txt"), &diag_text)?;
    write_file(&out.join("conditions.csv"), &reports_to_csv(&reports))?;
    write_file(
        &out.join("trajectory_000.csv"),
        &trajectory_csv(&traj, det.as_ref(), Some(&env)),
    )?;
    Ok(Outcome { passed: true, stdout })
}

fn trajectory_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trajectory_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Log-log plot of the running minimum of the squared gradient norm for each
/// trajectory in `dir`, with the envelopes of the first one.
pub fn plot_command(dir: &Path, svg_path: &Path) -> Result<Outcome> {
    let files = trajectory_files(dir)?;
    if files.is_empty() {
        return Err(Error::Runtime(format!(
            "no trajectory_*.csv files in {}",
            dir.display()
        )));
    }
    let mut series = Vec::new();
    for (i, f) in files.iter().enumerate() {
        let table = read_trajectory_csv(f)?;
        let pick = |name: &str| -> Vec<(f64, f64)> {
            table
                .k
                .iter()
                .zip(table.column(name).unwrap_or(&[]))
                .filter_map(|(&k, v)| v.map(|v| (k as f64, v)))
                .collect()
        };
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
        series.push(Series {
            name: format!("min grad^2 {}", stem.trim_start_matches("trajectory_")),
            points: pick("min_grad_sq"),
        });
        if i == 0 {
            for (col, name) in [
                ("envelope_det", "deterministic envelope"),
                ("envelope_case", "case envelope"),
            ] {
                let pts = pick(col);
                if !pts.is_empty() {
                    series.push(Series {
                        name: name.into(),
                        points: pts,
                    });
                }
            }
        }
    }
    let labels = PlotLabels {
        title: format!("{}", dir.display()),
        x_label: "iteration k".into(),
        y_label: "min_{t<=k} |grad f(x_t)|^2".into(),
        log_x: true,
        log_y: true,
    };
    render_svg(&series, &labels, svg_path)?;
    Ok(Outcome {
        passed: true,
        stdout: format!("wrote {} series to {}\n", series.len(), svg_path.display()),
    })
}
