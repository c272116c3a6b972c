use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BASE: &str =
    "problem = quadratic\nproblem.dim = 4\nproblem.cond = 10\nproblem.sigma = 0.1\nschedule = inverse_k\n\
iterations = 500\neval_every = 10\nn_seeds = 3\nmaster_seed = 5\n";

fn slrlab(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slrlab"));
    cmd.args(args).env_remove("SLRLAB_SEED");
    if let Some(s) = seed {
        cmd.env("SLRLAB_SEED", s);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn umslr(dir: &Path) -> String {
    write(
        dir,
        "umslr.cfg",
        &format!("{BASE}sf = uniform_root\nsf.c1 = 0.3\nsf.c2 = 0.8\n"),
    )
}

#[test]
fn validate_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let good = umslr(tmp.path());
    let out = slrlab(&["validate", "--config", &good], None);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("cases holding: case12"), "{stdout}");
    assert!(stdout.contains("monotonicity case (b)"));

    // A constant schedule has a divergent sum of squares.
    let constant = write(
        tmp.path(),
        "constant.cfg",
        &format!("{}sf = constant\n", BASE.replace("inverse_k", "constant")),
    );
    let out = slrlab(&["validate", "--config", &constant], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL sum eta^2 < inf"));

    let bad = write(
        tmp.path(),
        "bad.cfg",
        &format!("{BASE}sf = uniform_root\nsf.c1 = 0.8\nsf.c2 = 0.3\n"),
    );
    let out = slrlab(&["validate", "--config", &bad], None);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sf.c2") && stderr.contains("line 12"), "{stderr}");

    let missing = tmp.path().join("missing.cfg");
    let out = slrlab(&["validate", "--config", missing.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(slrlab(&["validate"], None).status.code(), Some(1));
    assert_eq!(slrlab(&["--help"], None).status.code(), Some(0));
}

#[test]
fn run_is_deterministic_and_honours_seed_env() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = umslr(tmp.path());
    let dirs: Vec<_> = ["a", "b", "c", "d"].iter().map(|d| tmp.path().join(d)).collect();
    for (d, seed) in dirs.iter().zip([Some("9"), Some("9"), Some("10"), None]) {
        let out = slrlab(&["run", "--config", &cfg, "--out", d.to_str().unwrap()], seed);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = |d: &Path, i: usize| fs::read(d.join(format!("trajectory_{i:03}.csv"))).unwrap();
    for i in 0..3 {
        assert_eq!(csv(&dirs[0], i), csv(&dirs[1], i));
        assert_ne!(csv(&dirs[0], i), csv(&dirs[2], i));
    }
    assert!(!dirs[0].join("trajectory_003.csv").exists());
    let meta = fs::read_to_string(dirs[0].join("metadata.txt")).unwrap();
    assert!(meta.contains("master_seed = 9") && meta.contains("chacha8"));
    let meta = fs::read_to_string(dirs[3].join("metadata.txt")).unwrap();
    assert!(meta.contains("master_seed = 5"));
    let text = String::from_utf8(csv(&dirs[0], 0)).unwrap();
    assert!(text.starts_with("k,loss,grad_norm_sq,min_grad_sq,g_k,eta_k,u_k,sum_eta,envelope_det,envelope_case\n"));
    assert_eq!(text.lines().count(), 1 + 51);

    let bad_seed = slrlab(
        &["run", "--config", &cfg, "--out", dirs[0].to_str().unwrap()],
        Some("minus one"),
    );
    assert_eq!(bad_seed.status.code(), Some(1));

    let svg = tmp.path().join("plot.svg");
    let out = slrlab(
        &[
            "plot",
            "--in",
            dirs[0].to_str().unwrap(),
            "--out",
            svg.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let svg = fs::read_to_string(svg).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3 + 1);
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = slrlab(&["plot", "--in", empty.to_str().unwrap(), "--out", "x.svg"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_and_envelope_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let a = umslr(tmp.path());
    let b = write(tmp.path(), "det.cfg", &format!("{BASE}sf = constant\n"));
    let out_dir = tmp.path().join("cmp");
    let out = slrlab(
        &[
            "compare",
            "--config-a",
            &a,
            "--config-b",
            &b,
            "--out",
            out_dir.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("identical across arms at every iteration (3 seeds x 500 steps)"));
    let report = fs::read_to_string(out_dir.join("report_min_grad_sq.csv")).unwrap();
    let parsed = slrlab::ComparisonReport64::from_csv(&report).unwrap();
    assert!(parsed.paired && parsed.method == "welch" && parsed.correction == "bonferroni");

    let single = write(
        tmp.path(),
        "single.cfg",
        &format!("{}sf = constant\n", BASE.replace("n_seeds = 3", "n_seeds = 1")),
    );
    let out = slrlab(
        &[
            "compare",
            "--config-a",
            &single,
            "--config-b",
            &b,
            "--out",
            out_dir.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(1));

    let env_dir = tmp.path().join("env");
    let out = slrlab(
        &[
            "envelope",
            "--config",
            &a,
            "--case",
            "case12",
            "--out",
            env_dir.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let diag = fs::read_to_string(env_dir.join("diagnostic.txt")).unwrap();
    assert!(diag.contains("k_lo = 10") && diag.contains("k_hi = 500") && diag.contains("verdict = "));
    assert!(env_dir.join("envelope.csv").exists() && env_dir.join("conditions.csv").exists());

    // E - Var <= 0 at k = 1 for this factor, so the case11a envelope is undefined.
    let wide = write(
        tmp.path(),
        "wide.cfg",
        &format!(
            "{}sf = uniform_root\nsf.c1 = 0.001\nsf.c2 = 40\n",
            BASE.replace("eval_every = 10", "eval_every = 1")
        ),
    );
    let out = slrlab(
        &[
            "envelope",
            "--config",
            &wide,
            "--case",
            "case11a",
            "--out",
            env_dir.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    let out = slrlab(
        &[
            "envelope",
            "--config",
            &a,
            "--case",
            "nonsense",
            "--out",
            env_dir.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
}
