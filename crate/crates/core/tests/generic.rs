//! The numeric core instantiated at `f32`.

use slrlab::harness::{attach_g_series, envelope_for_trajectory};
use slrlab::optimizer::run;
use slrlab::problems::{make_quadratic, make_rosenbrock};
use slrlab::stats::welch_t;
use slrlab::validator::check_theorem_case;
use slrlab::{RunOptions, ScheduleFamily, SfSpec, StepSizeSchedule, TheoremCase};

#[test]
fn single_precision_pipeline() {
    let p = make_quadratic::<f32>(5, 10.0, 0.0, 0).unwrap();
    let sched = StepSizeSchedule::new(ScheduleFamily::InverseK, 1.0 / (p.b * p.l)).unwrap();
    let sf = SfSpec::uniform_root(0.3f32, 0.8).unwrap();
    let mut t = run(&p, &sched, &sf, &RunOptions::new(2_000, 10, 4)).unwrap();
    assert!(!t.truncated);
    assert!(t.loss.last().unwrap() < &t.loss[0]);
    attach_g_series(&mut t, &sched).unwrap();
    assert_eq!(t.g_series[1], t.iterate_grad_sq[0]);

    let profile = sf.moment_profile(2_000).unwrap();
    let reports = check_theorem_case(&profile, TheoremCase::Case12, p.b, p.l, &sched, 2_000).unwrap();
    assert!(reports.iter().all(|r| r.holds), "{reports:?}");
    let env = envelope_for_trajectory(TheoremCase::Case12, &sf, &sched, &t, true).unwrap();
    assert!(env.values.iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn single_and_double_precision_agree_roughly() {
    let p32 = make_rosenbrock::<f32>(0.0).unwrap();
    let p64 = make_rosenbrock::<f64>(0.0).unwrap();
    let s32 = StepSizeSchedule::new(ScheduleFamily::InverseSqrtK, 1e-4f32).unwrap();
    let s64 = StepSizeSchedule::new(ScheduleFamily::InverseSqrtK, 1e-4f64).unwrap();
    let mut o32 = RunOptions::new(500, 50, 1);
    o32.x0 = Some(vec![-1.2f32, 1.0]);
    let mut o64 = RunOptions::new(500, 50, 1);
    o64.x0 = Some(vec![-1.2f64, 1.0]);
    let a = run(&p32, &s32, &SfSpec::constant(1.0f32).unwrap(), &o32).unwrap();
    let b = run(&p64, &s64, &SfSpec::constant(1.0f64).unwrap(), &o64).unwrap();
    for (x, y) in a.loss.iter().zip(&b.loss) {
        assert!((*x as f64 - y).abs() <= 1e-3 * y.abs().max(1.0));
    }

    let w = welch_t::<f32>(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
    assert!((w.p - 0.2878).abs() < 1e-3);
}
