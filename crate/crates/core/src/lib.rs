//! Stochastic gradient descent with a multiplicative stochastic learning rate.
//!
//! The step at iteration `k` is `x_{k+1} = x_k - eta_k * u_k * g_k`, where
//! `eta_k` is a deterministic schedule and `u_k` a random stochasticity factor.
//! The crate provides the factor families and their exact moments, checks of
//! the step-size and moment conditions that certify an almost-sure rate, the
//! rate envelopes themselves, synthetic smooth test problems with exact
//! constants, and a seeded multi-run comparison harness with Welch t-tests.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases
//! below fix the common double-precision instantiation.

pub mod commands;
pub mod config;
pub mod error;
pub mod harness;
pub mod lambert;
pub mod optimizer;
pub mod output;
pub mod problems;
pub mod rng;
pub mod scalar;
pub mod sf;
pub mod stats;
pub mod validator;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use harness::{LittleODiagnostic, RateEnvelope, Verdict};
pub use optimizer::{RunOptions, ScheduleFamily, StepSizeSchedule, Trajectory};
pub use problems::{GradientSample, ProblemSpec};
pub use scalar::Scalar;
pub use sf::{MomentProfile, Monotonicity, SfSpec};
pub use stats::{ComparisonReport, RunSet};
pub use validator::{ConditionReport, TheoremCase};

pub type SfSpec64 = SfSpec<f64>;
pub type MomentProfile64 = MomentProfile<f64>;
pub type StepSizeSchedule64 = StepSizeSchedule<f64>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type RateEnvelope64 = RateEnvelope<f64>;
pub type LittleODiagnostic64 = LittleODiagnostic<f64>;
pub type RunSet64 = RunSet<f64>;
pub type ComparisonReport64 = ComparisonReport<f64>;
