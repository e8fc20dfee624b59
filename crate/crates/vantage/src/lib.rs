//! Active viewpoint selection for monocular 3D human pose estimation.
//!
//! A moving camera observes a person; each control cycle the library fuses
//! noisy 2D and hip-relative 3D joint detections over a sliding window of
//! frames into a space-time MAP pose estimate, forecasts the subject's
//! near-future motion, and scores candidate camera placements by the
//! uncertainty a view taken from there would leave. The posterior covariance
//! is approximated by the inverse Hessian of the pose energy (a Laplace
//! approximation); the next view is the candidate whose covariance trace is
//! smallest. Predefined baselines (random, constant rotation, constant
//! angle, and an exhaustive oracle) and a closed-loop simulation harness
//! support desk-scale evaluation, either with free "teleporting" cameras, a
//! fixed multi-camera rig, or a simulated drone with a fitted flight model.
//!
//! ## Crate layout
//!
//! - [`skeleton`]: the 15-joint pose representation, bone topology, and the
//!   mean per-joint error metric.
//! - [`geometry`]: pinhole projection, back-projection, look-at cameras.
//! - [`motion`]: ground-truth motion sequences (synthetic generators and a
//!   CSV format).
//! - [`sensing`]: the noisy-ground-truth measurement oracle with
//!   reproducible, candidate-keyed noise streams.
//! - [`estimator`]: the window energy, its analytic gradient, first-order
//!   minimization, initialization, and bone-length calibration.
//! - [`planner`]: pose/measurement forecasting, Hessian-based uncertainty
//!   scores, candidate generation, and the selection policies.
//! - [`flight`]: the constant-acceleration flight model, its least-squares
//!   identification, and the reference drone dynamics.
//! - [`harness`]: experiment configs, the closed control loop, sweeps, and
//!   CSV/manifest export.
//!
//! ## Runnable examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --release --example project_and_back_project
//! cargo run --release --example synthesize_motion
//! cargo run --release --example calibrate_skeleton
//! cargo run --release --example estimate_window
//! cargo run --release --example uncertainty_ring
//! cargo run --release --example plan_next_view
//! cargo run --release --example fit_flight_model
//! cargo run --release --example simulate_flight
//! cargo run --release --example policy_shootout
//! ```
//!
//! The `vantage` binary wraps the harness as a CLI with `calibrate`, `run`,
//! `sweep`, and `ablate` subcommands.

pub mod error;
pub mod estimator;
pub mod flight;
pub mod geometry;
pub mod harness;
pub mod motion;
pub mod optimize;
pub mod planner;
pub mod sensing;
pub mod skeleton;

pub use error::{Error, Result};
pub use estimator::{EnergyWeights, EstimationWindow};
pub use geometry::{CameraPose, Intrinsics};
pub use harness::{run_experiment, ExperimentConfig, Mode, RunResult};
pub use planner::{CandidateView, PolicyKind, UncertaintyReport};
pub use sensing::NoiseModel;
pub use skeleton::{mpjpe, BoneLengths, BoneTopology, Pose};
