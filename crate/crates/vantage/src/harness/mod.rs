//! Closed-loop experiment driver: calibration, per-frame estimation,
//! policy-driven view selection, simulated camera motion, and metrics.

mod config;
mod export;
mod sweep;

pub use config::{ExperimentConfig, Mode, SequenceSource};
pub use export::{export_run, export_summary, read_summary};
pub use sweep::{ablate, run_seeds, sweep, AblationReport, SweepRow};

use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{
    calibrate, extrapolate_next_pose, fit_lift_scale, initialize, minimize_window,
    EstimationWindow, FrameObservation,
};
use crate::flight::{
    fit_params, DroneKinematicState, FlightLogStep, FlightModelParams, ReferenceDroneState,
    ReferenceDynamics, V_MAX,
};
use crate::geometry::{look_at, CameraPose, Intrinsics};
use crate::motion::MotionSequence;
use crate::optimize::OptimizeOpts;
use crate::planner::{
    bearing_of, generate_fixed_candidates, generate_flight_candidates, generate_ring_candidates,
    mark_visibility, policy, score_candidates, select_best, CandidateView, PolicyKind, ScoreOpts,
    FLIGHT_CENTER, FLIGHT_LEFT, FLIGHT_RIGHT,
};
use crate::sensing::{detect_2d, detect_3d_relative, stream_rng, Detection2D, NoiseModel};
use crate::skeleton::{mpjpe, BoneLengths, BoneTopology};

/// Salt for the policy decision stream (the random baseline).
const SALT_POLICY: u64 = 0x70;
/// Candidate-id offset for calibration measurements, keeping their noise
/// streams disjoint from candidate rollouts.
const CALIB_CANDIDATE_BASE: u64 = 1_000_000;

/// One control cycle's outcome.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// Current (most recent observed) frame of this cycle.
    pub frame: usize,
    /// Frame whose error is reported (middle of the window).
    pub mid_frame: usize,
    /// Chosen candidate id.
    pub candidate: usize,
    /// Uncertainty score of the chosen candidate, when it was computed.
    pub score: Option<f64>,
    pub mpjpe_mid: f64,
    pub mpjpe_cur: f64,
    pub cam_position: Vector3<f64>,
    /// Bearing of the measuring camera relative to the true subject hip.
    pub cam_azimuth: f64,
    pub cam_elevation: f64,
}

/// Per-candidate diagnostics for one cycle (written when
/// `dump_candidates` is set).
#[derive(Debug, Clone)]
pub struct CandidateRecord {
    pub frame: usize,
    pub candidate: usize,
    pub azimuth: f64,
    pub elevation: f64,
    pub visible: bool,
    pub score: Option<f64>,
    /// Realized next-frame error of actually moving there (oracle rollouts).
    pub realized_mpjpe: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<RunRecord>,
    pub candidate_records: Vec<CandidateRecord>,
    /// Mean middle-frame error over the recorded cycles.
    pub mean_mpjpe: f64,
    /// Sample standard deviation of the middle-frame error across cycles.
    pub std_mpjpe: f64,
    pub calib: BoneLengths,
    pub flight_params: Option<FlightModelParams>,
    /// Wall-clock duration; reported but never exported to files.
    pub elapsed_seconds: f64,
    /// The configuration, echoed verbatim.
    pub manifest: Vec<(String, String)>,
}

fn at_frame(frame: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Run {
        frame,
        source: Box::new(e),
    }
}

/// Position on the candidate sphere around `center` at azimuth slot `slot`.
fn sphere_point(center: &Vector3<f64>, radius: f64, height: f64, slot: usize, count: usize) -> Vector3<f64> {
    let dz = height - center.z;
    let rho = (radius * radius - dz * dz).max(0.0025 * radius * radius).sqrt();
    let az = 2.0 * std::f64::consts::PI * slot as f64 / count as f64;
    Vector3::new(center.x + rho * az.cos(), center.y + rho * az.sin(), height)
}

/// The default fixed rig: 14 cameras at varied azimuths, distances, and
/// heights, all aimed at the subject's starting hip.
pub fn default_fixed_rig(subject: &Vector3<f64>) -> Vec<CameraPose> {
    let radii = [4.5, 6.0, 7.5, 9.0];
    let heights = [1.0, 1.9, 2.8];
    (0..14)
        .map(|i| {
            let az = 2.0 * std::f64::consts::PI * i as f64 / 14.0;
            let r = radii[i % radii.len()];
            let h = heights[i % heights.len()];
            let pos = Vector3::new(subject.x + r * az.cos(), subject.y + r * az.sin(), h);
            look_at(&pos, subject).expect("rig cameras are never degenerate")
        })
        .collect()
}

/// Command script used to identify the flight model before a flight run.
fn identification_commands(n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|i| {
            let th = 0.15 * i as f64;
            Vector3::new(-th.sin(), th.cos(), 0.12 * (0.3 * th).cos()).normalize()
        })
        .collect()
}

struct FlightState {
    dynamics: ReferenceDynamics,
    state: ReferenceDroneState,
    params: FlightModelParams,
    /// Model-side acceleration memory, advanced with each issued command.
    model_a_prev: Vector3<f64>,
}

impl FlightState {
    fn kinematic(&self) -> DroneKinematicState {
        DroneKinematicState {
            position: self.state.position,
            velocity: self.state.velocity,
            a_previous: self.model_a_prev,
        }
    }

    fn command(&mut self, direction: &Vector3<f64>) {
        self.state = self.dynamics.step(&self.state, direction);
        self.model_a_prev = direction * (self.params.alpha * self.params.a_input_magnitude)
            + self.model_a_prev * (1.0 - self.params.alpha);
    }
}

/// Runs calibration for a config: `views` detections of the sequence's first
/// frame from a ring, then the multi-view optimization.
pub fn run_calibration(
    config: &ExperimentConfig,
    seq: &MotionSequence,
    topo: &BoneTopology,
    k: &Intrinsics,
) -> Result<BoneLengths> {
    let noise = NoiseModel::new(config.sigma_2d, config.sigma_3d, config.seed);
    let static_pose = &seq.frames[0];
    let hip = static_pose.hip();
    let frames: Vec<(Detection2D, CameraPose)> = (0..config.calib_views)
        .map(|i| {
            let pos = sphere_point(&hip, config.ring_radius, config.ring_height, i, config.calib_views);
            let cam = look_at(&pos, &hip)?;
            let det = detect_2d(
                static_pose,
                &cam,
                k,
                &noise,
                i,
                CALIB_CANDIDATE_BASE + i as u64,
                f64::INFINITY,
            )?;
            Ok((det, cam))
        })
        .collect::<Result<_>>()?;
    Ok(calibrate(&frames, k, config.recon_weights.projection, topo)?.bone_lengths)
}

/// Executes one closed-loop experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let start = Instant::now();
    let topo = BoneTopology::human();
    let k = Intrinsics::default_vga();
    let noise = NoiseModel::new(config.sigma_2d, config.sigma_3d, config.seed);
    let dt = 1.0 / config.rate_hz;
    let opts = OptimizeOpts {
        max_iters: config.opt_max_iters,
        tol_g: config.opt_tol_g,
        ..OptimizeOpts::default()
    };
    let score_opts = ScoreOpts {
        future_only: config.score_future_only,
        ..ScoreOpts::default()
    };

    // Truth must cover one frame beyond the loop for candidate rollouts.
    let seq = config
        .sequence
        .build(config.frames + config.horizon + 1, config.rate_hz)?;

    let calib = run_calibration(config, &seq, &topo, &k)?;

    let rig = match config.mode {
        Mode::FixedCameras => default_fixed_rig(&seq.frames[0].hip()),
        _ => Vec::new(),
    };

    // Initial view.
    let truth_hip0 = seq.frames[0].hip();
    let start_slot = config.start_slot % config.ring_count.max(1);
    let (mut camera, mut flight): (CameraPose, Option<FlightState>) = match config.mode {
        Mode::Teleport => {
            let pos = sphere_point(
                &truth_hip0,
                config.ring_radius,
                config.ring_height,
                start_slot,
                config.ring_count,
            );
            (look_at(&pos, &truth_hip0)?, None)
        }
        Mode::FixedCameras => (rig[config.start_slot % rig.len()].clone(), None),
        Mode::Flight => {
            let pos = sphere_point(
                &truth_hip0,
                config.ring_radius,
                config.ring_height,
                start_slot,
                config.ring_count,
            );
            let dynamics = ReferenceDynamics {
                beta: 0.7,
                command_speed: V_MAX,
                dt,
            };
            // Identify the flight model from a scripted pre-run flight.
            let params = if config.use_flight_model {
                let mut ident = ReferenceDroneState::at_rest(pos);
                let mut log = Vec::new();
                for cmd in identification_commands(60) {
                    log.push(FlightLogStep {
                        command: cmd,
                        position: ident.position,
                    });
                    ident = dynamics.step(&ident, &cmd);
                }
                fit_params(&log, dt)?
            } else {
                FlightModelParams {
                    dt,
                    ..FlightModelParams::default()
                }
            };
            let state = FlightState {
                dynamics,
                state: ReferenceDroneState::at_rest(pos),
                params,
                model_a_prev: Vector3::zeros(),
            };
            (look_at(&pos, &truth_hip0)?, Some(state))
        }
    };
    let fitted_params = flight
        .as_ref()
        .filter(|_| config.use_flight_model)
        .map(|f| f.params);

    let mut window = EstimationWindow::new(config.k_past, config.horizon);
    let mut policy_rng = stream_rng(config.seed, 0, 0, SALT_POLICY);
    let mut rotation_slot = start_slot;
    let mut initial_bearing: Option<Vector3<f64>> = None;
    let mut current_cand: u64 = match config.mode {
        Mode::Flight => FLIGHT_CENTER as u64,
        _ => start_slot as u64,
    };

    let mut records = Vec::new();
    let mut candidate_records = Vec::new();

    for t in 0..config.frames {
        let wrap = at_frame(t);
        let truth = &seq.frames[t];

        // Measure from the current view.
        let det2d = detect_2d(
            truth,
            &camera,
            &k,
            &noise,
            t,
            current_cand,
            config.measurement_margin_px,
        )
        .map_err(&wrap)?;
        let det3d = detect_3d_relative(truth, &camera, &noise, config.scale_corruption, t, current_cand);

        // Estimate.
        let init_pose = if window.n_observed() == 0 {
            initialize(&det2d, &camera, &k).map_err(&wrap)?
        } else {
            extrapolate_next_pose(&window).expect("window has observed frames")
        };
        window.push_observed(
            t,
            init_pose,
            FrameObservation {
                detection2d: det2d,
                detection3d: det3d.clone(),
                camera: camera.clone(),
            },
        );
        window.lift_scale = fit_lift_scale(&det3d, &calib, &topo).map_err(&wrap)?;
        minimize_window(&mut window, &config.recon_weights, &calib, &topo, &k, &opts).map_err(&wrap)?;

        let mid = window.middle_observed().expect("nonempty window");
        let mid_frame = window.frames[mid].index;
        let mpjpe_mid = mpjpe(&window.frames[mid].pose, &seq.frames[mid_frame]);
        let current_idx = window
            .frames
            .iter()
            .rposition(|f| f.observation.is_some())
            .expect("nonempty window");
        let mpjpe_cur = mpjpe(&window.frames[current_idx].pose, truth);

        if std::env::var_os("VANTAGE_DEBUG").is_some() {
            let est_hip = window.frames[current_idx].pose.hip();
            let err = est_hip - truth.hip();
            let cam_d = (camera.position - truth.hip()).norm();
            let (cam_az, _) = bearing_of(&camera.position, &truth.hip());
            let per_frame: Vec<String> = window
                .frames
                .iter()
                .filter(|f| f.observation.is_some())
                .map(|f| {
                    let e = f.pose.hip() - seq.frames[f.index].hip();
                    format!("{:.2}", e.norm())
                })
                .collect();
            eprintln!(
                "t={t} cur={mpjpe_cur:.3} mid={mpjpe_mid:.3} hip_err=({:.2},{:.2},{:.2}) cam_dist={cam_d:.2} az={:.0} m={:.3} win=[{}]",
                err.x, err.y, err.z, cam_az.to_degrees(), window.lift_scale, per_frame.join(",")
            );
        }

        // Forecast and generate candidates.
        crate::planner::forecast_poses(
            &mut window,
            config.horizon,
            &config.recon_weights,
            &calib,
            &topo,
            &k,
        )
        .map_err(&wrap)?;
        let hips: Vec<Vector3<f64>> = window
            .frames
            .iter()
            .filter(|f| f.observation.is_none())
            .map(|f| f.pose.hip())
            .collect();

        let mut candidates = match config.mode {
            Mode::Teleport => generate_ring_candidates(
                &hips[0],
                config.ring_radius,
                config.ring_count,
                config.ring_height,
                config.horizon,
            )
            .map_err(&wrap)?,
            Mode::FixedCameras => generate_fixed_candidates(&rig, config.horizon),
            Mode::Flight => {
                let f = flight.as_ref().expect("flight state in flight mode");
                // The follow controller measures its distance to the actual
                // person (as the simulator's tracking layer does); only the
                // camera aim uses the estimator's prediction.
                generate_flight_candidates(
                    &f.kinematic(),
                    &f.params,
                    &truth.hip(),
                    &hips,
                    config.ring_radius,
                    config.altitude_min,
                    config.altitude_max,
                    config.use_flight_model,
                )
                .map_err(&wrap)?
            }
        };

        let warmup = t < config.k_past;
        let effective_policy = if warmup
            && matches!(config.policy, PolicyKind::Active | PolicyKind::Oracle)
        {
            // Bootstrap the window under constant rotation before the
            // estimate-dependent policies engage.
            PolicyKind::ConstantRotationCw
        } else {
            config.policy
        };

        let need_scores = (!warmup && config.policy == PolicyKind::Active)
            || (config.dump_candidates && !warmup);
        let need_rollouts = (!warmup && config.policy == PolicyKind::Oracle)
            || (config.dump_candidates && !warmup);

        if need_scores {
            score_candidates(
                &window,
                &mut candidates,
                &config.decision_weights,
                &calib,
                &topo,
                &k,
                &score_opts,
                config.candidate_margin_px,
            )
            .map_err(&wrap)?;
        } else {
            mark_visibility(&window, &mut candidates, &k, config.candidate_margin_px).map_err(&wrap)?;
        }

        let realized: Vec<Option<f64>> = if need_rollouts {
            rollout_candidates(config, &window, &candidates, flight.as_ref(), &seq, t, &calib, &topo, &k, &opts)
                .map_err(&wrap)?
        } else {
            vec![None; candidates.len()]
        };

        let choice = match effective_policy {
            PolicyKind::Active => select_best(&candidates),
            PolicyKind::Random => policy::select_random(&candidates, &mut policy_rng),
            PolicyKind::ConstantRotationCw | PolicyKind::ConstantRotationCcw => {
                let ccw = effective_policy == PolicyKind::ConstantRotationCcw;
                match config.mode {
                    Mode::Teleport => {
                        let count = config.ring_count;
                        rotation_slot = (rotation_slot + if ccw { 1 } else { count - 1 }) % count;
                        policy::select_slot(&candidates, rotation_slot, count)
                    }
                    Mode::FixedCameras => {
                        let count = rig.len();
                        rotation_slot = (rotation_slot + if ccw { 1 } else { count - 1 }) % count;
                        policy::select_slot(&candidates, rotation_slot, count)
                    }
                    Mode::Flight => {
                        let preferred = if ccw { FLIGHT_LEFT } else { FLIGHT_RIGHT };
                        if candidates[preferred].visible {
                            Ok(preferred)
                        } else {
                            candidates
                                .iter()
                                .position(|c| c.visible)
                                .ok_or(Error::NoVisibleCandidate)
                        }
                    }
                }
            }
            PolicyKind::ConstantAngle => {
                let bearing = initial_bearing.get_or_insert_with(|| {
                    let d = camera.position - hips[0];
                    d / d.norm()
                });
                policy::select_nearest_bearing(&candidates, &hips[0], bearing)
            }
            PolicyKind::Oracle => policy::select_oracle(&candidates, &realized),
        }
        .map_err(&wrap)?;
        let chosen = &candidates[choice];

        if !warmup {
            let (cam_azimuth, cam_elevation) = bearing_of(&camera.position, &truth.hip());
            records.push(RunRecord {
                frame: t,
                mid_frame,
                candidate: chosen.id,
                score: chosen.score,
                mpjpe_mid,
                mpjpe_cur,
                cam_position: camera.position,
                cam_azimuth,
                cam_elevation,
            });
            if config.dump_candidates {
                for (ci, cand) in candidates.iter().enumerate() {
                    let (azimuth, elevation) = bearing_of(&cand.cameras[0].position, &hips[0]);
                    candidate_records.push(CandidateRecord {
                        frame: t,
                        candidate: cand.id,
                        azimuth,
                        elevation,
                        visible: cand.visible,
                        score: cand.score,
                        realized_mpjpe: realized[ci],
                    });
                }
            }
        }

        // Move the camera.
        match config.mode {
            Mode::Teleport | Mode::FixedCameras => {
                camera = chosen.cameras[0].clone();
                current_cand = chosen.id as u64;
            }
            Mode::Flight => {
                let f = flight.as_mut().expect("flight state in flight mode");
                let cmd = chosen.direction.unwrap_or_else(Vector3::zeros);
                f.command(&cmd);
                camera = look_at(&f.state.position, &hips[0]).map_err(&wrap)?;
                current_cand = chosen.id as u64;
            }
        }
    }

    let n = records.len() as f64;
    let mean_mpjpe = records.iter().map(|r| r.mpjpe_mid).sum::<f64>() / n;
    let var = if records.len() > 1 {
        records
            .iter()
            .map(|r| (r.mpjpe_mid - mean_mpjpe).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };

    Ok(RunResult {
        records,
        candidate_records,
        mean_mpjpe,
        std_mpjpe: var.sqrt(),
        calib,
        flight_params: fitted_params,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        manifest: config.to_key_values(),
    })
}

/// Rolls out every visible candidate with the true next-frame measurement
/// (shared noise streams) and returns the realized current-frame error.
#[allow(clippy::too_many_arguments)]
fn rollout_candidates(
    config: &ExperimentConfig,
    window: &EstimationWindow,
    candidates: &[CandidateView],
    flight: Option<&FlightState>,
    seq: &MotionSequence,
    t: usize,
    calib: &BoneLengths,
    topo: &BoneTopology,
    k: &Intrinsics,
    opts: &OptimizeOpts,
) -> Result<Vec<Option<f64>>> {
    let t_next = t + 1;
    if t_next >= seq.len() {
        return Ok(vec![None; candidates.len()]);
    }
    let truth_next = &seq.frames[t_next];
    let noise = NoiseModel::new(config.sigma_2d, config.sigma_3d, config.seed);
    candidates
        .par_iter()
        .map(|cand| {
            if !cand.visible {
                return Ok(None);
            }
            // Where would the camera actually be after committing to this
            // candidate?
            let camera_next = match config.mode {
                Mode::Teleport | Mode::FixedCameras => cand.cameras[0].clone(),
                Mode::Flight => {
                    let f = flight.expect("flight state in flight mode");
                    let cmd = cand.direction.unwrap_or_else(Vector3::zeros);
                    let next = f.dynamics.step(&f.state, &cmd);
                    // Aim at the predicted hip, as the real next cycle will.
                    let target = window
                        .frames
                        .iter()
                        .find(|fr| fr.observation.is_none())
                        .map(|fr| fr.pose.hip())
                        .unwrap_or_else(|| window.frames.last().unwrap().pose.hip());
                    look_at(&next.position, &target)?
                }
            };
            let det2d = match detect_2d(
                truth_next,
                &camera_next,
                k,
                &noise,
                t_next,
                cand.id as u64,
                config.measurement_margin_px,
            ) {
                Ok(d) => d,
                Err(Error::SubjectNotVisible(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let det3d = detect_3d_relative(
                truth_next,
                &camera_next,
                &noise,
                config.scale_corruption,
                t_next,
                cand.id as u64,
            );
            let mut trial = window.clone();
            trial.clear_future();
            let init = extrapolate_next_pose(&trial).expect("window has observed frames");
            trial.push_observed(
                t_next,
                init,
                FrameObservation {
                    detection2d: det2d,
                    detection3d: det3d.clone(),
                    camera: camera_next,
                },
            );
            trial.lift_scale = fit_lift_scale(&det3d, calib, topo)?;
            minimize_window(&mut trial, &config.recon_weights, calib, topo, k, opts)?;
            let cur = trial
                .frames
                .iter()
                .rposition(|f| f.observation.is_some())
                .expect("nonempty window");
            Ok(Some(mpjpe(&trial.frames[cur].pose, truth_next)))
        })
        .collect()
}
