//! Drone flight prediction and identification.
//!
//! The planner needs to know where the drone will actually be a few control
//! steps after committing to a direction. A constant-acceleration model
//! blends the commanded input acceleration with the previous step's
//! acceleration; its two parameters (input magnitude and blend factor) are
//! fitted to logged motion by least squares plus a line search.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Hard speed limit of the drone, m/s.
pub const V_MAX: f64 = 5.0;

/// Kinematic state carried between control steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneKinematicState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Acceleration applied during the previous step.
    pub a_previous: Vector3<f64>,
}

impl DroneKinematicState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        DroneKinematicState {
            position,
            velocity: Vector3::zeros(),
            a_previous: Vector3::zeros(),
        }
    }
}

/// Parameters of the constant-acceleration step model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightModelParams {
    /// Control period, seconds.
    pub dt: f64,
    /// Blend factor between the commanded and the previous acceleration.
    pub alpha: f64,
    /// Magnitude of the commanded acceleration, m/s^2.
    pub a_input_magnitude: f64,
}

impl Default for FlightModelParams {
    fn default() -> Self {
        FlightModelParams {
            dt: 0.2,
            alpha: 0.6,
            a_input_magnitude: 5.0,
        }
    }
}

/// One step of the model: blend accelerations, integrate position with the
/// constant-acceleration kinematics, update and clamp the velocity.
pub fn predict_step(
    state: &DroneKinematicState,
    direction: &Vector3<f64>,
    params: &FlightModelParams,
) -> DroneKinematicState {
    let a_input = direction * params.a_input_magnitude;
    let a_current = a_input * params.alpha + state.a_previous * (1.0 - params.alpha);
    let dt = params.dt;
    let position = state.position + state.velocity * dt + a_current * (0.5 * dt * dt);
    let mut velocity = state.velocity + a_current * dt;
    let speed = velocity.norm();
    if speed > V_MAX {
        velocity *= V_MAX / speed;
    }
    DroneKinematicState {
        position,
        velocity,
        a_previous: a_current,
    }
}

/// Positions after 1..=steps model steps under a held command direction.
pub fn predict_trajectory(
    state: &DroneKinematicState,
    direction: &Vector3<f64>,
    params: &FlightModelParams,
    steps: usize,
) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(steps);
    let mut s = *state;
    for _ in 0..steps {
        s = predict_step(&s, direction, params);
        out.push(s.position);
    }
    out
}

/// One logged control step: the commanded unit direction and the drone
/// position observed after executing it is the next entry's position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightLogStep {
    pub command: Vector3<f64>,
    pub position: Vector3<f64>,
}

/// Sum of squared one-step prediction errors of the model on a log, given
/// the blend factor, together with the closed-form best input magnitude.
///
/// Velocities are reconstructed from position differences, which makes the
/// expected residual `0.5 dt^2 (a_i + a_{i-1})`; both accelerations are
/// linear in the magnitude, so it solves in closed form.
fn magnitude_and_sse(log: &[FlightLogStep], dt: f64, alpha: f64) -> (f64, f64) {
    let n = log.len();
    // Command-direction EMA chain, shared by all residuals.
    let mut w = Vec::with_capacity(n);
    let mut prev = Vector3::zeros();
    for step in log {
        let wi = step.command * alpha + prev * (1.0 - alpha);
        w.push(wi);
        prev = wi;
    }
    let half_dt2 = 0.5 * dt * dt;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut targets = Vec::with_capacity(n);
    for i in 1..n - 1 {
        let v_fd = (log[i].position - log[i - 1].position) / dt;
        let target = log[i + 1].position - log[i].position - v_fd * dt;
        let basis = (w[i] + w[i - 1]) * half_dt2;
        num += target.dot(&basis);
        den += basis.norm_squared();
        targets.push((target, basis));
    }
    if den < 1e-18 {
        return (0.0, targets.iter().map(|(t, _)| t.norm_squared()).sum());
    }
    let magnitude = num / den;
    let sse = targets
        .iter()
        .map(|(t, b)| (t - b * magnitude).norm_squared())
        .sum();
    (magnitude, sse)
}

/// Fits the model parameters to a flight log: input magnitude by closed-form
/// least squares for each trial blend factor, the blend factor by
/// golden-section search over [0, 1].
pub fn fit_params(log: &[FlightLogStep], dt: f64) -> Result<FlightModelParams> {
    if log.len() < 5 {
        return Err(Error::DegenerateLog(format!(
            "need >= 5 logged steps, got {}",
            log.len()
        )));
    }
    let first = log[0].command;
    if log.iter().all(|s| (s.command - first).norm() < 1e-12) {
        return Err(Error::DegenerateLog(
            "all commands identical; blend factor unidentifiable".into(),
        ));
    }

    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let mut fa = magnitude_and_sse(log, dt, a).1;
    let mut fb = magnitude_and_sse(log, dt, b).1;
    for _ in 0..80 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = magnitude_and_sse(log, dt, a).1;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = magnitude_and_sse(log, dt, b).1;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let (a_input_magnitude, _) = magnitude_and_sse(log, dt, alpha);
    Ok(FlightModelParams {
        dt,
        alpha,
        a_input_magnitude,
    })
}

/// One-step prediction error of the fitted model over a log, alongside the
/// zero-acceleration reference predictor `x + v dt`. Used to validate a fit
/// on held-out steps.
pub fn prediction_errors(log: &[FlightLogStep], params: &FlightModelParams) -> (f64, f64) {
    let dt = params.dt;
    let mut w = Vec::with_capacity(log.len());
    let mut prev = Vector3::zeros();
    for step in log {
        let wi = step.command * params.alpha + prev * (1.0 - params.alpha);
        w.push(wi);
        prev = wi;
    }
    let half_dt2 = 0.5 * dt * dt;
    let mut model_sse = 0.0;
    let mut zero_sse = 0.0;
    for i in 1..log.len() - 1 {
        let v_fd = (log[i].position - log[i - 1].position) / dt;
        let ballistic = log[i].position + v_fd * dt;
        let with_model = ballistic + (w[i] + w[i - 1]) * (half_dt2 * params.a_input_magnitude);
        model_sse += (log[i + 1].position - with_model).norm_squared();
        zero_sse += (log[i + 1].position - ballistic).norm_squared();
    }
    (model_sse, zero_sse)
}

/// The simulator's reference drone dynamics the flight model is fitted
/// against: commanded-velocity tracking with exponential smoothing.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceDynamics {
    /// Velocity smoothing factor per step.
    pub beta: f64,
    /// Speed of the commanded velocity, m/s.
    pub command_speed: f64,
    pub dt: f64,
}

impl Default for ReferenceDynamics {
    fn default() -> Self {
        ReferenceDynamics {
            beta: 0.7,
            command_speed: V_MAX,
            dt: 0.2,
        }
    }
}

/// Position and velocity of the reference drone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceDroneState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl ReferenceDroneState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        ReferenceDroneState {
            position,
            velocity: Vector3::zeros(),
        }
    }
}

impl ReferenceDynamics {
    /// Advances one control period under a commanded unit direction.
    pub fn step(&self, state: &ReferenceDroneState, direction: &Vector3<f64>) -> ReferenceDroneState {
        let v_cmd = direction * self.command_speed;
        let velocity = state.velocity * self.beta + v_cmd * (1.0 - self.beta);
        ReferenceDroneState {
            position: state.position + velocity * self.dt,
            velocity,
        }
    }
}

/// Writes a flight log as `step,cmd_x,cmd_y,cmd_z,pos_x,pos_y,pos_z`.
pub fn save_flight_log(path: impl AsRef<Path>, log: &[FlightLogStep]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("step,cmd_x,cmd_y,cmd_z,pos_x,pos_y,pos_z\n");
    for (i, s) in log.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{},{},{}\n",
            s.command.x, s.command.y, s.command.z, s.position.x, s.position.y, s.position.z
        ));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a flight log written by [`save_flight_log`].
pub fn load_flight_log(path: impl AsRef<Path>) -> Result<Vec<FlightLogStep>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let display = path.display().to_string();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::Parse {
                path: display.clone(),
                line: idx + 1,
                msg: format!("expected 7 columns, got {}", cols.len()),
            });
        }
        let mut vals = [0.0; 6];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = cols[k + 1].parse().map_err(|_| Error::Parse {
                path: display.clone(),
                line: idx + 1,
                msg: format!("bad value '{}'", cols[k + 1]),
            })?;
        }
        out.push(FlightLogStep {
            command: Vector3::new(vals[0], vals[1], vals[2]),
            position: Vector3::new(vals[3], vals[4], vals[5]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn coasting_advances_by_velocity() {
        let state = DroneKinematicState {
            position: Vector3::zeros(),
            velocity: Vector3::new(1.0, 0.0, 0.0),
            a_previous: Vector3::zeros(),
        };
        let params = FlightModelParams::default();
        let next = predict_step(&state, &Vector3::zeros(), &params);
        assert_relative_eq!(next.position, Vector3::new(0.2, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(next.velocity, state.velocity, epsilon = 1e-15);
    }

    #[test]
    fn acceleration_term_matches_kinematics() {
        // At rest with alpha = 1 and unit input acceleration: the position
        // rises by 0.5 * a * dt^2 = 0.02 m.
        let state = DroneKinematicState::at_rest(Vector3::zeros());
        let params = FlightModelParams {
            dt: 0.2,
            alpha: 1.0,
            a_input_magnitude: 1.0,
        };
        let next = predict_step(&state, &Vector3::new(0.0, 0.0, 1.0), &params);
        assert_relative_eq!(next.position.z, 0.02, epsilon = 1e-15);
        assert_relative_eq!(next.velocity.z, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn alpha_endpoints_select_input_or_previous() {
        let state = DroneKinematicState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            a_previous: Vector3::new(0.0, 2.0, 0.0),
        };
        let dir = Vector3::new(1.0, 0.0, 0.0);
        let all_input = predict_step(
            &state,
            &dir,
            &FlightModelParams {
                alpha: 1.0,
                a_input_magnitude: 3.0,
                dt: 0.2,
            },
        );
        assert_relative_eq!(all_input.a_previous, Vector3::new(3.0, 0.0, 0.0), epsilon = 1e-15);
        let all_previous = predict_step(
            &state,
            &dir,
            &FlightModelParams {
                alpha: 0.0,
                a_input_magnitude: 3.0,
                dt: 0.2,
            },
        );
        assert_relative_eq!(all_previous.a_previous, state.a_previous, epsilon = 1e-15);
    }

    #[test]
    fn speed_is_clamped() {
        let mut state = DroneKinematicState::at_rest(Vector3::zeros());
        let params = FlightModelParams {
            alpha: 1.0,
            a_input_magnitude: 50.0,
            dt: 0.2,
        };
        for _ in 0..20 {
            state = predict_step(&state, &Vector3::new(1.0, 0.0, 0.0), &params);
            assert!(state.velocity.norm() <= V_MAX + 1e-12);
        }
    }

    #[test]
    fn trajectory_matches_manual_rollout() {
        let params = FlightModelParams {
            dt: 0.2,
            alpha: 0.35,
            a_input_magnitude: 2.5,
        };
        let state = DroneKinematicState {
            position: Vector3::new(1.0, 2.0, 1.5),
            velocity: Vector3::new(0.4, -0.2, 0.0),
            a_previous: Vector3::new(0.1, 0.1, 0.0),
        };
        let dir = Vector3::new(0.0, 1.0, 0.0);
        let traj = predict_trajectory(&state, &dir, &params, 3);

        // Re-derive each step by hand from the two update equations.
        let mut pos = state.position;
        let mut vel = state.velocity;
        let mut a_prev = state.a_previous;
        for predicted in traj {
            let a = dir * params.a_input_magnitude * params.alpha + a_prev * (1.0 - params.alpha);
            pos = pos + vel * params.dt + a * 0.5 * params.dt * params.dt;
            vel += a * params.dt;
            a_prev = a;
            assert_relative_eq!(predicted, pos, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_motion_predicts_in_place() {
        let state = DroneKinematicState::at_rest(Vector3::new(3.0, 3.0, 2.0));
        let traj = predict_trajectory(&state, &Vector3::zeros(), &FlightModelParams::default(), 3);
        for p in traj {
            assert_relative_eq!(p, state.position, epsilon = 1e-15);
        }
    }

    fn spiral_commands(n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|i| {
                let th = 0.35 * i as f64;
                Vector3::new(th.cos(), th.sin(), 0.2 * (0.5 * th).sin()).normalize()
            })
            .collect()
    }

    #[test]
    fn fit_recovers_its_own_parameters() {
        let truth = FlightModelParams {
            dt: 0.2,
            alpha: 0.45,
            a_input_magnitude: 1.8,
        };
        let mut state = DroneKinematicState::at_rest(Vector3::zeros());
        let mut log = Vec::new();
        for cmd in spiral_commands(60) {
            log.push(FlightLogStep {
                command: cmd,
                position: state.position,
            });
            // Keep the log inside the speed clamp so the model is exact.
            state = predict_step(&state, &cmd, &truth);
            assert!(state.velocity.norm() < V_MAX);
        }
        let fitted = fit_params(&log, truth.dt).unwrap();
        assert!(
            (fitted.alpha - truth.alpha).abs() < 1e-6,
            "alpha {} vs {}",
            fitted.alpha,
            truth.alpha
        );
        assert!(
            (fitted.a_input_magnitude - truth.a_input_magnitude).abs() < 1e-6,
            "magnitude {} vs {}",
            fitted.a_input_magnitude,
            truth.a_input_magnitude
        );
    }

    #[test]
    fn constant_command_log_is_degenerate() {
        let cmd = Vector3::new(1.0, 0.0, 0.0);
        let log: Vec<FlightLogStep> = (0..20)
            .map(|i| FlightLogStep {
                command: cmd,
                position: Vector3::new(i as f64 * 0.1, 0.0, 1.0),
            })
            .collect();
        assert!(matches!(fit_params(&log, 0.2), Err(Error::DegenerateLog(_))));
        assert!(matches!(fit_params(&log[..3], 0.2), Err(Error::DegenerateLog(_))));
    }

    #[test]
    fn fitted_model_beats_ballistic_prediction_on_reference_dynamics() {
        // Orbit-like command sequence through the reference dynamics, fit on
        // the first half, compare one-step predictors on the second half.
        let dynamics = ReferenceDynamics::default();
        let mut state = ReferenceDroneState::at_rest(Vector3::new(7.0, 0.0, 1.5));
        let commands: Vec<Vector3<f64>> = (0..120)
            .map(|i| {
                let th = 0.15 * i as f64;
                Vector3::new(-th.sin(), th.cos(), 0.1 * (0.3 * th).cos()).normalize()
            })
            .collect();
        let mut log = Vec::new();
        for cmd in &commands {
            log.push(FlightLogStep {
                command: *cmd,
                position: state.position,
            });
            state = dynamics.step(&state, cmd);
        }
        let (train, held_out) = log.split_at(60);
        let params = fit_params(train, dynamics.dt).unwrap();
        let (model_sse, zero_sse) = prediction_errors(held_out, &params);
        assert!(
            model_sse < zero_sse,
            "fitted model {model_sse} should beat ballistic {zero_sse}"
        );
    }

    #[test]
    fn flight_log_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let log: Vec<FlightLogStep> = (0..8)
            .map(|i| FlightLogStep {
                command: Vector3::new(i as f64 * 0.1, 1.0 - i as f64 * 0.05, 0.3).normalize(),
                position: Vector3::new(i as f64, -(i as f64), 1.0 + 0.1 * i as f64),
            })
            .collect();
        save_flight_log(&path, &log).unwrap();
        let loaded = load_flight_log(&path).unwrap();
        assert_eq!(log, loaded);
    }
}
