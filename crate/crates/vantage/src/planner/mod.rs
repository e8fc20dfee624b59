//! Next-best-view selection: candidate viewpoint generation, forecasting,
//! Hessian-based scoring, and the selection policies.

mod forecast;
pub mod policy;
mod uncertainty;

pub use forecast::{forecast_measurements, forecast_poses};
pub use policy::PolicyKind;
pub use uncertainty::{
    hessian, hessian_fd, uncertainty_report, uncertainty_score, ScoreOpts, UncertaintyReport,
};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{EnergyWeights, EstimationWindow};
use crate::flight::{predict_trajectory, DroneKinematicState, FlightModelParams, V_MAX};
use crate::geometry::{look_at, CameraPose, Intrinsics};
use crate::skeleton::{BoneLengths, BoneTopology};

/// A hypothetical future camera placement (teleport: one pose; flight: a
/// predicted trajectory), with its uncertainty score once evaluated.
#[derive(Debug, Clone)]
pub struct CandidateView {
    pub id: usize,
    /// One camera per future step of the window horizon.
    pub cameras: Vec<CameraPose>,
    /// Commanded unit direction that generated this candidate (flight mode).
    pub direction: Option<Vector3<f64>>,
    /// False once the visibility filter discarded the candidate.
    pub visible: bool,
    pub score: Option<f64>,
}

impl CandidateView {
    fn new(id: usize, cameras: Vec<CameraPose>, direction: Option<Vector3<f64>>) -> Self {
        CandidateView {
            id,
            cameras,
            direction,
            visible: true,
            score: None,
        }
    }
}

/// Azimuth and elevation (radians) of `position` as seen from `subject`.
pub fn bearing_of(position: &Vector3<f64>, subject: &Vector3<f64>) -> (f64, f64) {
    let d = position - subject;
    let az = d.y.atan2(d.x);
    let el = d.z.atan2((d.x * d.x + d.y * d.y).sqrt());
    (az, el)
}

/// `count` candidate cameras equally spaced in azimuth on a sphere of
/// `radius` around `center`, placed at altitude `height` and aimed at
/// `center`. Candidate `i` sits at azimuth `2 pi i / count`.
pub fn generate_ring_candidates(
    center: &Vector3<f64>,
    radius: f64,
    count: usize,
    height: f64,
    horizon: usize,
) -> Result<Vec<CandidateView>> {
    assert!(radius > 0.0 && count > 0 && horizon > 0);
    let dz = height - center.z;
    // Keep the ring on the sphere; a height outside the sphere collapses to
    // a small horizontal circle rather than erroring.
    let rho = (radius * radius - dz * dz).max(0.0025 * radius * radius).sqrt();
    (0..count)
        .map(|i| {
            let az = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            let pos = Vector3::new(center.x + rho * az.cos(), center.y + rho * az.sin(), height);
            let cam = look_at(&pos, center)?;
            Ok(CandidateView::new(i, vec![cam; horizon], None))
        })
        .collect()
}

/// Candidates from a fixed multi-camera rig; the cameras do not move.
pub fn generate_fixed_candidates(cameras: &[CameraPose], horizon: usize) -> Vec<CandidateView> {
    cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| CandidateView::new(i, vec![cam.clone(); horizon], None))
        .collect()
}

/// The nine flight directions, in the candidate id order used throughout:
/// up, down, left, right, up-right, up-left, down-right, down-left, center.
/// "Left" orbits counter-clockwise seen from above.
pub const FLIGHT_DIRECTIONS: [(f64, f64); 9] = [
    (0.0, 1.0),
    (0.0, -1.0),
    (1.0, 0.0),
    (-1.0, 0.0),
    (-1.0, 1.0),
    (1.0, 1.0),
    (-1.0, -1.0),
    (1.0, -1.0),
    (0.0, 0.0),
];

pub const FLIGHT_LEFT: usize = 2;
pub const FLIGHT_RIGHT: usize = 3;
pub const FLIGHT_CENTER: usize = 8;

/// Nine candidate trajectories around the current drone state: tangential
/// direction combinations on the sphere of `radius` around `sphere_center`,
/// each normalized so the goal stays on the sphere, altitude-clamped, and
/// expanded to `hips.len()` future positions.
///
/// `sphere_center` is the point the flight controller keeps its distance
/// from (the simulator tracks the subject itself, like a real follow
/// controller); the candidate cameras aim at `hips`, the estimator's
/// predicted hip positions.
///
/// With `use_flight_model` the future positions come from the fitted
/// constant-acceleration model; without it (the ablation) they are uniform
/// offsets from the current position that ignore momentum.
#[allow(clippy::too_many_arguments)]
pub fn generate_flight_candidates(
    state: &DroneKinematicState,
    params: &FlightModelParams,
    sphere_center: &Vector3<f64>,
    hips: &[Vector3<f64>],
    radius: f64,
    altitude_min: f64,
    altitude_max: f64,
    use_flight_model: bool,
) -> Result<Vec<CandidateView>> {
    assert!(!hips.is_empty());
    let subject = *sphere_center;
    let r_vec = state.position - subject;
    let r_hat = if r_vec.norm() > 1e-9 {
        r_vec / r_vec.norm()
    } else {
        Vector3::x()
    };
    // Tangent frame on the sphere: azimuthal (counter-clockwise from above)
    // and upward.
    let mut t_az = Vector3::z().cross(&r_hat);
    if t_az.norm() < 1e-9 {
        t_az = Vector3::y();
    }
    let t_az = t_az.normalize();
    let mut t_up = Vector3::z() - r_hat * Vector3::z().dot(&r_hat);
    if t_up.norm() < 1e-9 {
        t_up = r_hat.cross(&t_az);
    }
    let t_up = t_up.normalize();

    let horizon = hips.len();
    let reach = V_MAX * params.dt;
    FLIGHT_DIRECTIONS
        .iter()
        .enumerate()
        .map(|(id, &(a, u))| {
            let command = if a == 0.0 && u == 0.0 {
                Vector3::zeros()
            } else {
                let tangent = (t_az * a + t_up * u).normalize();
                // Re-target onto the sphere so the commanded motion preserves
                // the subject distance, then keep the goal inside the
                // altitude band.
                let mut goal = subject + (state.position + tangent * reach - subject).normalize() * radius;
                goal.z = goal.z.clamp(altitude_min, altitude_max);
                let dir = goal - state.position;
                if dir.norm() > 1e-9 {
                    dir.normalize()
                } else {
                    Vector3::zeros()
                }
            };
            let mut positions = if use_flight_model {
                predict_trajectory(state, &command, params, horizon)
            } else {
                (1..=horizon)
                    .map(|i| state.position + command * (reach * i as f64))
                    .collect()
            };
            for p in positions.iter_mut() {
                p.z = p.z.clamp(altitude_min, altitude_max);
            }
            let cameras = positions
                .iter()
                .enumerate()
                .map(|(i, p)| look_at(p, &hips[i.min(hips.len() - 1)]))
                .collect::<Result<Vec<_>>>()?;
            Ok(CandidateView::new(id, cameras, Some(command)))
        })
        .collect()
}

/// Scores every candidate: synthesizes its future measurements, computes the
/// window Hessian under the decision weights, and stores the covariance-trace
/// score. Candidates whose forecast subject is not visible are marked
/// invisible and left unscored. Candidates are evaluated independently (and
/// in parallel); the window itself is untouched.
#[allow(clippy::too_many_arguments)]
pub fn score_candidates(
    window: &EstimationWindow,
    candidates: &mut [CandidateView],
    weights: &EnergyWeights,
    calib: &BoneLengths,
    topo: &BoneTopology,
    k: &Intrinsics,
    opts: &ScoreOpts,
    margin: f64,
) -> Result<()> {
    let results: Vec<Result<Option<f64>>> = candidates
        .par_iter()
        .map(|cand| {
            let mut trial = window.clone();
            match forecast_measurements(&mut trial, &cand.cameras, k, margin) {
                Err(Error::SubjectNotVisible(_)) => return Ok(None),
                Err(e) => return Err(e),
                Ok(()) => {}
            }
            let report = hessian(&trial, weights, calib, topo, k, opts)?;
            Ok(Some(report.score))
        })
        .collect();
    let mut any_visible = false;
    for (cand, res) in candidates.iter_mut().zip(results) {
        match res? {
            Some(score) => {
                cand.score = Some(score);
                cand.visible = true;
                any_visible = true;
            }
            None => {
                cand.score = None;
                cand.visible = false;
            }
        }
    }
    if !any_visible {
        return Err(Error::NoVisibleCandidate);
    }
    Ok(())
}

/// Marks candidate visibility without scoring (used by baseline policies).
pub fn mark_visibility(
    window: &EstimationWindow,
    candidates: &mut [CandidateView],
    k: &Intrinsics,
    margin: f64,
) -> Result<()> {
    let mut any_visible = false;
    for cand in candidates.iter_mut() {
        let mut trial = window.clone();
        cand.visible = match forecast_measurements(&mut trial, &cand.cameras, k, margin) {
            Ok(()) => true,
            Err(Error::SubjectNotVisible(_)) => false,
            Err(e) => return Err(e),
        };
        any_visible |= cand.visible;
    }
    if !any_visible {
        return Err(Error::NoVisibleCandidate);
    }
    Ok(())
}

/// Index of the scored, visible candidate with the lowest uncertainty.
/// Ties resolve to the lowest candidate id.
pub fn select_best(candidates: &[CandidateView]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let Some(score) = cand.score else { continue };
        if !cand.visible {
            continue;
        }
        if best.map_or(true, |(_, s)| score < s) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoVisibleCandidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ring_spacing_is_uniform() {
        let center = Vector3::new(1.0, -2.0, 0.97);
        let cands = generate_ring_candidates(&center, 7.0, 18, 1.8, 1).unwrap();
        assert_eq!(cands.len(), 18);
        for (i, c) in cands.iter().enumerate() {
            assert_eq!(c.id, i);
            let (az, _) = bearing_of(&c.cameras[0].position, &center);
            let expect = 2.0 * std::f64::consts::PI * i as f64 / 18.0;
            let wrapped = (az - expect + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                - std::f64::consts::PI;
            assert!(wrapped.abs() < 1e-9, "candidate {i} azimuth off by {wrapped}");
            // All candidates sit on the 7 m sphere.
            assert_relative_eq!((c.cameras[0].position - center).norm(), 7.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn flight_center_candidate_continues_momentum() {
        let state = DroneKinematicState {
            position: Vector3::new(7.0, 0.0, 1.5),
            velocity: Vector3::new(0.0, 1.0, 0.0),
            a_previous: Vector3::zeros(),
        };
        let params = FlightModelParams::default();
        let hips = [Vector3::new(0.0, 0.0, 0.97); 3];
        let cands =
            generate_flight_candidates(&state, &params, &hips[0], &hips, 7.0, 0.25, 3.5, true)
                .unwrap();
        assert_eq!(cands.len(), 9);
        let center = &cands[FLIGHT_CENTER];
        assert_eq!(center.direction.unwrap(), Vector3::zeros());
        // Zero input acceleration: position advances by velocity only.
        let expect = state.position + state.velocity * params.dt;
        assert_relative_eq!(center.cameras[0].position, expect, epsilon = 1e-12);
    }

    #[test]
    fn flight_altitude_clamps() {
        let state = DroneKinematicState::at_rest(Vector3::new(7.0, 0.0, 3.45));
        let params = FlightModelParams {
            alpha: 1.0,
            a_input_magnitude: 60.0,
            ..FlightModelParams::default()
        };
        let hips = [Vector3::new(0.0, 0.0, 0.97)];
        let cands =
            generate_flight_candidates(&state, &params, &hips[0], &hips, 7.0, 0.25, 3.5, true)
                .unwrap();
        let up = &cands[0];
        for cam in &up.cameras {
            assert!(cam.position.z <= 3.5 + 1e-12, "altitude {}", cam.position.z);
        }
    }

    #[test]
    fn select_best_takes_minimum_with_low_id_ties() {
        let cam = look_at(&Vector3::new(7.0, 0.0, 1.0), &Vector3::zeros()).unwrap();
        let mut cands: Vec<CandidateView> = (0..4)
            .map(|i| CandidateView::new(i, vec![cam.clone()], None))
            .collect();
        cands[0].score = Some(3.0);
        cands[1].score = Some(1.0);
        cands[2].score = Some(2.0);
        cands[3].score = Some(1.0); // tie with 1: lower id wins
        assert_eq!(select_best(&cands).unwrap(), 1);
        cands[1].visible = false;
        assert_eq!(select_best(&cands).unwrap(), 3);
        for c in cands.iter_mut() {
            c.visible = false;
        }
        assert!(matches!(select_best(&cands), Err(Error::NoVisibleCandidate)));
    }
}
