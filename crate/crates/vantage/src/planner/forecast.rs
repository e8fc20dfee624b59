//! Future pose and future measurement forecasting.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::estimator::{
    EnergyWeights, EstimationWindow, FrameObservation, SmoothnessMode, WindowEnergy, FRAME_DIM,
};
use crate::geometry::{project, CameraPose, Intrinsics};
use crate::optimize::{minimize, OptimizeOpts, SubsetEnergy};
use crate::sensing::{Detection2D, Detection3D};
use crate::skeleton::{joint, BoneLengths, BoneTopology, Pose, JOINT_COUNT};

/// Fills the window's future frames by constant-velocity extrapolation of
/// the estimated poses, then refines them (holding observed frames fixed)
/// under an acceleration-smoothness prior plus the bone-length term, so the
/// continuation keeps the joints' velocity while restoring bone lengths.
pub fn forecast_poses(
    window: &mut EstimationWindow,
    horizon: usize,
    weights: &EnergyWeights,
    calib: &BoneLengths,
    topo: &BoneTopology,
    k: &Intrinsics,
) -> Result<()> {
    window.clear_future();
    let observed: Vec<(usize, Pose)> = window
        .frames
        .iter()
        .map(|f| (f.index, f.pose.clone()))
        .collect();
    let Some((last_index, last_pose)) = observed.last().cloned() else {
        return Err(Error::Config("cannot forecast from an empty window".into()));
    };

    // Per-joint velocity from the two most recent estimates.
    let velocity: [nalgebra::Vector3<f64>; JOINT_COUNT] = if observed.len() >= 2 {
        let prev = &observed[observed.len() - 2].1;
        let mut v = [nalgebra::Vector3::zeros(); JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            v[j] = last_pose.joints[j] - prev.joints[j];
        }
        v
    } else {
        [nalgebra::Vector3::zeros(); JOINT_COUNT]
    };

    for i in 1..=horizon {
        let mut joints = last_pose.joints;
        for (j, out) in joints.iter_mut().enumerate() {
            *out += velocity[j] * i as f64;
        }
        window.push_future(last_index + i, Pose::new(joints));
    }
    if horizon == 0 {
        return Ok(());
    }

    // Refine only the future variables; no image terms exist for them yet.
    let prior_weights = EnergyWeights {
        projection: 0.0,
        lift: 0.0,
        smoothness: weights.smoothness,
        bone: weights.bone,
    };
    let x0 = window.poses_to_vec();
    let n = window.frames.len();
    let free: Vec<usize> = ((n - horizon) * FRAME_DIM..n * FRAME_DIM).collect();
    let mut x = {
        let model = WindowEnergy::new(window, &prior_weights, calib, topo, k)
            .with_smoothness(SmoothnessMode::Acceleration);
        let sub = SubsetEnergy::new(&model, &x0, free.clone());
        let mut xf = sub.free_values();
        minimize(&sub, &mut xf, &OptimizeOpts::default())?;
        sub.expand(&xf)
    };
    // Observed poses are untouched by construction.
    for i in 0..(n - horizon) * FRAME_DIM {
        x[i] = x0[i];
    }
    window.set_poses_from_vec(&x);
    Ok(())
}

/// Synthesizes the measurements a candidate view would produce for the
/// forecast poses: the exact projection for the 2D detection and the
/// hip-relative forecast (descaled by the window's lift scale) for the 3D
/// detection. Both energy residuals are zero at the forecast by
/// construction; what the synthetic measurements change is the curvature.
///
/// Fails with [`Error::SubjectNotVisible`] when the forecast subject leaves
/// the camera frustum by more than `margin` pixels.
pub fn forecast_measurements(
    window: &mut EstimationWindow,
    cameras: &[CameraPose],
    k: &Intrinsics,
    margin: f64,
) -> Result<()> {
    let future: Vec<usize> = window
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.observation.is_none())
        .map(|(i, _)| i)
        .collect();
    assert_eq!(
        future.len(),
        cameras.len(),
        "one camera per future frame required"
    );
    let lift_scale = window.lift_scale;
    for (&fi, cam) in future.iter().zip(cameras) {
        let frame = &window.frames[fi];
        let projected = match project(&frame.pose, cam, k) {
            Ok(p) => p,
            Err(Error::NonPositiveDepth { joint, .. }) => {
                return Err(Error::SubjectNotVisible(format!(
                    "forecast joint {joint} behind candidate camera"
                )))
            }
            Err(e) => return Err(e),
        };
        for (j, px) in projected.iter().enumerate() {
            if !k.contains(px, margin) {
                return Err(Error::SubjectNotVisible(format!(
                    "forecast joint {j} at ({:.1}, {:.1}) outside candidate view",
                    px.x, px.y
                )));
            }
        }
        let mut joints2d = [Vector2::zeros(); JOINT_COUNT];
        joints2d.copy_from_slice(&projected);
        let hip = frame.pose.hip();
        let mut joints3d_rel = [nalgebra::Vector3::zeros(); JOINT_COUNT];
        for (j, out) in joints3d_rel.iter_mut().enumerate() {
            if j == joint::HIP {
                continue;
            }
            *out = cam.orientation * (frame.pose.joints[j] - hip) / lift_scale;
        }
        let index = frame.index;
        window.frames[fi].observation = Some(FrameObservation {
            detection2d: Detection2D {
                joints2d,
                frame: index,
            },
            detection3d: Detection3D {
                joints3d_rel,
                frame: index,
            },
            camera: cam.clone(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::energy_pose;
    use crate::geometry::look_at;
    use crate::sensing::{detect_2d, detect_3d_relative, NoiseModel};
    use crate::skeleton::{compute_bone_lengths, BoneTopology, Pose};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn k() -> Intrinsics {
        Intrinsics::default_vga()
    }

    fn observe(truth: &Pose, azimuth: f64, frame: usize) -> FrameObservation {
        let hip = truth.hip();
        let pos = hip + Vector3::new(7.0 * azimuth.cos(), 7.0 * azimuth.sin(), 0.8);
        let cam = look_at(&pos, &hip).unwrap();
        let noise = NoiseModel::noiseless(0);
        FrameObservation {
            detection2d: detect_2d(truth, &cam, &k(), &noise, frame, 0, f64::INFINITY).unwrap(),
            detection3d: detect_3d_relative(truth, &cam, &noise, 1.0, frame, 0),
            camera: cam,
        }
    }

    fn static_window(n: usize) -> (EstimationWindow, Pose) {
        let truth = Pose::template();
        let mut window = EstimationWindow::new(n - 1, 1);
        for f in 0..n {
            window.push_observed(f, truth.clone(), observe(&truth, 0.4 * f as f64, f));
        }
        (window, truth)
    }

    #[test]
    fn static_past_forecasts_static_future() {
        let (mut window, truth) = static_window(3);
        let topo = BoneTopology::human();
        let calib = compute_bone_lengths(&truth, &topo);
        forecast_poses(&mut window, 2, &EnergyWeights::reconstruction(), &calib, &topo, &k()).unwrap();
        assert_eq!(window.n_frames(), 5);
        for frame in window.frames.iter().filter(|f| f.observation.is_none()) {
            for (a, b) in frame.pose.joints.iter().zip(truth.joints.iter()) {
                assert_relative_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rigid_translation_extrapolates_exactly() {
        let truth = Pose::template();
        let v = Vector3::new(0.2, -0.1, 0.0);
        let topo = BoneTopology::human();
        let calib = compute_bone_lengths(&truth, &topo);
        let mut window = EstimationWindow::new(2, 2);
        for f in 0..3 {
            let pose = truth.translated(&(v * f as f64));
            window.push_observed(f, pose.clone(), observe(&pose, 0.5 * f as f64, f));
        }
        forecast_poses(&mut window, 2, &EnergyWeights::reconstruction(), &calib, &topo, &k()).unwrap();
        // The constant-velocity continuation already satisfies both the
        // acceleration prior and the bone term, so refinement leaves it.
        for (step, frame) in window
            .frames
            .iter()
            .filter(|f| f.observation.is_none())
            .enumerate()
        {
            let expect = truth.translated(&(v * (3 + step) as f64));
            for (a, b) in frame.pose.joints.iter().zip(expect.joints.iter()) {
                assert!((a - b).norm() < 1e-6, "future step {step}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn refinement_restores_stretched_bones() {
        // A window whose last two estimates stretch the arm apart: plain
        // extrapolation keeps stretching, the bone term pulls it back.
        let truth = Pose::template();
        let topo = BoneTopology::human();
        let calib = compute_bone_lengths(&truth, &topo);
        let mut window = EstimationWindow::new(2, 1);
        for f in 0..3 {
            let mut pose = truth.clone();
            pose.joints[joint::L_WRIST] += Vector3::new(0.0, 0.08 * f as f64, 0.0);
            window.push_observed(f, pose.clone(), observe(&truth, 0.5 * f as f64, f));
        }
        // Measure the bone energy of the unrefined extrapolation.
        let mut raw = window.clone();
        let last = raw.frames[2].pose.clone();
        let prev = raw.frames[1].pose.clone();
        let mut joints = last.joints;
        for (j, out) in joints.iter_mut().enumerate() {
            *out += last.joints[j] - prev.joints[j];
        }
        raw.push_future(3, Pose::new(joints));
        let weights = EnergyWeights::reconstruction();
        let before = energy_pose(&raw, &weights, &calib, &topo, &k()).unwrap().bone;

        forecast_poses(&mut window, 1, &weights, &calib, &topo, &k()).unwrap();
        let after = energy_pose(&window, &weights, &calib, &topo, &k()).unwrap().bone;
        assert!(
            after < before,
            "refinement should reduce the bone term: {after} vs {before}"
        );
    }

    #[test]
    fn synthetic_measurements_zero_the_data_terms() {
        let (mut window, truth) = static_window(3);
        let topo = BoneTopology::human();
        let calib = compute_bone_lengths(&truth, &topo);
        let weights = EnergyWeights::decision();
        window.lift_scale = 1.3; // arbitrary; the synthetic lift compensates
        forecast_poses(&mut window, 1, &weights, &calib, &topo, &k()).unwrap();
        let hip = window.frames.last().unwrap().pose.hip();
        let cam = look_at(&(hip + Vector3::new(0.0, 7.0, 1.2)), &hip).unwrap();
        forecast_measurements(&mut window, &[cam.clone()], &k(), 0.0).unwrap();

        // Data terms over the future frame alone must vanish. Restrict the
        // weights so observed frames do not contribute.
        let future_frame = window.frames.last().unwrap().clone();
        let sub_window = EstimationWindow {
            k_past: 0,
            horizon: 0,
            frames: vec![future_frame],
            lift_scale: window.lift_scale,
            anchor: None,
        };
        let e = energy_pose(&sub_window, &weights, &calib, &topo, &k()).unwrap();
        assert!(e.projection < 1e-18, "projection residual {}", e.projection);
        assert!(e.lift < 1e-18, "lift residual {}", e.lift);

        // And the synthetic 2D detection equals a zero-noise detection from
        // the same camera.
        let det = detect_2d(
            &window.frames.last().unwrap().pose,
            &cam,
            &k(),
            &NoiseModel::noiseless(0),
            3,
            0,
            f64::INFINITY,
        )
        .unwrap();
        let synth = window.frames.last().unwrap().observation.as_ref().unwrap();
        for (a, b) in det.joints2d.iter().zip(synth.detection2d.joints2d.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn invisible_candidate_is_rejected() {
        let (mut window, truth) = static_window(2);
        let topo = BoneTopology::human();
        let calib = compute_bone_lengths(&truth, &topo);
        forecast_poses(&mut window, 1, &EnergyWeights::decision(), &calib, &topo, &k()).unwrap();
        // Camera looking away from the subject.
        let hip = truth.hip();
        let pos = hip + Vector3::new(7.0, 0.0, 0.5);
        let cam = look_at(&pos, &(pos + Vector3::new(7.0, 0.0, 0.0))).unwrap();
        let err = forecast_measurements(&mut window, &[cam], &k(), 0.0).unwrap_err();
        assert!(matches!(err, Error::SubjectNotVisible(_)));
    }
}
