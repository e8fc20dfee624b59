//! Space-time MAP pose estimation: the sliding estimation window, the pose
//! energy, first-order minimization, initialization from a single detection,
//! and the one-time bone-length calibration.

mod calibrate;
mod energy;

pub use calibrate::{calibrate, triangulate_pose, CalibrationResult, SYMMETRY_WEIGHT};
pub use energy::{EnergyBreakdown, SmoothnessMode, WindowEnergy, FRAME_DIM};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{back_project, CameraPose, Intrinsics};
use crate::optimize::{minimize, OptimizeOpts, OptimizeReport};
use crate::sensing::{Detection2D, Detection3D};
use crate::skeleton::{stature, BoneLengths, BoneTopology, Pose, AVERAGE_STATURE_M};

/// Weights of the four energy terms.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyWeights {
    /// 2D reprojection term weight (omega_p).
    pub projection: f64,
    /// Temporal smoothness term weight (omega_s).
    pub smoothness: f64,
    /// 3D lift term weight (omega_l).
    pub lift: f64,
    /// Bone-length term weight (omega_b).
    pub bone: f64,
}

impl EnergyWeights {
    /// Preset used for reconstruction (the MAP estimate reported as output).
    pub fn reconstruction() -> Self {
        EnergyWeights {
            projection: 1e-4,
            smoothness: 1.0,
            lift: 0.1,
            bone: 1.0,
        }
    }

    /// Preset used when scoring candidate viewpoints. The measurement terms
    /// are weighted higher than for reconstruction.
    pub fn decision() -> Self {
        EnergyWeights {
            projection: 1e-3,
            smoothness: 1.0,
            lift: 0.1,
            bone: 1.0,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        EnergyWeights {
            projection: self.projection * c,
            smoothness: self.smoothness * c,
            lift: self.lift * c,
            bone: self.bone * c,
        }
    }
}

/// Everything measured for one observed frame.
#[derive(Debug, Clone)]
pub struct FrameObservation {
    pub detection2d: Detection2D,
    pub detection3d: Detection3D,
    pub camera: CameraPose,
}

/// One frame of the estimation window: the pose variable plus, for observed
/// frames, its measurements. Future frames carry `None` until measurement
/// forecasting fills in synthetic observations.
#[derive(Debug, Clone)]
pub struct WindowFrame {
    /// Global frame index in the driving sequence.
    pub index: usize,
    pub pose: Pose,
    pub observation: Option<FrameObservation>,
}

/// The block of past/current (observed) and future poses that are optimized
/// jointly.
#[derive(Debug, Clone)]
pub struct EstimationWindow {
    /// Number of past frames kept alongside the current one.
    pub k_past: usize,
    /// Number of future frames appended by forecasting.
    pub horizon: usize,
    pub frames: Vec<WindowFrame>,
    /// Scale factor applied to the hip-relative 3D detections.
    pub lift_scale: f64,
    /// Frozen estimate of the most recently departed frame. The smoothness
    /// term couples the oldest in-window pose to it, so the window stays
    /// tied to the already-estimated trajectory instead of floating freely
    /// along weakly observed directions.
    pub anchor: Option<Pose>,
}

impl EstimationWindow {
    pub fn new(k_past: usize, horizon: usize) -> Self {
        EstimationWindow {
            k_past,
            horizon,
            frames: Vec::with_capacity(k_past + 1 + horizon),
            lift_scale: 1.0,
            anchor: None,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_observed(&self) -> usize {
        self.frames.iter().filter(|f| f.observation.is_some()).count()
    }

    /// Drops any future frames.
    pub fn clear_future(&mut self) {
        self.frames.retain(|f| f.observation.is_some());
    }

    /// Appends an observed frame, dropping stale future frames and trimming
    /// the oldest observed frame once more than `k_past + 1` are held. The
    /// departed frame's estimate becomes the smoothness anchor.
    pub fn push_observed(&mut self, index: usize, pose: Pose, obs: FrameObservation) {
        self.clear_future();
        self.frames.push(WindowFrame {
            index,
            pose,
            observation: Some(obs),
        });
        while self.n_observed() > self.k_past + 1 {
            let departed = self.frames.remove(0);
            self.anchor = Some(departed.pose);
        }
    }

    pub fn push_future(&mut self, index: usize, pose: Pose) {
        self.frames.push(WindowFrame {
            index,
            pose,
            observation: None,
        });
    }

    /// Last observed frame.
    pub fn current(&self) -> Option<&WindowFrame> {
        self.frames.iter().rev().find(|f| f.observation.is_some())
    }

    /// Index into `frames` of the middle observed frame, where the error
    /// metric is reported.
    pub fn middle_observed(&self) -> Option<usize> {
        let observed: Vec<usize> = self
            .frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.observation.is_some())
            .map(|(i, _)| i)
            .collect();
        if observed.is_empty() {
            None
        } else {
            Some(observed[(observed.len() - 1) / 2])
        }
    }

    /// Flattened pose variables, [`FRAME_DIM`] coordinates per frame.
    pub fn poses_to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.frames.len() * FRAME_DIM);
        for frame in &self.frames {
            for j in frame.pose.joints.iter() {
                x.extend_from_slice(&[j.x, j.y, j.z]);
            }
        }
        x
    }

    pub fn set_poses_from_vec(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.frames.len() * FRAME_DIM);
        for (f, frame) in self.frames.iter_mut().enumerate() {
            for (j, out) in frame.pose.joints.iter_mut().enumerate() {
                let o = f * FRAME_DIM + 3 * j;
                *out = Vector3::new(x[o], x[o + 1], x[o + 2]);
            }
        }
    }
}

/// Closed-form least-squares scale aligning the detection's bone lengths to
/// the calibrated ones: `m = sum(l_b * c_b) / sum(l_b^2)`.
pub fn fit_lift_scale(
    detection: &Detection3D,
    calib: &BoneLengths,
    topo: &BoneTopology,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (b, &(p, c)) in topo.bones.iter().enumerate() {
        let l = (detection.joints3d_rel[p] - detection.joints3d_rel[c]).norm();
        num += l * calib.lengths[b];
        den += l * l;
    }
    if den < 1e-12 {
        return Err(Error::DegenerateDetection(
            "3D detection has no bone structure (all joints coincident)".into(),
        ));
    }
    Ok(num / den)
}

/// Weighted energy of the window at its current poses, with the per-term
/// breakdown.
pub fn energy_pose(
    window: &EstimationWindow,
    weights: &EnergyWeights,
    calib: &BoneLengths,
    topo: &BoneTopology,
    k: &Intrinsics,
) -> Result<EnergyBreakdown> {
    let model = WindowEnergy::new(window, weights, calib, topo, k);
    model.breakdown(&window.poses_to_vec())
}

/// Minimizes the window energy over all pose variables in the window,
/// writing the MAP poses back into it.
pub fn minimize_window(
    window: &mut EstimationWindow,
    weights: &EnergyWeights,
    calib: &BoneLengths,
    topo: &BoneTopology,
    k: &Intrinsics,
    opts: &OptimizeOpts,
) -> Result<OptimizeReport> {
    let mut x = window.poses_to_vec();
    let report = {
        let model = WindowEnergy::new(window, weights, calib, topo, k);
        minimize(&model, &mut x, opts)?
    };
    window.set_poses_from_vec(&x);
    Ok(report)
}

/// Initial absolute pose from the first 2D detection: the pixels are lifted
/// to the planar depth at which the back-projected skeleton has average
/// human stature.
pub fn initialize(detection: &Detection2D, cam: &CameraPose, k: &Intrinsics) -> Result<Pose> {
    let unit = back_project(&detection.joints2d, cam, k, 1.0)?;
    let unit_stature = stature(&unit);
    if unit_stature < 1e-9 {
        return Err(Error::DegenerateDetection(
            "2D detection is a single point; depth unrecoverable".into(),
        ));
    }
    // Back-projected distances grow linearly with depth, so the best depth
    // is the exact ratio.
    let depth = AVERAGE_STATURE_M / unit_stature;
    back_project(&detection.joints2d, cam, k, depth)
}

/// Constant-velocity continuation of the two most recent observed poses,
/// used to initialize the next frame's variables.
pub fn extrapolate_next_pose(window: &EstimationWindow) -> Option<Pose> {
    let observed: Vec<&WindowFrame> = window
        .frames
        .iter()
        .filter(|f| f.observation.is_some())
        .collect();
    match observed.len() {
        0 => None,
        1 => Some(observed[0].pose.clone()),
        n => {
            let last = &observed[n - 1].pose;
            let prev = &observed[n - 2].pose;
            let mut joints = last.joints;
            for (j, out) in joints.iter_mut().enumerate() {
                *out += last.joints[j] - prev.joints[j];
            }
            Some(Pose::new(joints))
        }
    }
}
