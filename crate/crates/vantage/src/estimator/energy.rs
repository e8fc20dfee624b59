//! The space-time pose energy: weighted sum of projection, lift, smoothness,
//! and bone-length terms over a window of frames, with its analytic gradient.

use nalgebra::Vector3;

use crate::error::Result;
use crate::estimator::{EnergyWeights, EstimationWindow, WindowFrame};
use crate::geometry::{project_point, project_point_with_jacobian, Intrinsics};
use crate::optimize::EnergyModel;
use crate::skeleton::{joint, BoneLengths, BoneTopology, JOINT_COUNT};

/// Coordinates per frame in the flattened pose vector.
pub const FRAME_DIM: usize = 3 * JOINT_COUNT;

/// Per-term values of the window energy, already weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub projection: f64,
    pub lift: f64,
    pub smoothness: f64,
    pub bone: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.projection + self.lift + self.smoothness + self.bone
    }
}

/// How the smoothness term couples consecutive frames.
///
/// `Velocity` penalizes first differences and is the reconstruction prior.
/// `Acceleration` penalizes second differences; it is used when refining
/// forecast poses so that a constant-velocity continuation is stationary
/// instead of being dragged back onto the last observed pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothnessMode {
    Velocity,
    Acceleration,
}

/// The window energy over the flattened pose variables of all frames
/// (`FRAME_DIM` coordinates per frame, frames in window order).
///
/// Projection and lift terms range only over frames that carry measurements;
/// smoothness over consecutive frame pairs; the bone term over all frames.
pub struct WindowEnergy<'a> {
    frames: &'a [WindowFrame],
    anchor: Option<&'a crate::skeleton::Pose>,
    weights: EnergyWeights,
    calib: &'a BoneLengths,
    topo: &'a BoneTopology,
    k: Intrinsics,
    lift_scale: f64,
    smoothness: SmoothnessMode,
}

impl<'a> WindowEnergy<'a> {
    pub fn new(
        window: &'a EstimationWindow,
        weights: &EnergyWeights,
        calib: &'a BoneLengths,
        topo: &'a BoneTopology,
        k: &Intrinsics,
    ) -> Self {
        WindowEnergy {
            frames: &window.frames,
            anchor: window.anchor.as_ref(),
            weights: weights.clone(),
            calib,
            topo,
            k: *k,
            lift_scale: window.lift_scale,
            smoothness: SmoothnessMode::Velocity,
        }
    }

    pub fn with_smoothness(mut self, mode: SmoothnessMode) -> Self {
        self.smoothness = mode;
        self
    }

    fn joint_at(x: &[f64], frame: usize, j: usize) -> Vector3<f64> {
        let o = frame * FRAME_DIM + 3 * j;
        Vector3::new(x[o], x[o + 1], x[o + 2])
    }

    fn add_grad(grad: &mut [f64], frame: usize, j: usize, v: Vector3<f64>) {
        let o = frame * FRAME_DIM + 3 * j;
        grad[o] += v.x;
        grad[o + 1] += v.y;
        grad[o + 2] += v.z;
    }

    /// Weighted per-term energies at `x`.
    pub fn breakdown(&self, x: &[f64]) -> Result<EnergyBreakdown> {
        debug_assert_eq!(x.len(), self.dim());
        let w = &self.weights;
        let mut projection = 0.0;
        let mut lift = 0.0;
        let mut smoothness = 0.0;
        let mut bone = 0.0;

        for (f, frame) in self.frames.iter().enumerate() {
            if let Some(obs) = &frame.observation {
                if w.projection > 0.0 {
                    for j in 0..JOINT_COUNT {
                        let px = project_point(&Self::joint_at(x, f, j), &obs.camera, &self.k, j)?;
                        projection += (obs.detection2d.joints2d[j] - px).norm_squared();
                    }
                }
                if w.lift > 0.0 {
                    let hip = Self::joint_at(x, f, joint::HIP);
                    let cam_to_world = obs.camera.orientation.inverse();
                    for j in 0..JOINT_COUNT {
                        if j == joint::HIP {
                            continue; // hip residual is identically zero
                        }
                        let l_world = cam_to_world * obs.detection3d.joints3d_rel[j];
                        let r = self.lift_scale * l_world - (Self::joint_at(x, f, j) - hip);
                        lift += r.norm_squared();
                    }
                }
            }
            if w.bone > 0.0 {
                for (b, &(p, c)) in self.topo.bones.iter().enumerate() {
                    let len = (Self::joint_at(x, f, p) - Self::joint_at(x, f, c)).norm();
                    let d = len - self.calib.lengths[b];
                    bone += d * d;
                }
            }
        }

        if w.smoothness > 0.0 {
            match self.smoothness {
                SmoothnessMode::Velocity => {
                    // Coupling to the frozen estimate that left the window.
                    if let Some(anchor) = self.anchor {
                        for j in 0..JOINT_COUNT {
                            let d = Self::joint_at(x, 0, j) - anchor.joints[j];
                            smoothness += d.norm_squared();
                        }
                    }
                    for f in 0..self.frames.len().saturating_sub(1) {
                        for j in 0..JOINT_COUNT {
                            let d = Self::joint_at(x, f + 1, j) - Self::joint_at(x, f, j);
                            smoothness += d.norm_squared();
                        }
                    }
                }
                SmoothnessMode::Acceleration => {
                    for f in 1..self.frames.len().saturating_sub(1) {
                        for j in 0..JOINT_COUNT {
                            let a = Self::joint_at(x, f + 1, j) - Self::joint_at(x, f, j) * 2.0
                                + Self::joint_at(x, f - 1, j);
                            smoothness += a.norm_squared();
                        }
                    }
                }
            }
        }

        Ok(EnergyBreakdown {
            projection: w.projection * projection,
            lift: w.lift * lift,
            smoothness: w.smoothness * smoothness,
            bone: w.bone * bone,
        })
    }
}

impl EnergyModel for WindowEnergy<'_> {
    fn dim(&self) -> usize {
        self.frames.len() * FRAME_DIM
    }

    fn energy(&self, x: &[f64]) -> Result<f64> {
        Ok(self.breakdown(x)?.total())
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<()> {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(grad.len(), self.dim());
        grad.fill(0.0);
        let w = &self.weights;

        for (f, frame) in self.frames.iter().enumerate() {
            if let Some(obs) = &frame.observation {
                if w.projection > 0.0 {
                    for j in 0..JOINT_COUNT {
                        let p = Self::joint_at(x, f, j);
                        let (px, jac) =
                            project_point_with_jacobian(&p, &obs.camera, &self.k, j)?;
                        let r = px - obs.detection2d.joints2d[j];
                        Self::add_grad(grad, f, j, 2.0 * w.projection * (jac.transpose() * r));
                    }
                }
                if w.lift > 0.0 {
                    let hip = Self::joint_at(x, f, joint::HIP);
                    let cam_to_world = obs.camera.orientation.inverse();
                    let mut hip_accum = Vector3::zeros();
                    for j in 0..JOINT_COUNT {
                        if j == joint::HIP {
                            continue;
                        }
                        let l_world = cam_to_world * obs.detection3d.joints3d_rel[j];
                        let r = self.lift_scale * l_world - (Self::joint_at(x, f, j) - hip);
                        Self::add_grad(grad, f, j, -2.0 * w.lift * r);
                        hip_accum += r;
                    }
                    Self::add_grad(grad, f, joint::HIP, 2.0 * w.lift * hip_accum);
                }
            }
            if w.bone > 0.0 {
                for (b, &(p, c)) in self.topo.bones.iter().enumerate() {
                    let u = Self::joint_at(x, f, p) - Self::joint_at(x, f, c);
                    let len = u.norm();
                    if len < 1e-12 {
                        continue; // subgradient at a collapsed bone
                    }
                    let g = 2.0 * w.bone * (len - self.calib.lengths[b]) / len * u;
                    Self::add_grad(grad, f, p, g);
                    Self::add_grad(grad, f, c, -g);
                }
            }
        }

        if w.smoothness > 0.0 {
            match self.smoothness {
                SmoothnessMode::Velocity => {
                    if let Some(anchor) = self.anchor {
                        for j in 0..JOINT_COUNT {
                            let d = Self::joint_at(x, 0, j) - anchor.joints[j];
                            Self::add_grad(grad, 0, j, 2.0 * w.smoothness * d);
                        }
                    }
                    for f in 0..self.frames.len().saturating_sub(1) {
                        for j in 0..JOINT_COUNT {
                            let d = Self::joint_at(x, f + 1, j) - Self::joint_at(x, f, j);
                            Self::add_grad(grad, f + 1, j, 2.0 * w.smoothness * d);
                            Self::add_grad(grad, f, j, -2.0 * w.smoothness * d);
                        }
                    }
                }
                SmoothnessMode::Acceleration => {
                    for f in 1..self.frames.len().saturating_sub(1) {
                        for j in 0..JOINT_COUNT {
                            let a = Self::joint_at(x, f + 1, j) - Self::joint_at(x, f, j) * 2.0
                                + Self::joint_at(x, f - 1, j);
                            let s = 2.0 * w.smoothness;
                            Self::add_grad(grad, f + 1, j, s * a);
                            Self::add_grad(grad, f, j, -2.0 * s * a);
                            Self::add_grad(grad, f - 1, j, s * a);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
