//! One-time bone-length calibration from multiple views of a stationary
//! subject.
//!
//! A single static pose is optimized against the 2D detections of all
//! calibration frames plus a left/right symmetry penalty; its bone lengths
//! become the calibrated skeleton used by the window energy.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{project_point, project_point_with_jacobian, CameraPose, Intrinsics};
use crate::optimize::{minimize, EnergyModel, OptimizeOpts};
use crate::sensing::Detection2D;
use crate::skeleton::{compute_bone_lengths, BoneLengths, BoneTopology, Pose, JOINT_COUNT};

/// Weight of the squared left/right bone-length difference penalty.
pub const SYMMETRY_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub bone_lengths: BoneLengths,
    /// Final calibration energy at the optimum.
    pub residual: f64,
}

struct CalibrationEnergy<'a> {
    frames: &'a [(Detection2D, CameraPose)],
    k: Intrinsics,
    projection_weight: f64,
    symmetry_weight: f64,
    topo: &'a BoneTopology,
}

impl CalibrationEnergy<'_> {
    fn joint_at(x: &[f64], j: usize) -> Vector3<f64> {
        Vector3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2])
    }

    fn add_grad(grad: &mut [f64], j: usize, v: Vector3<f64>) {
        grad[3 * j] += v.x;
        grad[3 * j + 1] += v.y;
        grad[3 * j + 2] += v.z;
    }
}

impl EnergyModel for CalibrationEnergy<'_> {
    fn dim(&self) -> usize {
        3 * JOINT_COUNT
    }

    fn energy(&self, x: &[f64]) -> Result<f64> {
        let mut proj = 0.0;
        for (det, cam) in self.frames {
            for j in 0..JOINT_COUNT {
                let px = project_point(&Self::joint_at(x, j), cam, &self.k, j)?;
                proj += (det.joints2d[j] - px).norm_squared();
            }
        }
        let mut sym = 0.0;
        for &(bl, br) in &self.topo.mirror_pairs {
            let (pl, cl) = self.topo.bones[bl];
            let (pr, cr) = self.topo.bones[br];
            let ll = (Self::joint_at(x, pl) - Self::joint_at(x, cl)).norm();
            let lr = (Self::joint_at(x, pr) - Self::joint_at(x, cr)).norm();
            sym += (ll - lr) * (ll - lr);
        }
        Ok(self.projection_weight * proj + self.symmetry_weight * sym)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<()> {
        grad.fill(0.0);
        for (det, cam) in self.frames {
            for j in 0..JOINT_COUNT {
                let p = Self::joint_at(x, j);
                let (px, jac) = project_point_with_jacobian(&p, cam, &self.k, j)?;
                let r = px - det.joints2d[j];
                Self::add_grad(grad, j, 2.0 * self.projection_weight * (jac.transpose() * r));
            }
        }
        for &(bl, br) in &self.topo.mirror_pairs {
            let (pl, cl) = self.topo.bones[bl];
            let (pr, cr) = self.topo.bones[br];
            let ul = Self::joint_at(x, pl) - Self::joint_at(x, cl);
            let ur = Self::joint_at(x, pr) - Self::joint_at(x, cr);
            let (ll, lr) = (ul.norm(), ur.norm());
            if ll < 1e-12 || lr < 1e-12 {
                continue;
            }
            let d = 2.0 * self.symmetry_weight * (ll - lr);
            Self::add_grad(grad, pl, d / ll * ul);
            Self::add_grad(grad, cl, -d / ll * ul);
            Self::add_grad(grad, pr, -d / lr * ur);
            Self::add_grad(grad, cr, d / lr * ur);
        }
        Ok(())
    }
}

/// Linear least-squares triangulation of each joint from >= 2 views; the
/// initialization for calibration.
pub fn triangulate_pose(frames: &[(Detection2D, CameraPose)], k: &Intrinsics) -> Result<Pose> {
    let mut joints = [Vector3::zeros(); JOINT_COUNT];
    for (j, out) in joints.iter_mut().enumerate() {
        let mut ata = Matrix3::zeros();
        let mut atb = Vector3::zeros();
        for (det, cam) in frames {
            let r = cam.orientation.matrix();
            let (r1, r2, r3) = (
                Vector3::new(r[(0, 0)], r[(0, 1)], r[(0, 2)]),
                Vector3::new(r[(1, 0)], r[(1, 1)], r[(1, 2)]),
                Vector3::new(r[(2, 0)], r[(2, 1)], r[(2, 2)]),
            );
            let u = (det.joints2d[j].x - k.cx) / k.fx;
            let v = (det.joints2d[j].y - k.cy) / k.fy;
            // Each view contributes two linear constraints row . X = row . C.
            for row in [u * r3 - r1, v * r3 - r2] {
                ata += row * row.transpose();
                atb += row * row.dot(&cam.position);
            }
        }
        *out = ata
            .lu()
            .solve(&atb)
            .ok_or_else(|| Error::NumericalFailure(format!("triangulation of joint {j} is singular")))?;
    }
    Ok(Pose::new(joints))
}

fn distinct_positions(frames: &[(Detection2D, CameraPose)]) -> usize {
    let mut distinct: Vec<Vector3<f64>> = Vec::new();
    for (_, cam) in frames {
        if distinct.iter().all(|p| (p - cam.position).norm() > 1e-9) {
            distinct.push(cam.position);
        }
    }
    distinct.len()
}

/// Recovers the subject's bone lengths from calibration frames taken from
/// distinct viewpoints. `weights.projection` weighs the reprojection term.
pub fn calibrate(
    frames: &[(Detection2D, CameraPose)],
    k: &Intrinsics,
    weights_projection: f64,
    topo: &BoneTopology,
) -> Result<CalibrationResult> {
    let views = distinct_positions(frames);
    if views < 2 {
        return Err(Error::InsufficientViews(views));
    }
    let init = triangulate_pose(frames, k)?;
    let model = CalibrationEnergy {
        frames,
        k: *k,
        projection_weight: weights_projection,
        symmetry_weight: SYMMETRY_WEIGHT,
        topo,
    };
    let mut x = Vec::with_capacity(3 * JOINT_COUNT);
    for j in init.joints.iter() {
        x.extend_from_slice(&[j.x, j.y, j.z]);
    }
    let report = minimize(&model, &mut x, &OptimizeOpts::precise())?;
    let mut joints = [Vector3::zeros(); JOINT_COUNT];
    for (j, out) in joints.iter_mut().enumerate() {
        *out = Vector3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2]);
    }
    let pose = Pose::new(joints);
    Ok(CalibrationResult {
        bone_lengths: compute_bone_lengths(&pose, topo),
        residual: report.energy,
    })
}
