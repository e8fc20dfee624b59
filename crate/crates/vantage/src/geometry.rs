//! Pinhole camera model: projection, back-projection, and camera pose
//! handling.
//!
//! World frame: right-handed, z up. Camera frame: x right, y down, z along
//! the optical axis (standard computer-vision convention).

use nalgebra::{Matrix2x3, Rotation3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::skeleton::{Pose, JOINT_COUNT};

/// Joints closer to the image plane than this are treated as behind the
/// camera.
pub const DEPTH_EPSILON: f64 = 1e-3;

/// Camera (or drone) pose: world position plus the rotation mapping world
/// vectors into the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub position: Vector3<f64>,
    /// World-to-camera rotation: `p_cam = orientation * (x_world - position)`.
    pub orientation: Rotation3<f64>,
}

impl CameraPose {
    pub fn new(position: Vector3<f64>, orientation: Rotation3<f64>) -> Self {
        CameraPose {
            position,
            orientation,
        }
    }

    /// World-frame point expressed in the camera frame.
    pub fn to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * (x - self.position)
    }

    /// Camera-frame point expressed in the world frame.
    pub fn to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse() * p + self.position
    }

    /// Optical axis direction in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.orientation.inverse() * Vector3::z()
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: f64, height: f64) -> Self {
        debug_assert!(fx > 0.0 && fy > 0.0);
        debug_assert!(cx > 0.0 && cx < width && cy > 0.0 && cy < height);
        Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        }
    }

    /// 640x480 image with fx = fy = 500 and a centered principal point.
    pub fn default_vga() -> Self {
        Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640.0, 480.0)
    }

    /// True if the pixel lies inside the image extended by `margin` pixels.
    pub fn contains(&self, px: &Vector2<f64>, margin: f64) -> bool {
        px.x >= -margin
            && px.x <= self.width + margin
            && px.y >= -margin
            && px.y <= self.height + margin
    }
}

/// Project a single world point. Errors if its depth is below
/// [`DEPTH_EPSILON`]; the joint index is only used for error reporting.
pub fn project_point(
    x: &Vector3<f64>,
    cam: &CameraPose,
    k: &Intrinsics,
    joint: usize,
) -> Result<Vector2<f64>> {
    let p = cam.to_camera(x);
    if p.z <= DEPTH_EPSILON {
        return Err(Error::NonPositiveDepth {
            joint,
            depth: p.z,
            min: DEPTH_EPSILON,
        });
    }
    Ok(Vector2::new(
        k.fx * p.x / p.z + k.cx,
        k.fy * p.y / p.z + k.cy,
    ))
}

/// Projection of a point together with its 2x3 Jacobian with respect to the
/// world coordinates of the point.
pub fn project_point_with_jacobian(
    x: &Vector3<f64>,
    cam: &CameraPose,
    k: &Intrinsics,
    joint: usize,
) -> Result<(Vector2<f64>, Matrix2x3<f64>)> {
    let p = cam.to_camera(x);
    if p.z <= DEPTH_EPSILON {
        return Err(Error::NonPositiveDepth {
            joint,
            depth: p.z,
            min: DEPTH_EPSILON,
        });
    }
    let px = Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
    let inv_z = 1.0 / p.z;
    // d(pixel)/d(p_cam), then chain through the world-to-camera rotation.
    let j_cam = Matrix2x3::new(
        k.fx * inv_z,
        0.0,
        -k.fx * p.x * inv_z * inv_z,
        0.0,
        k.fy * inv_z,
        -k.fy * p.y * inv_z * inv_z,
    );
    Ok((px, j_cam * cam.orientation.matrix()))
}

/// Perspective projection of all 15 joints.
pub fn project(pose: &Pose, cam: &CameraPose, k: &Intrinsics) -> Result<[Vector2<f64>; JOINT_COUNT]> {
    let mut out = [Vector2::zeros(); JOINT_COUNT];
    for (i, joint) in pose.joints.iter().enumerate() {
        out[i] = project_point(joint, cam, k, i)?;
    }
    Ok(out)
}

/// Lift pixels along their viewing rays to a common planar depth (camera-frame
/// z coordinate) of `depth` meters.
pub fn back_project(
    joints2d: &[Vector2<f64>; JOINT_COUNT],
    cam: &CameraPose,
    k: &Intrinsics,
    depth: f64,
) -> Result<Pose> {
    if depth <= DEPTH_EPSILON {
        return Err(Error::NonPositiveDepth {
            joint: 0,
            depth,
            min: DEPTH_EPSILON,
        });
    }
    let mut joints = [Vector3::zeros(); JOINT_COUNT];
    for (i, px) in joints2d.iter().enumerate() {
        let ray = Vector3::new((px.x - k.cx) / k.fx, (px.y - k.cy) / k.fy, 1.0);
        joints[i] = cam.to_world(&(ray * depth));
    }
    Ok(Pose::new(joints))
}

/// Camera at `position` with the optical axis through `target` and zero roll
/// (image up aligned with world +z as far as possible).
pub fn look_at(position: &Vector3<f64>, target: &Vector3<f64>) -> Result<CameraPose> {
    let forward = target - position;
    let norm = forward.norm();
    if norm < 1e-9 {
        return Err(Error::DegenerateLookAt(format!(
            "position {position:?} coincides with target"
        )));
    }
    let f = forward / norm;
    let up = Vector3::z();
    // Image "down" is world -z projected perpendicular to the view direction.
    let down = -up + f * up.dot(&f);
    let down_norm = down.norm();
    if down_norm < 1e-9 {
        return Err(Error::DegenerateLookAt(
            "view direction parallel to the world up axis".into(),
        ));
    }
    let y_cam = down / down_norm;
    let x_cam = y_cam.cross(&f);
    let rot = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_rows(&[
        x_cam.transpose(),
        y_cam.transpose(),
        f.transpose(),
    ]));
    Ok(CameraPose::new(*position, rot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_k() -> Intrinsics {
        Intrinsics::default_vga()
    }

    /// Camera sitting at the origin looking down +x.
    fn cam_at_origin_facing_x() -> CameraPose {
        look_at(&Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.0)).unwrap()
    }

    fn random_camera(rng: &mut impl Rng) -> CameraPose {
        let pos = Vector3::new(
            rng.gen_range(3.0..9.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(0.5..3.0),
        );
        look_at(&pos, &Vector3::new(rng.gen_range(-0.5..0.5), 0.0, 1.0)).unwrap()
    }

    #[test]
    fn optical_axis_point_maps_to_principal_point() {
        let cam = cam_at_origin_facing_x();
        let px = project_point(&Vector3::new(1.0, 0.0, 0.0), &cam, &test_k(), 0).unwrap();
        assert_relative_eq!(px.x, 320.0, epsilon = 1e-9);
        assert_relative_eq!(px.y, 240.0, epsilon = 1e-9);
    }

    #[test]
    fn lateral_offset_scales_by_focal_over_depth() {
        let cam = cam_at_origin_facing_x();
        // Facing +x with z up, camera-right is world -y.
        let px = project_point(&Vector3::new(1.0, -0.5, 0.0), &cam, &test_k(), 0).unwrap();
        assert_relative_eq!(px.x, 320.0 + 250.0, epsilon = 1e-9);
        assert_relative_eq!(px.y, 240.0, epsilon = 1e-9);
    }

    #[test]
    fn projection_matches_homogeneous_oracle() {
        // Independent matrix-form projection: u = K [R | -RC] X in
        // homogeneous coordinates, then a perspective divide.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let cam = random_camera(&mut rng);
            let k = test_k();
            let x = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..2.0),
            );
            let r = cam.orientation.matrix();
            let t = -(r * cam.position);
            let pc = r * x + t;
            if pc.z <= DEPTH_EPSILON {
                continue;
            }
            let km = nalgebra::Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
            let h = km * pc;
            let expect = Vector2::new(h.x / h.z, h.y / h.z);
            let got = project_point(&x, &cam, &k, 0).unwrap();
            assert_relative_eq!(got.x, expect.x, epsilon = 1e-9);
            assert_relative_eq!(got.y, expect.y, epsilon = 1e-9);
        }
    }

    #[test]
    fn behind_camera_is_an_error() {
        let cam = cam_at_origin_facing_x();
        let err = project_point(&Vector3::new(-1.0, 0.0, 0.0), &cam, &test_k(), 3).unwrap_err();
        assert!(matches!(err, Error::NonPositiveDepth { joint: 3, .. }));
    }

    #[test]
    fn principal_point_back_projects_along_axis() {
        let cam = cam_at_origin_facing_x();
        let pixels = [Vector2::new(320.0, 240.0); JOINT_COUNT];
        let pose = back_project(&pixels, &cam, &test_k(), 4.0).unwrap();
        for j in pose.joints.iter() {
            assert_relative_eq!(*j, Vector3::new(4.0, 0.0, 0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn project_back_project_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cam = random_camera(&mut rng);
        let k = test_k();
        let mut pixels = [Vector2::zeros(); JOINT_COUNT];
        for px in pixels.iter_mut() {
            *px = Vector2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
        }
        let pose = back_project(&pixels, &cam, &k, 7.0).unwrap();
        let reproj = project(&pose, &cam, &k).unwrap();
        for (a, b) in pixels.iter().zip(reproj.iter()) {
            assert_relative_eq!(a.x, b.x, epsilon = 1e-9);
            assert_relative_eq!(a.y, b.y, epsilon = 1e-9);
        }
        // Planar convention: every lifted point sits at camera-frame depth 7.
        for j in pose.joints.iter() {
            assert_relative_eq!(cam.to_camera(j).z, 7.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn look_at_aims_optical_axis() {
        let cam = look_at(&Vector3::new(0.0, 0.0, 7.0), &Vector3::new(0.0, 0.001, 0.0)).unwrap();
        let f = cam.forward();
        assert!(f.z < -0.99, "optical axis should point down, got {f:?}");
        // Target lands on the principal point.
        let px = project_point(&Vector3::new(0.0, 0.001, 0.0), &cam, &test_k(), 0).unwrap();
        assert_relative_eq!(px.x, 320.0, epsilon = 1e-6);
        assert_relative_eq!(px.y, 240.0, epsilon = 1e-6);
    }

    #[test]
    fn antipodal_cameras_have_opposite_axes() {
        let target = Vector3::new(0.0, 0.0, 1.0);
        let a = look_at(&Vector3::new(7.0, 2.0, 1.0), &target).unwrap();
        let b = look_at(&Vector3::new(-7.0, -2.0, 1.0), &target).unwrap();
        assert_relative_eq!(a.forward(), -b.forward(), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_look_at_is_an_error() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!(matches!(
            look_at(&p, &p),
            Err(Error::DegenerateLookAt(_))
        ));
        assert!(matches!(
            look_at(&Vector3::new(0.0, 0.0, 5.0), &Vector3::zeros()),
            Err(Error::DegenerateLookAt(_))
        ));
    }

    #[test]
    fn rotations_are_proper() {
        let cam = look_at(&Vector3::new(3.0, -4.0, 2.0), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(cam.orientation.matrix().determinant(), 1.0, epsilon = 1e-12);
        let rt = cam.orientation.matrix() * cam.orientation.matrix().transpose();
        assert_relative_eq!(rt, nalgebra::Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = test_k();
        let step = 1e-6;
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let x = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..2.0),
            );
            if cam.to_camera(&x).z < 0.5 {
                continue;
            }
            let (_, jac) = project_point_with_jacobian(&x, &cam, &k, 0).unwrap();
            for axis in 0..3 {
                let mut dx = Vector3::zeros();
                dx[axis] = step;
                let plus = project_point(&(x + dx), &cam, &k, 0).unwrap();
                let minus = project_point(&(x - dx), &cam, &k, 0).unwrap();
                let fd = (plus - minus) / (2.0 * step);
                for row in 0..2 {
                    let a = jac[(row, axis)];
                    let denom = a.abs().max(fd[row].abs()).max(1.0);
                    assert!(
                        (a - fd[row]).abs() / denom < 1e-5,
                        "jacobian mismatch: analytic {a}, fd {}",
                        fd[row]
                    );
                }
            }
        }
    }

    proptest! {
        // Scaling the focal length scales centered pixel coordinates.
        #[test]
        fn projection_scale_consistency(seed in 0u64..500, s in 1.1f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cam = random_camera(&mut rng);
            let k = test_k();
            let scaled = Intrinsics::new(k.fx * s, k.fy * s, k.cx, k.cy, k.width, k.height);
            let x = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..2.0),
            );
            prop_assume!(cam.to_camera(&x).z > 0.5);
            let a = project_point(&x, &cam, &k, 0).unwrap();
            let b = project_point(&x, &cam, &scaled, 0).unwrap();
            prop_assert!(((b.x - k.cx) - s * (a.x - k.cx)).abs() < 1e-9 * s * a.x.abs().max(1.0));
            prop_assert!(((b.y - k.cy) - s * (a.y - k.cy)).abs() < 1e-9 * s * a.y.abs().max(1.0));
        }
    }
}
