//! Simulated measurements: 2D detections and hip-relative 3D detections
//! produced from ground truth plus Gaussian noise.
//!
//! Noise draws are keyed by the (seed, frame index, candidate index) triple,
//! so a policy that tries a candidate hypothetically and a run that actually
//! moves there observe the same measurement.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{project, CameraPose, Intrinsics};
use crate::skeleton::{joint, Pose, JOINT_COUNT};

pub const DEFAULT_SIGMA_2D: f64 = 3.0;
pub const DEFAULT_SIGMA_3D: f64 = 0.03;

/// Gaussian measurement noise parameters plus the master seed for the
/// reproducible noise streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Standard deviation per pixel coordinate.
    pub sigma_2d: f64,
    /// Standard deviation per meter coordinate of non-hip joints.
    pub sigma_3d: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma_2d: f64, sigma_3d: f64, seed: u64) -> Self {
        debug_assert!(sigma_2d >= 0.0 && sigma_3d >= 0.0);
        NoiseModel {
            sigma_2d,
            sigma_3d,
            seed,
        }
    }

    pub fn noiseless(seed: u64) -> Self {
        NoiseModel::new(0.0, 0.0, seed)
    }

    pub fn default_with_seed(seed: u64) -> Self {
        NoiseModel::new(DEFAULT_SIGMA_2D, DEFAULT_SIGMA_3D, seed)
    }
}

/// Detected 2D joint locations in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection2D {
    pub joints2d: [Vector2<f64>; JOINT_COUNT],
    pub frame: usize,
}

/// Hip-relative 3D joint locations in the detecting camera's frame, with
/// arbitrary scale. The hip entry is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection3D {
    pub joints3d_rel: [Vector3<f64>; JOINT_COUNT],
    pub frame: usize,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent ChaCha stream for one (seed, frame, candidate, salt) key.
pub(crate) fn stream_rng(seed: u64, frame: usize, candidate: u64, salt: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    let mut acc = 0x243F_6A88_85A3_08D3u64;
    for (i, part) in [seed, frame as u64, candidate, salt].into_iter().enumerate() {
        acc = mix64(acc ^ part.wrapping_add(mix64(i as u64 + 1)));
        bytes[i * 8..(i + 1) * 8].copy_from_slice(&acc.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

const SALT_2D: u64 = 0x2D;
const SALT_3D: u64 = 0x3D;

/// Projects the ground truth and perturbs each pixel coordinate with
/// i.i.d. Gaussian noise of standard deviation `sigma_2d`.
///
/// Fails with [`Error::SubjectNotVisible`] when any joint lands outside the
/// image by more than `margin` pixels (or behind the camera); pass
/// `f64::INFINITY` to disable the bounds check.
pub fn detect_2d(
    truth: &Pose,
    cam: &CameraPose,
    k: &Intrinsics,
    noise: &NoiseModel,
    frame: usize,
    candidate: u64,
    margin: f64,
) -> Result<Detection2D> {
    let projected = match project(truth, cam, k) {
        Ok(p) => p,
        Err(Error::NonPositiveDepth { joint, .. }) => {
            return Err(Error::SubjectNotVisible(format!(
                "joint {joint} behind camera at frame {frame}"
            )))
        }
        Err(e) => return Err(e),
    };
    for (j, px) in projected.iter().enumerate() {
        if !k.contains(px, margin) {
            return Err(Error::SubjectNotVisible(format!(
                "joint {j} at ({:.1}, {:.1}) outside image at frame {frame}",
                px.x, px.y
            )));
        }
    }
    let mut joints2d = projected;
    if noise.sigma_2d > 0.0 {
        let mut rng = stream_rng(noise.seed, frame, candidate, SALT_2D);
        let normal = Normal::new(0.0, noise.sigma_2d).expect("valid sigma");
        for px in joints2d.iter_mut() {
            px.x += normal.sample(&mut rng);
            px.y += normal.sample(&mut rng);
        }
    }
    Ok(Detection2D { joints2d, frame })
}

/// Hip-relative pose in the camera frame, scaled by `scale_corruption`
/// (simulating the unknown scale of a lifting network) and perturbed with
/// Gaussian noise on the non-hip joints. The hip stays pinned at zero.
pub fn detect_3d_relative(
    truth: &Pose,
    cam: &CameraPose,
    noise: &NoiseModel,
    scale_corruption: f64,
    frame: usize,
    candidate: u64,
) -> Detection3D {
    let hip = truth.hip();
    let mut joints3d_rel = [Vector3::zeros(); JOINT_COUNT];
    for (j, out) in joints3d_rel.iter_mut().enumerate() {
        if j == joint::HIP {
            continue;
        }
        *out = cam.orientation * (truth.joints[j] - hip) * scale_corruption;
    }
    if noise.sigma_3d > 0.0 {
        let mut rng = stream_rng(noise.seed, frame, candidate, SALT_3D);
        let normal = Normal::new(0.0, noise.sigma_3d).expect("valid sigma");
        for (j, out) in joints3d_rel.iter_mut().enumerate() {
            if j == joint::HIP {
                continue;
            }
            for axis in 0..3 {
                out[axis] += normal.sample(&mut rng);
            }
        }
    }
    Detection3D { joints3d_rel, frame }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::look_at;
    use approx::assert_relative_eq;

    fn setup() -> (Pose, CameraPose, Intrinsics) {
        let pose = Pose::template();
        let cam = look_at(&Vector3::new(7.0, 0.0, 1.5), &pose.hip()).unwrap();
        (pose, cam, Intrinsics::default_vga())
    }

    #[test]
    fn zero_noise_is_exact_projection() {
        let (pose, cam, k) = setup();
        let det = detect_2d(&pose, &cam, &k, &NoiseModel::noiseless(1), 0, 0, 0.0).unwrap();
        let expect = project(&pose, &cam, &k).unwrap();
        for (a, b) in det.joints2d.iter().zip(expect.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn same_key_reproduces_same_noise() {
        let (pose, cam, k) = setup();
        let noise = NoiseModel::default_with_seed(11);
        let a = detect_2d(&pose, &cam, &k, &noise, 3, 7, 0.0).unwrap();
        let b = detect_2d(&pose, &cam, &k, &noise, 3, 7, 0.0).unwrap();
        assert_eq!(a, b);
        let c = detect_2d(&pose, &cam, &k, &noise, 3, 8, 0.0).unwrap();
        assert_ne!(a, c, "different candidate must see a different draw");
        let d = detect_2d(&pose, &cam, &k, &noise, 4, 7, 0.0).unwrap();
        assert_ne!(a, d, "different frame must see a different draw");
    }

    #[test]
    fn empirical_2d_std_matches_sigma() {
        let (pose, cam, k) = setup();
        let noise = NoiseModel::new(3.0, 0.0, 99);
        let clean = project(&pose, &cam, &k).unwrap();
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for frame in 0..3400 {
            let det = detect_2d(&pose, &cam, &k, &noise, frame, 0, f64::INFINITY).unwrap();
            for (a, b) in det.joints2d.iter().zip(clean.iter()) {
                sum_sq += (a.x - b.x).powi(2) + (a.y - b.y).powi(2);
                count += 2;
            }
        }
        assert!(count >= 100_000);
        let std = (sum_sq / count as f64).sqrt();
        assert!((std - 3.0).abs() / 3.0 < 0.02, "std {std}");
    }

    #[test]
    fn empirical_3d_std_matches_sigma() {
        let (pose, cam, _) = setup();
        let noise = NoiseModel::new(0.0, 0.03, 4);
        let clean = detect_3d_relative(&pose, &cam, &NoiseModel::noiseless(0), 1.0, 0, 0);
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for frame in 0..2400 {
            let det = detect_3d_relative(&pose, &cam, &noise, 1.0, frame, 0);
            for j in 0..JOINT_COUNT {
                if j == joint::HIP {
                    continue;
                }
                let d = det.joints3d_rel[j] - clean.joints3d_rel[j];
                sum_sq += d.norm_squared();
                count += 3;
            }
        }
        assert!(count >= 100_000);
        let std = (sum_sq / count as f64).sqrt();
        assert!((std - 0.03).abs() / 0.03 < 0.02, "std {std}");
    }

    #[test]
    fn relative_detection_is_truth_minus_hip() {
        let (pose, cam, _) = setup();
        let det = detect_3d_relative(&pose, &cam, &NoiseModel::noiseless(0), 1.0, 0, 0);
        assert_eq!(det.joints3d_rel[joint::HIP], Vector3::zeros());
        for j in 1..JOINT_COUNT {
            let expect = cam.orientation * (pose.joints[j] - pose.hip());
            assert_relative_eq!(det.joints3d_rel[j], expect, epsilon = 1e-12);
        }
        let doubled = detect_3d_relative(&pose, &cam, &NoiseModel::noiseless(0), 2.0, 0, 0);
        for j in 0..JOINT_COUNT {
            assert_relative_eq!(doubled.joints3d_rel[j], det.joints3d_rel[j] * 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_frame_subject_is_not_visible() {
        let (pose, _, k) = setup();
        // Camera so close that limbs exit the frustum.
        let cam = look_at(&Vector3::new(0.8, 0.0, 1.0), &pose.hip()).unwrap();
        let res = detect_2d(&pose, &cam, &k, &NoiseModel::noiseless(0), 0, 0, 0.0);
        assert!(matches!(res, Err(Error::SubjectNotVisible(_))));
        // A generous margin admits the same view.
        assert!(detect_2d(&pose, &cam, &k, &NoiseModel::noiseless(0), 0, 0, 1e6).is_ok());
    }
}
