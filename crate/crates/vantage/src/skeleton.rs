//! Skeleton topology, pose representation, bone lengths, and the evaluation
//! metric.
//!
//! A pose is 15 joints in world coordinates (meters) with the hip at index 0.
//! The joint order is a fixed convention of this crate:
//!
//! | index | joint          | index | joint          |
//! |-------|----------------|-------|----------------|
//! | 0     | hip (pelvis)   | 8     | right wrist    |
//! | 1     | neck           | 9     | left hip       |
//! | 2     | head           | 10    | left knee      |
//! | 3     | left shoulder  | 11    | left ankle     |
//! | 4     | left elbow     | 12    | right hip      |
//! | 5     | left wrist     | 13    | right knee     |
//! | 6     | right shoulder | 14    | right ankle    |
//! | 7     | right elbow    |       |                |

use nalgebra::{Rotation3, Vector3};

/// Number of joints in a pose.
pub const JOINT_COUNT: usize = 15;

/// Named joint indices into [`Pose::joints`].
pub mod joint {
    pub const HIP: usize = 0;
    pub const NECK: usize = 1;
    pub const HEAD: usize = 2;
    pub const L_SHOULDER: usize = 3;
    pub const L_ELBOW: usize = 4;
    pub const L_WRIST: usize = 5;
    pub const R_SHOULDER: usize = 6;
    pub const R_ELBOW: usize = 7;
    pub const R_WRIST: usize = 8;
    pub const L_HIP: usize = 9;
    pub const L_KNEE: usize = 10;
    pub const L_ANKLE: usize = 11;
    pub const R_HIP: usize = 12;
    pub const R_KNEE: usize = 13;
    pub const R_ANKLE: usize = 14;
}

/// One frame's absolute 3D skeleton: 15 joints in meters, world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub joints: [Vector3<f64>; JOINT_COUNT],
}

impl Pose {
    pub fn new(joints: [Vector3<f64>; JOINT_COUNT]) -> Self {
        debug_assert!(
            joints.iter().all(|j| j.iter().all(|c| c.is_finite())),
            "pose coordinates must be finite"
        );
        Pose { joints }
    }

    /// All joints at the origin. Mostly useful as an allocation seed.
    pub fn zeros() -> Self {
        Pose {
            joints: [Vector3::zeros(); JOINT_COUNT],
        }
    }

    pub fn hip(&self) -> Vector3<f64> {
        self.joints[joint::HIP]
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().all(|j| j.iter().all(|c| c.is_finite()))
    }

    /// Rigid transform `x -> rot * x + t` applied to every joint.
    pub fn transformed(&self, rot: &Rotation3<f64>, t: &Vector3<f64>) -> Pose {
        let mut joints = self.joints;
        for j in joints.iter_mut() {
            *j = rot * *j + t;
        }
        Pose { joints }
    }

    pub fn translated(&self, t: &Vector3<f64>) -> Pose {
        let mut joints = self.joints;
        for j in joints.iter_mut() {
            *j += t;
        }
        Pose { joints }
    }

    /// Rotate the whole pose about a vertical axis through `pivot`.
    pub fn yawed_about(&self, pivot: &Vector3<f64>, angle: f64) -> Pose {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
        let mut joints = self.joints;
        for j in joints.iter_mut() {
            *j = rot * (*j - pivot) + pivot;
        }
        Pose { joints }
    }

    /// The canonical standing template: upright, facing +x, left side toward
    /// +y, feet near z = 0, scaled so that [`stature`] is exactly
    /// [`AVERAGE_STATURE_M`].
    pub fn template() -> Pose {
        let raw = Pose::new([
            Vector3::new(0.0, 0.0, 0.95),    // hip
            Vector3::new(0.0, 0.0, 1.47),    // neck
            Vector3::new(0.02, 0.0, 1.71),   // head
            Vector3::new(0.0, 0.21, 1.42),   // l_shoulder
            Vector3::new(0.02, 0.24, 1.13),  // l_elbow
            Vector3::new(0.05, 0.25, 0.86),  // l_wrist
            Vector3::new(0.0, -0.21, 1.42),  // r_shoulder
            Vector3::new(0.02, -0.24, 1.13), // r_elbow
            Vector3::new(0.05, -0.25, 0.86), // r_wrist
            Vector3::new(0.0, 0.11, 0.93),   // l_hip
            Vector3::new(0.01, 0.12, 0.52),  // l_knee
            Vector3::new(0.015, 0.13, 0.09), // l_ankle
            Vector3::new(0.0, -0.11, 0.93),  // r_hip
            Vector3::new(0.01, -0.12, 0.52), // r_knee
            Vector3::new(0.015, -0.13, 0.09), // r_ankle
        ]);
        let scale = AVERAGE_STATURE_M / stature(&raw);
        let mut joints = raw.joints;
        for j in joints.iter_mut() {
            *j *= scale;
        }
        Pose { joints }
    }
}

/// Skeleton connectivity: a tree of bones rooted at the hip, plus the
/// left/right mirror pairing used by the symmetry penalty.
#[derive(Debug, Clone)]
pub struct BoneTopology {
    /// (parent joint index, child joint index) per bone.
    pub bones: Vec<(usize, usize)>,
    /// (left bone index, right bone index) pairs into `bones`.
    pub mirror_pairs: Vec<(usize, usize)>,
}

impl BoneTopology {
    /// The 14-bone human topology matching the crate's joint order.
    pub fn human() -> Self {
        use joint::*;
        let bones = vec![
            (HIP, NECK),          // 0
            (NECK, HEAD),         // 1
            (NECK, L_SHOULDER),   // 2
            (L_SHOULDER, L_ELBOW), // 3
            (L_ELBOW, L_WRIST),   // 4
            (NECK, R_SHOULDER),   // 5
            (R_SHOULDER, R_ELBOW), // 6
            (R_ELBOW, R_WRIST),   // 7
            (HIP, L_HIP),         // 8
            (L_HIP, L_KNEE),      // 9
            (L_KNEE, L_ANKLE),    // 10
            (HIP, R_HIP),         // 11
            (R_HIP, R_KNEE),      // 12
            (R_KNEE, R_ANKLE),    // 13
        ];
        let mirror_pairs = vec![(2, 5), (3, 6), (4, 7), (8, 11), (9, 12), (10, 13)];
        let topo = BoneTopology {
            bones,
            mirror_pairs,
        };
        debug_assert!(topo.is_tree());
        topo
    }

    pub fn bone_count(&self) -> usize {
        self.bones.len()
    }

    /// True when the bones form a tree rooted at the hip covering all joints,
    /// with valid indices and distinct mirrored bones.
    pub fn is_tree(&self) -> bool {
        if self.bones.len() != JOINT_COUNT - 1 {
            return false;
        }
        let mut seen_child = [false; JOINT_COUNT];
        for &(p, c) in &self.bones {
            if p >= JOINT_COUNT || c >= JOINT_COUNT || c == joint::HIP || seen_child[c] {
                return false;
            }
            seen_child[c] = true;
        }
        // Reachability from the hip.
        let mut reach = [false; JOINT_COUNT];
        reach[joint::HIP] = true;
        for _ in 0..self.bones.len() {
            for &(p, c) in &self.bones {
                if reach[p] {
                    reach[c] = true;
                }
            }
        }
        if !reach.iter().all(|&r| r) {
            return false;
        }
        self.mirror_pairs
            .iter()
            .all(|&(l, r)| l != r && l < self.bones.len() && r < self.bones.len())
    }
}

/// One nonnegative length per bone, meters, in `BoneTopology::bones` order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneLengths {
    pub lengths: Vec<f64>,
}

impl BoneLengths {
    pub fn new(lengths: Vec<f64>) -> Self {
        BoneLengths { lengths }
    }
}

/// Euclidean length of every bone of `pose`.
pub fn compute_bone_lengths(pose: &Pose, topo: &BoneTopology) -> BoneLengths {
    let lengths = topo
        .bones
        .iter()
        .map(|&(p, c)| (pose.joints[p] - pose.joints[c]).norm())
        .collect();
    BoneLengths { lengths }
}

/// Mean per-joint position error in meters.
pub fn mpjpe(estimated: &Pose, truth: &Pose) -> f64 {
    let sum: f64 = estimated
        .joints
        .iter()
        .zip(truth.joints.iter())
        .map(|(a, b)| (a - b).norm())
        .sum();
    sum / JOINT_COUNT as f64
}

/// Average adult stature used to resolve the depth ambiguity when
/// initializing from a single 2D detection.
pub const AVERAGE_STATURE_M: f64 = 1.75;

/// Approximate standing height of a pose: head-to-hip chain plus the average
/// of the two leg chains. Well defined in any frame, and linear under a
/// uniform scaling of the pose.
pub fn stature(pose: &Pose) -> f64 {
    use joint::*;
    let j = &pose.joints;
    let torso = (j[HEAD] - j[NECK]).norm() + (j[NECK] - j[HIP]).norm();
    let leg = |h: usize, k: usize, a: usize| {
        (j[HIP] - j[h]).norm() + (j[h] - j[k]).norm() + (j[k] - j[a]).norm()
    };
    torso + 0.5 * (leg(L_HIP, L_KNEE, L_ANKLE) + leg(R_HIP, R_KNEE, R_ANKLE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let mut joints = [Vector3::zeros(); JOINT_COUNT];
        for j in joints.iter_mut() {
            *j = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
        }
        Pose::new(joints)
    }

    #[test]
    fn unit_offset_bone_has_length_one() {
        let mut pose = Pose::zeros();
        pose.joints[joint::NECK] = Vector3::new(0.0, 1.0, 0.0);
        let topo = BoneTopology::human();
        let lengths = compute_bone_lengths(&pose, &topo);
        assert_eq!(lengths.lengths[0], 1.0);
    }

    #[test]
    fn template_is_mirror_symmetric() {
        let topo = BoneTopology::human();
        let lengths = compute_bone_lengths(&Pose::template(), &topo);
        for &(l, r) in &topo.mirror_pairs {
            assert!(
                (lengths.lengths[l] - lengths.lengths[r]).abs() < 1e-12,
                "bone pair {l}/{r} differs"
            );
        }
    }

    #[test]
    fn bone_lengths_match_per_bone_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let topo = BoneTopology::human();
        let pose = random_pose(&mut rng);
        let lengths = compute_bone_lengths(&pose, &topo);
        for (b, &(p, c)) in topo.bones.iter().enumerate() {
            let d = pose.joints[p] - pose.joints[c];
            let expect = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
            assert!((lengths.lengths[b] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn bone_lengths_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let topo = BoneTopology::human();
        let pose = random_pose(&mut rng);
        let base = compute_bone_lengths(&pose, &topo);
        let mut max_dev: f64 = 0.0;
        for _ in 0..100 {
            let rot = Rotation3::from_euler_angles(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let t = Vector3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            let moved = compute_bone_lengths(&pose.transformed(&rot, &t), &topo);
            for (a, b) in base.lengths.iter().zip(moved.lengths.iter()) {
                max_dev = max_dev.max((a - b).abs());
            }
        }
        assert!(max_dev < 1e-9, "max deviation {max_dev}");
    }

    #[test]
    fn mpjpe_identity_is_zero() {
        let pose = Pose::template();
        assert_eq!(mpjpe(&pose, &pose), 0.0);
    }

    #[test]
    fn mpjpe_single_displaced_joint() {
        let truth = Pose::template();
        let mut est = truth.clone();
        est.joints[joint::HEAD] += Vector3::new(0.15, 0.0, 0.0);
        assert!((mpjpe(&est, &truth) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mpjpe_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_pose(&mut rng);
        let b = random_pose(&mut rng);
        let mut sum = 0.0;
        for i in 0..JOINT_COUNT {
            let d = a.joints[i] - b.joints[i];
            sum += (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        }
        assert!((mpjpe(&a, &b) - sum / 15.0).abs() < 1e-15);
    }

    #[test]
    fn human_topology_is_tree() {
        assert!(BoneTopology::human().is_tree());
    }

    #[test]
    fn template_stature_is_average() {
        assert!((stature(&Pose::template()) - AVERAGE_STATURE_M).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mpjpe_symmetric_nonnegative(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let ab = mpjpe(&a, &b);
            let ba = mpjpe(&b, &a);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert_eq!(mpjpe(&a, &a), 0.0);
        }
    }
}
