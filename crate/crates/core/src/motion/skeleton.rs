use nalgebra::{Matrix3, Vector3};

use super::NUM_JOINTS;

/// Joint order of every per-joint channel block.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
];

/// Parent of each joint; the pelvis is the root.
pub const JOINT_PARENTS: [Option<usize>; NUM_JOINTS] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
];

/// Left/right joint pairs swapped by a sagittal mirror.
pub const MIRROR_PAIRS: [(usize, usize); 9] =
    [(1, 2), (4, 5), (7, 8), (10, 11), (13, 14), (16, 17), (18, 19), (20, 21), (0, 0)];

// Rest-pose bone offsets in meters. Y up, facing +Z, the body's left is +X.
const BONE_OFFSETS: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.09, -0.08, 0.0],
    [-0.09, -0.08, 0.0],
    [0.0, 0.11, -0.01],
    [0.01, -0.38, 0.0],
    [-0.01, -0.38, 0.0],
    [0.0, 0.13, 0.01],
    [0.0, -0.40, -0.03],
    [0.0, -0.40, -0.03],
    [0.0, 0.06, 0.02],
    [0.02, -0.05, 0.12],
    [-0.02, -0.05, 0.12],
    [0.0, 0.21, -0.02],
    [0.07, 0.12, -0.01],
    [-0.07, 0.12, -0.01],
    [0.0, 0.10, 0.04],
    [0.11, 0.03, -0.01],
    [-0.11, 0.03, -0.01],
    [0.26, 0.0, -0.02],
    [-0.26, 0.0, -0.02],
    [0.25, 0.0, 0.0],
    [-0.25, 0.0, 0.0],
];

/// The fixed canonical skeleton used to synthesize joint data.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub names: [&'static str; NUM_JOINTS],
    pub parents: [Option<usize>; NUM_JOINTS],
    pub offsets: [Vector3<f64>; NUM_JOINTS],
}

impl Default for Skeleton {
    fn default() -> Self {
        Self {
            names: JOINT_NAMES,
            parents: JOINT_PARENTS,
            offsets: BONE_OFFSETS.map(|o| Vector3::new(o[0], o[1], o[2])),
        }
    }
}

impl Skeleton {
    /// Standing height of the pelvis above the ground in the rest pose.
    pub fn pelvis_height(&self) -> f64 {
        // hip + knee + ankle + foot drop
        -(self.offsets[1].y + self.offsets[4].y + self.offsets[7].y + self.offsets[10].y)
    }
}

/// Joint positions from local rotations. `local[0]` is the root rotation;
/// `local[j]` for `j >= 1` rotates joint `j`'s children. Parents precede
/// children in [`JOINT_NAMES`] order.
pub fn forward_kinematics(
    skeleton: &Skeleton,
    root_pos: Vector3<f64>,
    local: &[Matrix3<f64>; NUM_JOINTS],
) -> [Vector3<f64>; NUM_JOINTS] {
    let mut global_rot = [Matrix3::identity(); NUM_JOINTS];
    let mut pos = [Vector3::zeros(); NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        match skeleton.parents[j] {
            None => {
                global_rot[j] = local[j];
                pos[j] = root_pos;
            }
            Some(p) => {
                global_rot[j] = global_rot[p] * local[j];
                pos[j] = pos[p] + global_rot[p] * skeleton.offsets[j];
            }
        }
    }
    pos
}
