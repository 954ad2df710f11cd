use nalgebra::{Matrix3, Rotation3, Vector3};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{assemble_frame, rot_y};
use crate::motion::{
    rot6d_to_matrix, MotionFrame, MotionSequence, Rot6D, Skeleton, FRAME_DIM, MIRROR_PAIRS, NUM_JOINTS,
};

/// Follower delay in frames for reaction pairs.
pub const REACTION_DELAY: usize = 10;
/// Follower offset along world +X, meters.
pub const REACTION_OFFSET: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "edit", rename_all = "snake_case")]
pub enum EditKind {
    SpeedUp { factor: f64 },
    Mirror,
    Amplitude { scale: f64 },
}

impl EditKind {
    pub fn instruction(&self) -> &'static str {
        match *self {
            EditKind::SpeedUp { .. } => "Speed up your motion.",
            EditKind::Mirror => "Mirror your motion from left to right.",
            EditKind::Amplitude { scale } if scale >= 1.0 => "Swing your arms and legs wider.",
            EditKind::Amplitude { .. } => "Make your arm and leg swing smaller.",
        }
    }

    pub fn apply(&self, seq: &MotionSequence) -> MotionSequence {
        match *self {
            EditKind::SpeedUp { factor } => speed_up(seq, factor),
            EditKind::Mirror => mirror(seq),
            EditKind::Amplitude { scale } => scale_amplitude(seq, scale),
        }
    }
}

/// Plays the motion `factor` times faster: `round(T / factor)` frames, frame
/// `j` linearly interpolated at source time `j (T - 1) / (T' - 1)`.
pub fn speed_up(seq: &MotionSequence, factor: f64) -> MotionSequence {
    let t = seq.len();
    let t_new = ((t as f64 / factor).round() as usize).max(1);
    let src = seq.data();
    let mut out = Array2::zeros((t_new, FRAME_DIM));
    for j in 0..t_new {
        let u = if t_new > 1 { j as f64 * (t - 1) as f64 / (t_new - 1) as f64 } else { 0.0 };
        let lo = (u.floor() as usize).min(t - 1);
        let hi = (lo + 1).min(t - 1);
        let w = u - lo as f64;
        for c in 0..FRAME_DIM {
            out[[j, c]] = (1.0 - w) * src[[lo, c]] + w * src[[hi, c]];
        }
    }
    MotionSequence::new(out).expect("non-empty")
}

fn mirror_pair(j: usize) -> usize {
    MIRROR_PAIRS
        .iter()
        .find_map(|&(a, b)| if a == j { Some(b) } else if b == j { Some(a) } else { None })
        .unwrap_or(j)
}

// Conjugation by diag(-1, 1, 1) acting on the two stored columns.
fn mirror_rot(r: &Rot6D) -> Rot6D {
    Rot6D::new(Vector3::new(r.a.x, -r.a.y, -r.a.z), Vector3::new(-r.b.x, r.b.y, r.b.z))
}

fn mirror_vec(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(-v.x, v.y, v.z)
}

/// Reflects the motion across the sagittal plane and swaps left/right joints.
pub fn mirror(seq: &MotionSequence) -> MotionSequence {
    let frames: Vec<MotionFrame> = (0..seq.len())
        .map(|i| {
            let f = seq.frame(i);
            MotionFrame {
                root_translation: mirror_vec(&f.root_translation),
                root_orient: mirror_rot(&f.root_orient),
                joint_rots: std::array::from_fn(|k| mirror_rot(&f.joint_rots[mirror_pair(k + 1) - 1])),
                joint_pos: std::array::from_fn(|j| mirror_vec(&f.joint_pos[mirror_pair(j)])),
            }
        })
        .collect();
    MotionSequence::from_frames(&frames).expect("same shape")
}

fn decode(r: &Rot6D) -> Matrix3<f64> {
    rot6d_to_matrix(r).unwrap_or_else(|_| Matrix3::identity())
}

/// Scales every local joint rotation angle by `scale` (axis kept) and
/// recomputes joint positions. Root trajectory and heading are untouched.
pub fn scale_amplitude(seq: &MotionSequence, scale: f64) -> MotionSequence {
    let skeleton = Skeleton::default();
    let frames: Vec<MotionFrame> = (0..seq.len())
        .map(|i| {
            let f = seq.frame(i);
            let root = decode(&f.root_orient);
            let yaw = root[(0, 2)].atan2(root[(2, 2)]);
            let mut local = [Matrix3::identity(); NUM_JOINTS];
            local[0] = rot_y(-yaw) * root;
            for j in 1..NUM_JOINTS {
                let r = Rotation3::from_matrix(&decode(&f.joint_rots[j - 1]));
                local[j] = Rotation3::from_scaled_axis(r.scaled_axis() * scale).into_inner();
            }
            assemble_frame(&skeleton, f.root_translation, yaw, &local)
        })
        .collect();
    MotionSequence::from_frames(&frames).expect("same shape")
}

/// A follower that replays the actor `REACTION_DELAY` frames late, offset
/// by `REACTION_OFFSET` meters along +X. Early frames hold the actor's
/// first pose.
pub fn reaction_follower(actor: &MotionSequence) -> MotionSequence {
    let src = actor.data();
    let mut out = Array2::zeros(src.raw_dim());
    for i in 0..actor.len() {
        let k = i.saturating_sub(REACTION_DELAY);
        out.row_mut(i).assign(&src.row(k));
        out[[i, 0]] += REACTION_OFFSET;
    }
    MotionSequence::new(out).expect("same shape")
}
