//! Procedural gait synthesis: the pelvis tracks a curve exactly while the
//! limbs swing with a phase locked to the distance traveled.

mod edits;

pub use edits::{mirror, reaction_follower, scale_amplitude, speed_up, EditKind, REACTION_DELAY, REACTION_OFFSET};

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;

use crate::curves::{ArcLengthTable, CurveError, CurveLimits, ParamCurve};
use crate::motion::{
    forward_kinematics, matrix_to_rot6d, MotionFrame, MotionSequence, Rot6D, Skeleton, FRAME_DIM, NUM_JOINTS,
};

pub(crate) fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub(crate) fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub(crate) fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Limb-swing amplitudes (radians) and stride.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitParams {
    /// Distance covered by one full gait cycle, meters.
    pub stride: f64,
    pub hip: f64,
    pub knee: f64,
    pub shoulder: f64,
    pub elbow: f64,
    pub spine_twist: f64,
    /// Vertical pelvis bob, meters.
    pub bob: f64,
    /// Rotation that lowers the arms from the rest T-pose.
    pub arm_drop: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            stride: 1.2,
            hip: 0.45,
            knee: 0.65,
            shoulder: 0.35,
            elbow: 0.3,
            spine_twist: 0.08,
            bob: 0.02,
            arm_drop: 1.3,
        }
    }
}

/// Local joint rotations (index 0 is the heading-free root) at gait phase `phase`.
pub fn gait_pose(g: &GaitParams, phase: f64) -> [Matrix3<f64>; NUM_JOINTS] {
    let mut local = [Matrix3::identity(); NUM_JOINTS];
    let s = phase.sin();
    let sr = (phase + PI).sin();
    // a leg pointing down swings forward (+Z) under a negative X rotation
    local[1] = rot_x(-g.hip * s);
    local[2] = rot_x(-g.hip * sr);
    local[4] = rot_x(g.knee * 0.5 * (1.0 - phase.cos()));
    local[5] = rot_x(g.knee * 0.5 * (1.0 - (phase + PI).cos()));
    local[3] = rot_y(g.spine_twist * s);
    // arms swing against the leg on the same side
    local[16] = rot_x(g.shoulder * s) * rot_z(-g.arm_drop);
    local[17] = rot_x(g.shoulder * sr) * rot_z(g.arm_drop);
    local[18] = rot_y(g.elbow * 0.5 * (1.0 + s));
    local[19] = rot_y(-g.elbow * 0.5 * (1.0 + sr));
    local
}

/// Assembles one frame from world pelvis position, heading yaw, and local
/// joint rotations. Joint positions come from forward kinematics in the
/// heading frame.
pub fn assemble_frame(
    skeleton: &Skeleton,
    pelvis: Vector3<f64>,
    yaw: f64,
    local: &[Matrix3<f64>; NUM_JOINTS],
) -> MotionFrame {
    let root_local = Vector3::new(0.0, pelvis.y, 0.0);
    let joint_pos = forward_kinematics(skeleton, root_local, local);
    let to6d = |m: &Matrix3<f64>| matrix_to_rot6d(m).unwrap_or_else(|_| Rot6D::identity());
    MotionFrame {
        root_translation: pelvis,
        root_orient: to6d(&(rot_y(yaw) * local[0])),
        joint_rots: std::array::from_fn(|j| to6d(&local[j + 1])),
        joint_pos,
    }
}

/// Heading yaw whose rotation maps +Z onto the planar direction `(dx, dz)`.
pub fn heading_yaw(dx: f64, dz: f64) -> f64 {
    dx.atan2(dz)
}

/// Synthesizes a walk along `curve` with exactly `frames` frames. Frame
/// `i` sits at distance `L i / (frames - 1)` along the curve.
pub fn synthesize_frames(curve: &ParamCurve, frames: usize, gait: &GaitParams) -> MotionSequence {
    let skeleton = Skeleton::default();
    let table = ArcLengthTable::new(curve);
    let total = table.total();
    let height = skeleton.pelvis_height();
    let mut data = Array2::zeros((frames, FRAME_DIM));
    for i in 0..frames {
        let s = if frames > 1 { total * i as f64 / (frames - 1) as f64 } else { 0.0 };
        let t = table.param_at(s);
        let p = curve.point(t);
        let d = curve.tangent(t);
        let phase = TAU * s / gait.stride;
        let pelvis = Vector3::new(p.x, height + gait.bob * (2.0 * phase).cos(), p.y);
        let frame = assemble_frame(&skeleton, pelvis, heading_yaw(d.x, d.y), &gait_pose(gait, phase));
        data.row_mut(i).assign(&ndarray::ArrayView1::from(&frame.flatten()));
    }
    MotionSequence::new(data).expect("frames >= 1")
}

/// Walks `curve` at `speed`; the frame count follows from length, speed and fps.
pub fn synthesize_motion(
    curve: &ParamCurve,
    speed: f64,
    limits: &CurveLimits,
    gait: &GaitParams,
) -> Result<MotionSequence, CurveError> {
    let frames = limits.frames_for(curve.arc_length(), speed);
    if frames > limits.max_frames {
        return Err(CurveError::TooLong(frames, limits.max_frames));
    }
    Ok(synthesize_frames(curve, frames, gait))
}
