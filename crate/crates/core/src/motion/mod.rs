//! The 201-channel per-frame motion representation.
//!
//! Channel layout of one flattened frame (frozen; motion files and
//! checkpoints depend on it):
//!
//! | channels    | content                                                  |
//! |-------------|----------------------------------------------------------|
//! | `0..3`      | root translation `(x, y, z)` in meters, Y up              |
//! | `3..9`      | root orientation, 6D (`a` then `b`)                       |
//! | `9..135`    | 21 local joint rotations, 6D, joints 1..=21 in [`JOINT_NAMES`] order |
//! | `135..201`  | 22 local joint positions `(x, y, z)`, joints 0..=21      |
//!
//! Joint positions are expressed in the heading frame: relative to the
//! ground projection of the pelvis with the root yaw removed.

mod io;
mod rotation;
mod skeleton;
mod stats;

pub use io::{read_motion, write_motion, MOTION_FORMAT_VERSION, MOTION_MAGIC};
pub use rotation::{matrix_to_rot6d, rot6d_to_matrix, Rot6D};
pub use skeleton::{forward_kinematics, Skeleton, JOINT_NAMES, JOINT_PARENTS, MIRROR_PAIRS};
pub use stats::{compute_stats, NormStats};

use nalgebra::Vector3;
use ndarray::{Array2, ArrayView1};
use thiserror::Error;

pub const FRAME_DIM: usize = 201;
pub const NUM_JOINTS: usize = 22;
pub const NUM_LOCAL_ROTS: usize = 21;
pub const FPS: u32 = 30;
pub const DEFAULT_MAX_FRAMES: usize = 190;

pub const ROOT_TRANSLATION: std::ops::Range<usize> = 0..3;
pub const ROOT_ORIENT: std::ops::Range<usize> = 3..9;
pub const JOINT_ROTS: std::ops::Range<usize> = 9..135;
pub const JOINT_POS: std::ops::Range<usize> = 135..201;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("degenerate 6D rotation: {0}")]
    DegenerateRotation(&'static str),
    #[error("matrix is not a rotation (orthonormality error {0:.3e})")]
    NotARotation(f64),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("cannot compute statistics of an empty corpus")]
    EmptyCorpus,
    #[error("bad motion file magic")]
    BadMagic,
    #[error("unsupported motion file version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported frame rate {0} (expected 30)")]
    UnsupportedFps(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One decoded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFrame {
    pub root_translation: Vector3<f64>,
    pub root_orient: Rot6D,
    pub joint_rots: [Rot6D; NUM_LOCAL_ROTS],
    pub joint_pos: [Vector3<f64>; NUM_JOINTS],
}

impl MotionFrame {
    pub fn flatten(&self) -> [f64; FRAME_DIM] {
        let mut out = [0.0; FRAME_DIM];
        out[0..3].copy_from_slice(self.root_translation.as_slice());
        out[3..9].copy_from_slice(&self.root_orient.to_array());
        for (j, r) in self.joint_rots.iter().enumerate() {
            let o = JOINT_ROTS.start + 6 * j;
            out[o..o + 6].copy_from_slice(&r.to_array());
        }
        for (j, p) in self.joint_pos.iter().enumerate() {
            let o = JOINT_POS.start + 3 * j;
            out[o..o + 3].copy_from_slice(p.as_slice());
        }
        out
    }

    pub fn unflatten(v: &[f64]) -> Result<Self, MotionError> {
        if v.len() != FRAME_DIM {
            return Err(MotionError::ShapeMismatch {
                expected: FRAME_DIM.to_string(),
                got: v.len().to_string(),
            });
        }
        let v3 = |o: usize| Vector3::new(v[o], v[o + 1], v[o + 2]);
        Ok(Self {
            root_translation: v3(0),
            root_orient: Rot6D::from_slice(&v[3..9]),
            joint_rots: std::array::from_fn(|j| {
                let o = JOINT_ROTS.start + 6 * j;
                Rot6D::from_slice(&v[o..o + 6])
            }),
            joint_pos: std::array::from_fn(|j| v3(JOINT_POS.start + 3 * j)),
        })
    }
}

/// A `T x 201` motion at 30 fps.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    data: Array2<f64>,
}

impl MotionSequence {
    pub fn new(data: Array2<f64>) -> Result<Self, MotionError> {
        if data.ncols() != FRAME_DIM || data.nrows() == 0 {
            return Err(MotionError::ShapeMismatch {
                expected: format!("T x {FRAME_DIM} with T >= 1"),
                got: format!("{} x {}", data.nrows(), data.ncols()),
            });
        }
        Ok(Self { data })
    }

    pub fn from_frames(frames: &[MotionFrame]) -> Result<Self, MotionError> {
        let mut data = Array2::zeros((frames.len(), FRAME_DIM));
        for (mut row, f) in data.rows_mut().into_iter().zip(frames) {
            row.assign(&ArrayView1::from(&f.flatten()));
        }
        Self::new(data)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fps(&self) -> u32 {
        FPS
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn frame(&self, i: usize) -> MotionFrame {
        MotionFrame::unflatten(self.data.row(i).as_slice().expect("row-major"))
            .expect("row has 201 channels")
    }

    /// Pelvis ground-plane position `(x, z)` at frame `i`.
    pub fn pelvis_xz(&self, i: usize) -> nalgebra::Vector2<f64> {
        nalgebra::Vector2::new(self.data[[i, 0]], self.data[[i, 2]])
    }

    pub fn joint_position(&self, i: usize, joint: usize) -> Vector3<f64> {
        let o = JOINT_POS.start + 3 * joint;
        Vector3::new(self.data[[i, o]], self.data[[i, o + 1]], self.data[[i, o + 2]])
    }
}
