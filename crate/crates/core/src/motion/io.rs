//! Binary motion files.
//!
//! Little-endian: magic `UMOM`, `u32` version (1), `u32` frame count `T`,
//! `u32` fps (30), then `T * 201` `f32` values, row-major.

use std::io::{Read, Write};

use ndarray::Array2;

use super::{MotionError, MotionSequence, FPS, FRAME_DIM};

pub const MOTION_MAGIC: &[u8; 4] = b"UMOM";
pub const MOTION_FORMAT_VERSION: u32 = 1;

pub fn write_motion<W: Write>(w: &mut W, seq: &MotionSequence) -> Result<(), MotionError> {
    let mut buf = Vec::with_capacity(16 + seq.len() * FRAME_DIM * 4);
    buf.extend_from_slice(MOTION_MAGIC);
    buf.extend_from_slice(&MOTION_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    buf.extend_from_slice(&FPS.to_le_bytes());
    for v in seq.data().iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, MotionError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_motion<R: Read>(r: &mut R) -> Result<MotionSequence, MotionError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MOTION_MAGIC {
        return Err(MotionError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != MOTION_FORMAT_VERSION {
        return Err(MotionError::UnsupportedVersion(version));
    }
    let t = read_u32(r)? as usize;
    let fps = read_u32(r)?;
    if fps != FPS {
        return Err(MotionError::UnsupportedFps(fps));
    }
    let mut raw = vec![0u8; t * FRAME_DIM * 4];
    r.read_exact(&mut raw)?;
    let values: Vec<f64> =
        raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let data = Array2::from_shape_vec((t, FRAME_DIM), values).map_err(|e| MotionError::ShapeMismatch {
        expected: format!("{t} x {FRAME_DIM}"),
        got: e.to_string(),
    })?;
    MotionSequence::new(data)
}

impl MotionSequence {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), MotionError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_motion(&mut f, self)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, MotionError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        read_motion(&mut f)
    }

    /// Rounds every value through `f32`, as a file round trip does.
    pub fn quantized(&self) -> Self {
        Self::new(self.data().mapv(|v| v as f32 as f64)).expect("same shape")
    }
}
