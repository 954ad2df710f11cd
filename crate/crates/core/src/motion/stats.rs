use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{MotionError, MotionSequence, FRAME_DIM};

const MIN_VARIANCE: f64 = 1e-12;

/// Per-channel normalization statistics over a motion corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity() -> Self {
        Self { mean: vec![0.0; FRAME_DIM], std: vec![1.0; FRAME_DIM] }
    }

    fn check(&self) -> Result<(), MotionError> {
        if self.mean.len() != FRAME_DIM || self.std.len() != FRAME_DIM {
            return Err(MotionError::ShapeMismatch {
                expected: format!("{FRAME_DIM}-channel stats"),
                got: format!("{}/{}", self.mean.len(), self.std.len()),
            });
        }
        if self.std.iter().any(|s| !(*s > 0.0)) {
            return Err(MotionError::ShapeMismatch {
                expected: "strictly positive std".into(),
                got: "non-positive entry".into(),
            });
        }
        Ok(())
    }

    pub fn normalize_array(&self, x: &Array2<f64>) -> Result<Array2<f64>, MotionError> {
        self.check()?;
        if x.ncols() != FRAME_DIM {
            return Err(MotionError::ShapeMismatch {
                expected: FRAME_DIM.to_string(),
                got: x.ncols().to_string(),
            });
        }
        let mean = Array1::from(self.mean.clone());
        let std = Array1::from(self.std.clone());
        Ok((x - &mean) / &std)
    }

    pub fn denormalize_array(&self, x: &Array2<f64>) -> Result<Array2<f64>, MotionError> {
        self.check()?;
        if x.ncols() != FRAME_DIM {
            return Err(MotionError::ShapeMismatch {
                expected: FRAME_DIM.to_string(),
                got: x.ncols().to_string(),
            });
        }
        let mean = Array1::from(self.mean.clone());
        let std = Array1::from(self.std.clone());
        Ok(x * &std + &mean)
    }

    pub fn normalize(&self, seq: &MotionSequence) -> Result<MotionSequence, MotionError> {
        MotionSequence::new(self.normalize_array(seq.data())?)
    }

    pub fn denormalize(&self, seq: &MotionSequence) -> Result<MotionSequence, MotionError> {
        MotionSequence::new(self.denormalize_array(seq.data())?)
    }
}

/// Streaming (Welford) population mean/std over every frame of every
/// sequence. Channels with variance below 1e-12 get std 1.
pub fn compute_stats(corpus: &[MotionSequence]) -> Result<NormStats, MotionError> {
    if corpus.is_empty() {
        return Err(MotionError::EmptyCorpus);
    }
    let mut n = 0usize;
    let mut mean = Array1::<f64>::zeros(FRAME_DIM);
    let mut m2 = Array1::<f64>::zeros(FRAME_DIM);
    for seq in corpus {
        for row in seq.data().axis_iter(Axis(0)) {
            n += 1;
            let delta = &row - &mean;
            mean.scaled_add(1.0 / n as f64, &delta);
            let delta2 = &row - &mean;
            m2 += &(&delta * &delta2);
        }
    }
    let std = m2.mapv(|v| {
        let var = v / n as f64;
        if var > MIN_VARIANCE {
            var.sqrt()
        } else {
            1.0
        }
    });
    Ok(NormStats { mean: mean.to_vec(), std: std.to_vec() })
}
