//! Adam training loop for pretraining and in-context fine-tuning.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{NnError, Result};
use crate::flow::{loss_and_grads, Draw, TrainSample};
use crate::pipeline::SampleSource;
use crate::model::{CondArch, Model};
use crate::params::{Adam, AdamConfig, Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    pub cond_drop: f64,
    pub seed: u64,
    /// Samples per gradient worker; 0 runs the batch on one thread.
    pub chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 5e-5, batch: 32, steps: 1000, cond_drop: 0.1, seed: 0, chunk: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || self.batch == 0 || !(0.0..=1.0).contains(&self.cond_drop) {
            return Err(NnError::Config(format!("invalid training settings {self:?}")));
        }
        Ok(())
    }
}

/// Runs `tc.steps` Adam updates on the trainable parameters and returns the
/// per-step batch loss. `progress` sees `(step, loss)` after every update.
///
/// Batches are drawn with replacement from a single seeded stream, so a
/// run is reproducible for a fixed `chunk`.
pub fn train(
    model: &Model,
    store: &mut ParamStore,
    data: &(impl SampleSource + ?Sized),
    tc: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    tc.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut opt = Adam::new(AdamConfig { lr: tc.lr, ..AdamConfig::default() }, store);
    let mut curve = Vec::with_capacity(tc.steps);
    for step in 0..tc.steps {
        let samples: Vec<TrainSample> = (0..tc.batch).map(|_| data.draw(&mut rng)).collect::<Result<_>>()?;
        let batch: Vec<(&TrainSample, Draw)> = samples
            .iter()
            .map(|s| {
                let d = Draw::sample(&mut rng, s.target.nrows(), tc.cond_drop);
                (s, d)
            })
            .collect();
        let (loss, grads) = batch_gradients(model, store, &batch, tc.chunk)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(NnError::NonFinite { step });
        }
        opt.step(store, &grads);
        curve.push(loss);
        progress(step, loss);
    }
    Ok(curve)
}

fn batch_gradients(model: &Model, store: &ParamStore, batch: &[(&TrainSample, Draw)], chunk: usize) -> Result<(f64, Grads)> {
    if chunk == 0 || chunk >= batch.len() {
        return loss_and_grads(model, store, batch);
    }
    let parts: Vec<(f64, Grads)> =
        batch.par_chunks(chunk).map(|c| loss_and_grads(model, store, c)).collect::<Result<_>>()?;
    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut grads = Grads::zeros_like(store);
    for (c, (loss, mut g)) in batch.chunks(chunk).zip(parts) {
        let w = c.len() as f64 / n;
        total += loss * w;
        g.scale(w);
        grads.add_assign(&g);
    }
    Ok((total, grads))
}

/// Attaches the context lane when needed, then trains on task instances.
pub fn finetune(
    model: &mut Model,
    store: &mut ParamStore,
    arch: CondArch,
    data: &(impl SampleSource + ?Sized),
    tc: &TrainConfig,
    progress: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    match model.cfg.arch {
        None => model.attach_context(store, arch, tc.seed ^ 0xc0_47e7)?,
        Some(a) if a != arch => {
            return Err(NnError::Config(format!("checkpoint uses {a}, requested {arch}")));
        }
        Some(_) => model.set_trainable(store),
    }
    train(model, store, data, tc, progress)
}

pub fn write_loss_csv(path: &Path, curve: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,loss")?;
    for (i, l) in curve.iter().enumerate() {
        writeln!(f, "{i},{l}")?;
    }
    f.flush()?;
    Ok(())
}
