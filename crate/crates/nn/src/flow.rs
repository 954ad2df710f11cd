//! Rectified flow: straight-path interpolation, the velocity regression
//! loss, the guided Euler sampler and training-free inversion inpainting.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use umo_core::motion::FRAME_DIM;
use umo_core::prompt::TokenId;
use umo_core::tasks::FramePlan;

use crate::error::{shape_err, NnError, Result};
use crate::model::Model;
use crate::params::{Grads, ParamStore};
use crate::tape::{Mat, Tape, Var};

/// `x_t = (1 - t) x0 + t x1`.
pub fn interpolate(x0: &Mat, x1: &Mat, t: f64) -> Result<Mat> {
    if x0.dim() != x1.dim() {
        return Err(shape_err(x0.dim(), x1.dim()));
    }
    Ok(x0 * (1.0 - t) + x1 * t)
}

/// `v = x1 - x0`, the same for every `t`.
pub fn velocity_target(x0: &Mat, x1: &Mat) -> Result<Mat> {
    if x0.dim() != x1.dim() {
        return Err(shape_err(x0.dim(), x1.dim()));
    }
    Ok(x1 - x0)
}

/// Mean squared error over every entry.
pub fn mse(pred: &Mat, target: &Mat) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(shape_err(target.dim(), pred.dim()));
    }
    Ok((pred - target).iter().map(|d| d * d).sum::<f64>() / pred.len() as f64)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Per-frame noise drawn once from `seed` and reused for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCache {
    pub eps: Mat,
}

impl NoiseCache {
    pub fn new(frames: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { eps: gaussian(&mut rng, frames, FRAME_DIM) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub cfg_scale: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { steps: 50, cfg_scale: 2.0, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || !(self.cfg_scale >= 0.0) || !self.cfg_scale.is_finite() {
            return Err(NnError::Config(format!("invalid sampler settings {self:?}")));
        }
        Ok(())
    }
}

/// Anything that predicts a velocity, with and without the text condition.
pub trait VelocityField {
    fn velocity(&self, x: &Mat, t: f64, conditional: bool) -> Result<Mat>;
}

impl<F: Fn(&Mat, f64, bool) -> Result<Mat>> VelocityField for F {
    fn velocity(&self, x: &Mat, t: f64, conditional: bool) -> Result<Mat> {
        self(x, t, conditional)
    }
}

/// `v_u + s (v_c - v_u)`; scales 0 and 1 evaluate a single branch.
pub fn guided_velocity(field: &impl VelocityField, x: &Mat, t: f64, scale: f64) -> Result<Mat> {
    if scale == 1.0 {
        return field.velocity(x, t, true);
    }
    if scale == 0.0 {
        return field.velocity(x, t, false);
    }
    let vc = field.velocity(x, t, true)?;
    let vu = field.velocity(x, t, false)?;
    Ok(&vu + &((&vc - &vu) * scale))
}

/// Frames pinned to a known motion during inversion inpainting.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchors<'a> {
    pub frames: &'a [usize],
    pub values: &'a Mat,
}

impl Anchors<'_> {
    fn apply(&self, x: &mut Mat, eps: &Mat, t: f64) {
        for &i in self.frames {
            let mut row = x.row_mut(i);
            row.assign(&(&eps.row(i) * (1.0 - t) + &self.values.row(i) * t));
        }
    }
}

/// Euler integration from `x = noise` over `t_k = k / steps`. With anchors,
/// anchored rows are overwritten before every step and once more at `t = 1`.
pub fn euler(field: &impl VelocityField, noise: &Mat, cfg: &SamplerConfig, anchors: Option<&Anchors>) -> Result<Mat> {
    cfg.validate()?;
    if let Some(a) = anchors {
        if a.values.dim() != noise.dim() {
            return Err(shape_err(noise.dim(), a.values.dim()));
        }
        if let Some(&bad) = a.frames.iter().find(|&&i| i >= noise.nrows()) {
            return Err(NnError::Config(format!("anchor frame {bad} outside {} frames", noise.nrows())));
        }
    }
    let dt = 1.0 / cfg.steps as f64;
    let mut x = noise.clone();
    for k in 0..cfg.steps {
        let t = k as f64 / cfg.steps as f64;
        if let Some(a) = anchors {
            a.apply(&mut x, noise, t);
        }
        let v = guided_velocity(field, &x, t, cfg.cfg_scale)?;
        x.scaled_add(dt, &v);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite { step: k });
        }
    }
    if let Some(a) = anchors {
        a.apply(&mut x, noise, 1.0);
    }
    Ok(x)
}

/// A model bound to one prompt and one context lane.
pub struct ModelField<'a> {
    pub model: &'a Model,
    pub store: &'a ParamStore,
    pub text: Mat,
    pub null: Mat,
    pub ctx: Option<Mat>,
}

impl<'a> ModelField<'a> {
    pub fn new(model: &'a Model, store: &'a ParamStore, tokens: &[TokenId], plan: Option<&FramePlan>) -> Result<Self> {
        let text = model.text_features(store, tokens)?;
        let null = model.text_features(store, &[])?;
        let ctx = match (model.cfg.arch, plan) {
            (Some(_), Some(p)) => Some(model.context_matrix(store, p)?),
            (Some(_), None) => return Err(NnError::Config("context model needs a frame plan".into())),
            (None, _) => None,
        };
        Ok(Self { model, store, text, null, ctx })
    }
}

impl VelocityField for ModelField<'_> {
    fn velocity(&self, x: &Mat, t: f64, conditional: bool) -> Result<Mat> {
        let text = if conditional { &self.text } else { &self.null };
        self.model.velocity(self.store, x, t, text, self.ctx.as_ref())
    }
}

/// Samples a normalized motion of the plan's length.
pub fn sample_euler(model: &Model, store: &ParamStore, tokens: &[TokenId], plan: &FramePlan, cfg: &SamplerConfig) -> Result<Mat> {
    if plan.len() > model.cfg.max_frames {
        return Err(NnError::TooLong { t: plan.len(), max: model.cfg.max_frames });
    }
    let field = ModelField::new(model, store, tokens, Some(plan))?;
    let noise = NoiseCache::new(plan.len(), cfg.seed);
    euler(&field, &noise.eps, cfg, None)
}

/// Training-free inpainting: rows in `known` follow the straight path from
/// the cached noise to `values` and equal `values` at the end.
pub fn inversion_inpaint(
    model: &Model,
    store: &ParamStore,
    known: &[usize],
    values: &Mat,
    tokens: &[TokenId],
    cfg: &SamplerConfig,
) -> Result<Mat> {
    let frames = values.nrows();
    if frames > model.cfg.max_frames {
        return Err(NnError::TooLong { t: frames, max: model.cfg.max_frames });
    }
    let plan = FramePlan::generate(frames);
    let field = ModelField::new(model, store, tokens, Some(&plan))?;
    let noise = NoiseCache::new(frames, cfg.seed);
    euler(&field, &noise.eps, cfg, Some(&Anchors { frames: known, values }))
}

/// One training example in normalized space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub target: Mat,
    pub tokens: Vec<TokenId>,
    /// Frame plan for the context lane; `None` means all-generate.
    pub plan: Option<FramePlan>,
}

/// Random quantities of one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub t: f64,
    pub noise: Mat,
    pub drop_text: bool,
}

impl Draw {
    /// `t ~ U[0, 1)`, a text-drop coin, then the noise, in that order.
    pub fn sample(rng: &mut impl Rng, frames: usize, cond_drop: f64) -> Self {
        let t = rng.random::<f64>();
        let drop_text = rng.random::<f64>() < cond_drop;
        let noise = gaussian(rng, frames, FRAME_DIM);
        Self { t, noise, drop_text }
    }
}

/// Builds the per-sample loss graph and returns the scalar loss node.
pub fn sample_loss(model: &Model, tape: &mut Tape, sample: &TrainSample, draw: &Draw) -> Result<Var> {
    let x1 = &sample.target;
    let xt = interpolate(&draw.noise, x1, draw.t)?;
    let v = velocity_target(&draw.noise, x1)?;
    let tokens: &[TokenId] = if draw.drop_text { &[] } else { &sample.tokens };
    let text = model.encode_text(tape, tokens)?;
    let ctx = match model.cfg.arch {
        Some(_) => {
            let plan = sample.plan.clone().unwrap_or_else(|| FramePlan::generate(x1.nrows()));
            if plan.len() != x1.nrows() {
                return Err(shape_err((x1.nrows(), FRAME_DIM), (plan.len(), FRAME_DIM)));
            }
            Some(model.context_var(tape, &plan))
        }
        None => None,
    };
    let x = tape.input(xt);
    let out = model.forward(tape, x, draw.t, text, ctx)?;
    let target = tape.input(v);
    let diff = tape.sub(out.velocity, target);
    Ok(tape.mean_square(diff))
}

/// Batch loss and summed gradients of `mean_b loss_b`.
pub fn loss_and_grads(model: &Model, store: &ParamStore, batch: &[(&TrainSample, Draw)]) -> Result<(f64, Grads)> {
    if batch.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let inv = 1.0 / batch.len() as f64;
    let mut grads = Grads::zeros_like(store);
    let mut total = 0.0;
    for (sample, draw) in batch {
        let mut tape = Tape::new(store);
        let loss = sample_loss(model, &mut tape, sample, draw)?;
        total += tape.scalar(loss);
        tape.backward(loss, Array2::from_elem((1, 1), inv), &mut grads);
    }
    Ok((total * inv, grads))
}

/// Flow-matching loss of a batch with draws taken from `rng` in batch order.
pub fn fm_loss(model: &Model, store: &ParamStore, batch: &[&TrainSample], cond_drop: f64, rng: &mut impl Rng) -> Result<f64> {
    let mut total = 0.0;
    for s in batch {
        let draw = Draw::sample(rng, s.target.nrows(), cond_drop);
        let mut tape = Tape::new(store);
        let loss = sample_loss(model, &mut tape, s, &draw)?;
        total += tape.scalar(loss);
    }
    finish_loss(total, batch.len())
}

/// [`fm_loss`] for an arbitrary predictor `(x_t, t, sample, draw) -> v`.
pub fn fm_loss_with(
    predict: impl Fn(&Mat, f64, &TrainSample, &Draw) -> Result<Mat>,
    batch: &[&TrainSample],
    cond_drop: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut total = 0.0;
    for s in batch {
        let draw = Draw::sample(rng, s.target.nrows(), cond_drop);
        let xt = interpolate(&draw.noise, &s.target, draw.t)?;
        let v = velocity_target(&draw.noise, &s.target)?;
        total += mse(&predict(&xt, draw.t, s, &draw)?, &v)?;
    }
    finish_loss(total, batch.len())
}

fn finish_loss(total: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(NnError::EmptyDataset);
    }
    let mean = total / n as f64;
    if !mean.is_finite() {
        return Err(NnError::NonFinite { step: 0 });
    }
    Ok(mean)
}
