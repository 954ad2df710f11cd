//! Parameter, FLOP and latency overhead of each conditioning architecture
//! relative to the context-free base.
//!
//! FLOPs count `2 m n k` for every `m x k` by `k x n` matrix product of one
//! velocity-network forward pass and ignore element-wise work. With
//! `lin(m, i, o) = 2 m i o` and attention `att(m, n) = 4 m n H` (scores plus
//! value mixing over all heads), for `T` frames, `L` text rows, hidden `H`
//! and feed-forward width `F = ffn_mult * H`:
//!
//! ```text
//! time   = 2 lin(1, H, H)
//! enc    = lin(T, 201, H) + lin(T, H, H)                     E_in, and E_ctx
//! block  = lin(1, H, 6H) + 4 lin(T, H, H) + att(T, T)
//!        + 2 lin(T, H, H) + 2 lin(L, H, H) + att(T, L)
//!        + lin(T, H, F) + lin(T, F, H)
//! head   = lin(1, H, 2H) + lin(T, H, 201) + lin(1, H, 201)
//! base   = time + enc + layers * block + head
//!
//! temporal_fusion  base + enc
//! seq_concat       base + enc + layers * (6 lin(T, H, H) + 2 att(T, T) + att(T, L)
//!                                         + lin(T, H, F) + lin(T, F, H))
//! adaln            base + enc + 2 lin(T, H, H) + att(1, T) + lin(1, H, H)
//! controlnet       base + enc + layers * (block + lin(T, H, H))
//! ```
//!
//! The text encoder runs once per sample and is excluded. A full sampling run
//! costs `2 * steps` forward passes (conditional and unconditional branch).

use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use umo_core::metrics::ArchRow;
use umo_core::motion::FRAME_DIM;

use crate::error::{NnError, Result};
use crate::model::{CondArch, Model, ModelConfig};

fn block_params(h: u64, f: u64) -> u64 {
    (6 * h * h + 6 * h) + 4 * h * h + 4 * h * h + (h * f * h + f * h) + (f * h * h + h)
}

fn encoder_params(h: u64) -> u64 {
    FRAME_DIM as u64 * h + h + h * h + h
}

/// Exact parameter count of a model built from `cfg`.
pub fn count_params(cfg: &ModelConfig) -> u64 {
    let (h, d, f) = (cfg.hidden as u64, cfg.text_dim as u64, cfg.ffn_mult as u64);
    let c = FRAME_DIM as u64;
    let text = cfg.vocab_size as u64 * d
        + cfg.max_tokens as u64 * d
        + cfg.text_layers as u64 * (4 * d * d + d * f * d + f * d + f * d * d + d)
        + d * h
        + h
        + h;
    let base = text
        + encoder_params(h)
        + cfg.max_frames as u64 * h
        + 2 * (h * h + h)
        + cfg.layers as u64 * block_params(h, f)
        + (2 * h * h + 2 * h)
        + 2 * (h * c + c);
    base + cfg.arch.map_or(0, |a| arch_params(cfg, a))
}

fn arch_params(cfg: &ModelConfig, arch: CondArch) -> u64 {
    let (h, f) = (cfg.hidden as u64, cfg.ffn_mult as u64);
    let lane = encoder_params(h) + 3 * FRAME_DIM as u64;
    lane + match arch {
        CondArch::TemporalFusion | CondArch::SeqConcat => 0,
        CondArch::AdaLn => h + 2 * h * h + h * h + h,
        CondArch::ControlNet => cfg.layers as u64 * (block_params(h, f) + h * h + h),
    }
}

/// Parameters added over the context-free base.
pub fn delta_params(cfg: &ModelConfig, arch: CondArch) -> u64 {
    arch_params(cfg, arch)
}

fn lin(m: u64, i: u64, o: u64) -> u64 {
    2 * m * i * o
}

/// Matrix-multiply FLOPs of one forward pass with `frames` motion rows and
/// `text_rows` text feature rows.
pub fn count_flops(cfg: &ModelConfig, frames: usize, text_rows: usize) -> u64 {
    let (h, f) = (cfg.hidden as u64, (cfg.ffn_mult * cfg.hidden) as u64);
    let (t, l, c, layers) = (frames as u64, text_rows as u64, FRAME_DIM as u64, cfg.layers as u64);
    let att = |m: u64, n: u64| 4 * m * n * h;
    let enc = lin(t, c, h) + lin(t, h, h);
    let block = lin(1, h, 6 * h)
        + 4 * lin(t, h, h)
        + att(t, t)
        + 2 * lin(t, h, h)
        + 2 * lin(l, h, h)
        + att(t, l)
        + lin(t, h, f)
        + lin(t, f, h);
    let base = 2 * lin(1, h, h) + enc + layers * block + lin(1, h, 2 * h) + lin(t, h, c) + lin(1, h, c);
    let extra = match cfg.arch {
        None => 0,
        Some(CondArch::TemporalFusion) => enc,
        Some(CondArch::SeqConcat) => {
            enc + layers * (6 * lin(t, h, h) + 2 * att(t, t) + att(t, l) + lin(t, h, f) + lin(t, f, h))
        }
        Some(CondArch::AdaLn) => enc + 2 * lin(t, h, h) + att(1, t) + lin(1, h, h),
        Some(CondArch::ControlNet) => enc + layers * (block + lin(t, h, h)),
    };
    base + extra
}

/// Extra FLOPs of a full guided sampling run over the base.
pub fn delta_sampling_flops(cfg: &ModelConfig, arch: CondArch, frames: usize, text_rows: usize, steps: usize) -> u64 {
    let with = count_flops(&cfg.with_arch(Some(arch)), frames, text_rows);
    let base = count_flops(&cfg.with_arch(None), frames, text_rows);
    2 * steps as u64 * (with - base)
}

/// Median wall-clock seconds of `runs` guided sampling loops of `steps`
/// Euler steps on randomly initialized weights.
pub fn measure_latency(cfg: &ModelConfig, frames: usize, text_rows: usize, steps: usize, runs: usize) -> Result<f64> {
    let (model, store) = Model::init(*cfg, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut draw = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || StandardNormal.sample(&mut rng));
    let text = draw(text_rows.max(1), cfg.hidden);
    let null = draw(1, cfg.hidden);
    let ctx = cfg.arch.map(|_| draw(frames, FRAME_DIM));
    let x0 = draw(frames, FRAME_DIM);
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs.max(1) {
        let start = Instant::now();
        let mut x = x0.clone();
        for k in 0..steps {
            let t = k as f64 / steps as f64;
            let vc = model.velocity(&store, &x, t, &text, ctx.as_ref())?;
            let vu = model.velocity(&store, &x, t, &null, ctx.as_ref())?;
            x = x + (&vu + &((&vc - &vu) * 2.0)) / steps as f64;
        }
        times.push(start.elapsed().as_secs_f64());
    }
    Ok(umo_core::metrics::LatencyStats::from_samples(&times).median)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadConfig {
    pub frames: usize,
    pub text_rows: usize,
    pub steps: usize,
    /// Latency runs per architecture; 0 skips timing.
    pub latency_runs: usize,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        Self { frames: umo_core::motion::DEFAULT_MAX_FRAMES, text_rows: 64, steps: 50, latency_runs: 10 }
    }
}

/// The four-row overhead table. Fails when the parameter or FLOP ordering
/// of the architectures does not hold for `base`.
pub fn overhead_report(base: &ModelConfig, oc: &OverheadConfig) -> Result<Vec<ArchRow>> {
    let base = base.with_arch(None);
    let base_latency = if oc.latency_runs > 0 {
        measure_latency(&base, oc.frames, oc.text_rows, oc.steps, oc.latency_runs)?
    } else {
        0.0
    };
    let mut rows = Vec::new();
    for arch in CondArch::ALL {
        let cfg = base.with_arch(Some(arch));
        let delta_latency = if oc.latency_runs > 0 {
            measure_latency(&cfg, oc.frames, oc.text_rows, oc.steps, oc.latency_runs)? - base_latency
        } else {
            0.0
        };
        rows.push(ArchRow {
            arch: arch.as_str().to_string(),
            delta_params: delta_params(&base, arch),
            delta_flops: delta_sampling_flops(&base, arch, oc.frames, oc.text_rows, oc.steps),
            delta_latency,
        });
    }
    check_orderings(&rows).map_err(|msg| {
        NnError::OrderingViolated(format!(
            "{msg} (hidden {}, layers {}, heads {}, ffn x{}, T {}, L {})",
            base.hidden, base.layers, base.heads, base.ffn_mult, oc.frames, oc.text_rows
        ))
    })?;
    Ok(rows)
}

/// `dP(TF) = dP(SC) < dP(AdaLN) < dP(CN)` and
/// `dF(TF) < dF(AdaLN) < dF(CN) < dF(SC)`, rows in [`CondArch::ALL`] order.
pub fn check_orderings(rows: &[ArchRow]) -> std::result::Result<(), String> {
    let [tf, sc, ad, cn] = rows else {
        return Err(format!("expected 4 rows, got {}", rows.len()));
    };
    let p = (tf.delta_params, sc.delta_params, ad.delta_params, cn.delta_params);
    if !(p.0 == p.1 && p.1 < p.2 && p.2 < p.3) {
        return Err(format!("parameter ordering broken: {p:?}"));
    }
    let f = (tf.delta_flops, ad.delta_flops, cn.delta_flops, sc.delta_flops);
    if !(f.0 < f.1 && f.1 < f.2 && f.2 < f.3) {
        return Err(format!("FLOP ordering broken: {f:?}"));
    }
    Ok(())
}
