#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umo_core::motion::FRAME_DIM;
use umo_core::tasks::{FramePlan, MetaOp};
use umo_nn::flow::gaussian;
use umo_nn::pipeline::encode_prompt;
use umo_nn::{CondArch, Model, ModelConfig, ParamStore};

pub fn micro(arch: Option<CondArch>) -> ModelConfig {
    ModelConfig {
        hidden: 8,
        layers: 2,
        heads: 2,
        ffn_mult: 2,
        max_frames: 190,
        text_layers: 1,
        text_dim: 8,
        arch,
        ..ModelConfig::default()
    }
}

/// Adds `N(0, std^2)` to every parameter so zero-initialized gates,
/// heads and projections stop hiding gradient paths.
pub fn jitter(store: &mut ParamStore, std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let v = store.value_mut(id);
        let (r, c) = v.dim();
        *v += &(gaussian(&mut rng, r, c) * std);
    }
}

/// A model whose base weights look trained: everything jittered before
/// the context lane is attached, so copies and zero-inits stay exact.
pub fn trained_like(arch: Option<CondArch>, seed: u64) -> (Model, ParamStore) {
    let (mut model, mut store) = Model::init(micro(None), seed).unwrap();
    jitter(&mut store, 0.2, seed + 1);
    if let Some(a) = arch {
        model.attach_context(&mut store, a, seed + 2).unwrap();
    }
    (model, store)
}

pub fn mixed_plan(rng: &mut ChaCha8Rng, t: usize) -> FramePlan {
    let mut plan = FramePlan::generate(t);
    for i in 0..t {
        let op = MetaOp::ALL[rng.random_range(0..3)];
        plan.ops[i] = op;
        if op != MetaOp::G {
            plan.has_source[i] = true;
            for c in 0..FRAME_DIM {
                plan.source[[i, c]] = rng.random_range(-1.0..1.0);
            }
        }
    }
    plan
}

pub fn prompt_tokens() -> Vec<u32> {
    encode_prompt("{type:arc, params:{radius:2.50, angle:1.57, dir:ccw}}").unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    gaussian(rng, r, c)
}
