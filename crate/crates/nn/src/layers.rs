//! Building blocks shared by the text encoder and the motion transformer.

use rand::Rng;

use crate::params::{normal_init, ParamStore};
use crate::tape::{Mat, Tape, Var};

pub(crate) fn add_linear(store: &mut ParamStore, rng: &mut impl Rng, name: &str, fan_in: usize, fan_out: usize, zero: bool) {
    let w = if zero { Mat::zeros((fan_in, fan_out)) } else { normal_init(rng, fan_in, fan_out, (fan_in as f64).powf(-0.5)) };
    store.add(&format!("{name}.w"), w, true);
    store.add(&format!("{name}.b"), Mat::zeros((1, fan_out)), true);
}

pub(crate) fn add_weight(store: &mut ParamStore, rng: &mut impl Rng, name: &str, fan_in: usize, fan_out: usize) {
    store.add(name, normal_init(rng, fan_in, fan_out, (fan_in as f64).powf(-0.5)), true);
}

/// `x W + b` with parameters `{name}.w`, `{name}.b`.
pub(crate) fn linear(tape: &mut Tape, x: Var, name: &str) -> Var {
    let w = tape.param(&format!("{name}.w"));
    let b = tape.param(&format!("{name}.b"));
    let y = tape.matmul(x, w);
    tape.add_row(y, b)
}

/// `x W` with a bare weight parameter.
pub(crate) fn project(tape: &mut Tape, x: Var, name: &str) -> Var {
    let w = tape.param(name);
    tape.matmul(x, w)
}

/// Two-layer GELU MLP with parameters `{name}.fc1`, `{name}.fc2`.
pub(crate) fn mlp(tape: &mut Tape, x: Var, name: &str) -> Var {
    let h = linear(tape, x, &format!("{name}.fc1"));
    let h = tape.gelu(h);
    linear(tape, h, &format!("{name}.fc2"))
}

pub(crate) fn add_mlp(store: &mut ParamStore, rng: &mut impl Rng, name: &str, dims: (usize, usize, usize)) {
    add_linear(store, rng, &format!("{name}.fc1"), dims.0, dims.1, false);
    add_linear(store, rng, &format!("{name}.fc2"), dims.1, dims.2, false);
}

/// Scaled dot-product attention over already projected `q`, `k`, `v`,
/// split into `heads` column groups.
pub(crate) fn attention(tape: &mut Tape, q: Var, k: Var, v: Var, heads: usize) -> Var {
    let dim = tape.shape(q).1;
    let dh = dim / heads;
    let scale = (dh as f64).powf(-0.5);
    let outs: Vec<Var> = (0..heads)
        .map(|h| {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let s = tape.matmul_t(qh, kh);
            let s = tape.scale(s, scale);
            let p = tape.softmax_rows(s);
            tape.matmul(p, vh)
        })
        .collect();
    if outs.len() == 1 {
        outs[0]
    } else {
        tape.concat_cols(&outs)
    }
}

pub(crate) fn add_attention(store: &mut ParamStore, rng: &mut impl Rng, name: &str, dim: usize) {
    for p in ["wq", "wk", "wv", "wo"] {
        add_weight(store, rng, &format!("{name}.{p}"), dim, dim);
    }
}

/// `LN(x) * (1 + scale) + shift` with `1 x n` modulation rows.
pub(crate) fn modulate(tape: &mut Tape, x: Var, shift: Var, scale: Var) -> Var {
    let n = tape.layer_norm(x);
    let s1 = tape.affine(scale, 1.0, 1.0);
    let y = tape.mul_row(n, s1);
    tape.add_row(y, shift)
}

/// Sinusoidal embedding of a flow time `t` in `[0, 1]`.
pub(crate) fn timestep_features(t: f64, dim: usize) -> Mat {
    let half = dim / 2;
    let mut out = Mat::zeros((1, dim));
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let a = 1000.0 * t * freq;
        out[[0, i]] = a.sin();
        out[[0, half + i]] = a.cos();
    }
    out
}
