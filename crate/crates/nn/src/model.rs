//! The velocity transformer, its text encoder and the four in-context
//! conditioning architectures.
//!
//! Parameter names are stable and double as checkpoint tensor names:
//!
//! | prefix | role |
//! |---|---|
//! | `text.*` | token/position embeddings, encoder blocks, output projection, null row |
//! | `in.*` / `ctx.*` | motion input encoder `E_in` / context encoder `E_ctx` |
//! | `metaop` | the `3 x 201` meta-operation table |
//! | `pos`, `time.*` | positional embedding, timestep MLP |
//! | `blocks.{i}.*` | transformer blocks |
//! | `final.mod.*`, `out.*`, `skip.*` | output head |
//! | `pool.*` | AdaLN attention pooling |
//! | `branch.{i}.*`, `zero.{i}.*` | ControlNet cloned blocks and zero projections |

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use umo_core::motion::FRAME_DIM;
use umo_core::prompt::{TokenId, Vocab};
use umo_core::tasks::{FramePlan, MetaOp};

use crate::error::{shape_err, NnError, Result};
use crate::layers::{
    add_attention, add_linear, add_mlp, add_weight, attention, linear, mlp, modulate, project, timestep_features,
};
use crate::params::{normal_init, ParamStore};
use crate::tape::{Mat, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CondArch {
    TemporalFusion,
    SeqConcat,
    AdaLn,
    ControlNet,
}

impl CondArch {
    pub const ALL: [CondArch; 4] = [CondArch::TemporalFusion, CondArch::SeqConcat, CondArch::AdaLn, CondArch::ControlNet];

    pub fn as_str(self) -> &'static str {
        match self {
            CondArch::TemporalFusion => "temporal_fusion",
            CondArch::SeqConcat => "seq_concat",
            CondArch::AdaLn => "adaln",
            CondArch::ControlNet => "controlnet",
        }
    }

    /// Checkpoint code; 0 is reserved for the context-free base.
    pub fn code(arch: Option<CondArch>) -> u32 {
        match arch {
            None => 0,
            Some(CondArch::TemporalFusion) => 1,
            Some(CondArch::SeqConcat) => 2,
            Some(CondArch::AdaLn) => 3,
            Some(CondArch::ControlNet) => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<Option<CondArch>> {
        match code {
            0 => Some(None),
            1..=4 => Some(Some(CondArch::ALL[code as usize - 1])),
            _ => None,
        }
    }
}

impl fmt::Display for CondArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CondArch {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        CondArch::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| NnError::Config(format!("unknown architecture `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_frames: usize,
    pub text_layers: usize,
    pub text_dim: usize,
    pub max_tokens: usize,
    pub vocab_size: usize,
    pub arch: Option<CondArch>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            layers: 4,
            heads: 4,
            ffn_mult: 4,
            max_frames: umo_core::motion::DEFAULT_MAX_FRAMES,
            text_layers: 2,
            text_dim: 128,
            max_tokens: umo_core::prompt::MAX_TOKENS,
            vocab_size: Vocab::builtin().len(),
            arch: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if self.hidden == 0 || self.heads == 0 || self.layers == 0 || self.ffn_mult == 0 || self.text_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.hidden % self.heads != 0 || self.text_dim % self.heads != 0 {
            return bad("hidden and text dims must be divisible by the head count");
        }
        if self.hidden % 2 != 0 {
            return bad("hidden dim must be even");
        }
        if self.max_frames == 0 || self.max_tokens == 0 || self.vocab_size == 0 {
            return bad("maximum lengths and vocabulary must be positive");
        }
        Ok(())
    }

    pub fn with_arch(self, arch: Option<CondArch>) -> Self {
        Self { arch, ..self }
    }
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOut {
    pub velocity: Var,
    /// SeqConcat context-stream states: the stream input, then each block output.
    pub ctx_states: Vec<Var>,
    /// AdaLN pooled context vector.
    pub pooled: Option<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    eot: TokenId,
}

const EMB_STD: f64 = 0.5;
const METAOP_STD: f64 = 0.02;

fn is_extra(name: &str) -> bool {
    ["ctx.", "metaop", "pool.", "branch.", "zero."].iter().any(|p| name.starts_with(p))
}

impl Model {
    /// Fresh weights for `cfg`; context parameters are attached when
    /// `cfg.arch` is set.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::default();
        let (h, d, f) = (cfg.hidden, cfg.text_dim, cfg.ffn_mult);
        s.add("text.tok", normal_init(&mut rng, cfg.vocab_size, d, EMB_STD), true);
        s.add("text.pos", normal_init(&mut rng, cfg.max_tokens, d, EMB_STD), true);
        for i in 0..cfg.text_layers {
            add_attention(&mut s, &mut rng, &format!("text.l{i}.attn"), d);
            add_linear(&mut s, &mut rng, &format!("text.l{i}.ff1"), d, f * d, false);
            add_linear(&mut s, &mut rng, &format!("text.l{i}.ff2"), f * d, d, false);
        }
        add_linear(&mut s, &mut rng, "text.proj", d, h, false);
        s.add("text.null", normal_init(&mut rng, 1, h, EMB_STD), true);
        add_mlp(&mut s, &mut rng, "in", (FRAME_DIM, h, h));
        s.add("pos", normal_init(&mut rng, cfg.max_frames, h, EMB_STD), true);
        add_linear(&mut s, &mut rng, "time.fc1", h, h, false);
        add_linear(&mut s, &mut rng, "time.fc2", h, h, false);
        for i in 0..cfg.layers {
            add_block(&mut s, &mut rng, &format!("blocks.{i}"), h, f);
        }
        add_linear(&mut s, &mut rng, "final.mod", h, 2 * h, true);
        add_linear(&mut s, &mut rng, "out", h, FRAME_DIM, true);
        add_linear(&mut s, &mut rng, "skip", h, FRAME_DIM, true);
        let mut model = Self { cfg: cfg.with_arch(None), eot: Vocab::builtin().eot() };
        if let Some(arch) = cfg.arch {
            model.attach_context(&mut s, arch, seed ^ 0x5eed_c0de)?;
        }
        Ok((model, s))
    }

    /// Rebuilds a model around an existing parameter store (checkpoint load).
    pub fn from_parts(cfg: ModelConfig, store: &mut ParamStore) -> Result<Self> {
        cfg.validate()?;
        let model = Self { cfg, eot: Vocab::builtin().eot() };
        let probe = [
            "text.tok", "text.null", "in.fc1.w", "pos", "time.fc1.w", "blocks.0.mod.w", "out.w", "skip.w",
        ];
        if let Some(missing) = probe.iter().find(|n| !store.contains(n)) {
            return Err(NnError::Checkpoint(format!("missing tensor `{missing}`")));
        }
        if cfg.arch.is_some() && !store.contains("metaop") {
            return Err(NnError::Checkpoint("missing tensor `metaop`".into()));
        }
        model.set_trainable(store);
        Ok(model)
    }

    /// Adds the context lane to a context-free model: `E_ctx` as an exact
    /// copy of `E_in`, the meta-op table, and the arch-specific extras.
    pub fn attach_context(&mut self, store: &mut ParamStore, arch: CondArch, seed: u64) -> Result<()> {
        if self.cfg.arch.is_some() {
            return Err(NnError::Config("model already has a context lane".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = self.cfg.hidden;
        for p in ["fc1.w", "fc1.b", "fc2.w", "fc2.b"] {
            let v = store.get(&format!("in.{p}")).expect("base model has E_in").clone();
            store.add(&format!("ctx.{p}"), v, true);
        }
        store.add("metaop", normal_init(&mut rng, 3, FRAME_DIM, METAOP_STD), true);
        match arch {
            CondArch::TemporalFusion | CondArch::SeqConcat => {}
            CondArch::AdaLn => {
                store.add("pool.query", normal_init(&mut rng, 1, h, (h as f64).powf(-0.5)), true);
                add_weight(store, &mut rng, "pool.wk", h, h);
                add_weight(store, &mut rng, "pool.wv", h, h);
                add_linear(store, &mut rng, "pool.proj", h, h, true);
            }
            CondArch::ControlNet => {
                let cloned: Vec<(String, Mat)> = store
                    .ids()
                    .filter(|&id| store.name(id).starts_with("blocks."))
                    .map(|id| (store.name(id).replacen("blocks.", "branch.", 1), store.value(id).clone()))
                    .collect();
                for (name, v) in cloned {
                    store.add(&name, v, true);
                }
                for i in 0..self.cfg.layers {
                    add_linear(store, &mut rng, &format!("zero.{i}"), h, h, true);
                }
            }
        }
        self.cfg.arch = Some(arch);
        self.set_trainable(store);
        Ok(())
    }

    /// Fine-tuning freeze pattern: ControlNet trains only its extras,
    /// every other arch trains everything.
    pub fn set_trainable(&self, store: &mut ParamStore) {
        match self.cfg.arch {
            Some(CondArch::ControlNet) => {
                let ids: Vec<_> = store.ids().collect();
                for id in ids {
                    let on = is_extra(store.name(id));
                    store.set_trainable(id, on);
                }
            }
            _ => store.set_all_trainable(true),
        }
    }

    /// Parameters added on top of the context-free base.
    pub fn extra_param_count(store: &ParamStore) -> u64 {
        store.count_where(is_extra)
    }

    pub fn eot(&self) -> TokenId {
        self.eot
    }

    fn is_null_prompt(&self, tokens: &[TokenId]) -> bool {
        tokens.iter().all(|&t| t == self.eot)
    }

    /// Text features `L x hidden`; prompts without content map to the
    /// learned null row.
    pub fn encode_text(&self, tape: &mut Tape, tokens: &[TokenId]) -> Result<Var> {
        if tokens.len() > self.cfg.max_tokens {
            return Err(NnError::TooManyTokens(tokens.len()));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.cfg.vocab_size) {
            return Err(NnError::Config(format!("token id {bad} outside the vocabulary")));
        }
        if self.is_null_prompt(tokens) {
            return Ok(tape.param("text.null"));
        }
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let pos_ids: Vec<usize> = (0..ids.len()).collect();
        let tok = tape.param("text.tok");
        let pos = tape.param("text.pos");
        let e = tape.gather_rows(tok, &ids);
        let p = tape.gather_rows(pos, &pos_ids);
        let mut h = tape.add(e, p);
        for i in 0..self.cfg.text_layers {
            let pre = format!("text.l{i}");
            let n = tape.layer_norm(h);
            let a = self_attention(tape, n, &format!("{pre}.attn"), self.cfg.heads);
            h = tape.add(h, a);
            let n = tape.layer_norm(h);
            let f = linear(tape, n, &format!("{pre}.ff1"));
            let f = tape.gelu(f);
            let f = linear(tape, f, &format!("{pre}.ff2"));
            h = tape.add(h, f);
        }
        let n = tape.layer_norm(h);
        Ok(linear(tape, n, "text.proj"))
    }

    /// Evaluates text features outside any training tape.
    pub fn text_features(&self, store: &ParamStore, tokens: &[TokenId]) -> Result<Mat> {
        let mut tape = Tape::new(store);
        let v = self.encode_text(&mut tape, tokens)?;
        Ok(tape.value(v).to_owned())
    }

    /// `s~ = S + onehot(tau) Table` on the tape, so the table receives gradients.
    pub fn context_var(&self, tape: &mut Tape, plan: &FramePlan) -> Var {
        let t = plan.len();
        let mut onehot = Array2::zeros((t, 3));
        for (i, op) in plan.ops.iter().enumerate() {
            onehot[[i, op.index()]] = 1.0;
        }
        let oh = tape.input(onehot);
        let table = tape.param("metaop");
        let emb = tape.matmul(oh, table);
        let src = tape.input(plan.source.clone());
        tape.add(src, emb)
    }

    /// `s~` as a plain matrix for inference.
    pub fn context_matrix(&self, store: &ParamStore, plan: &FramePlan) -> Result<Mat> {
        let table = store.get("metaop").ok_or_else(|| NnError::Config("model has no meta-op table".into()))?;
        let mut out = plan.source.clone();
        for (i, op) in plan.ops.iter().enumerate() {
            let mut row = out.row_mut(i);
            row += &table.row(MetaOp::index(*op));
        }
        Ok(out)
    }

    /// Velocity prediction for noisy motion `x_t` (`T x 201`) at time `t`.
    pub fn forward(&self, tape: &mut Tape, x_t: Var, t: f64, text: Var, ctx: Option<Var>) -> Result<ForwardOut> {
        let cfg = &self.cfg;
        let (frames, dim) = tape.shape(x_t);
        if dim != FRAME_DIM || frames == 0 {
            return Err(shape_err((frames.max(1), FRAME_DIM), (frames, dim)));
        }
        if frames > cfg.max_frames {
            return Err(NnError::TooLong { t: frames, max: cfg.max_frames });
        }
        let (_, tw) = tape.shape(text);
        if tw != cfg.hidden {
            return Err(shape_err((1, cfg.hidden), tape.shape(text)));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(NnError::Config(format!("flow time {t} outside [0, 1]")));
        }
        let ctx = match (cfg.arch, ctx) {
            (None, _) => None,
            (Some(_), None) => return Err(NnError::Config("context lane required".into())),
            (Some(_), Some(c)) => {
                if tape.shape(c) != (frames, FRAME_DIM) {
                    return Err(shape_err((frames, FRAME_DIM), tape.shape(c)));
                }
                Some(c)
            }
        };

        let tf = tape.input(timestep_features(t, cfg.hidden));
        let c = linear(tape, tf, "time.fc1");
        let c = tape.silu(c);
        let mut c = linear(tape, c, "time.fc2");

        let pos_ids: Vec<usize> = (0..frames).collect();
        let pos_table = tape.param("pos");
        let pos = tape.gather_rows(pos_table, &pos_ids);
        let e_in = mlp(tape, x_t, "in");
        let h0 = tape.add(e_in, pos);
        let e_ctx = ctx.map(|s| mlp(tape, s, "ctx"));

        let mut out = ForwardOut { velocity: h0, ctx_states: Vec::new(), pooled: None };
        let mut h = h0;
        let mut side = None;
        let mut branch = None;
        match (cfg.arch, e_ctx) {
            (Some(CondArch::TemporalFusion), Some(e)) => h = tape.add(h0, e),
            (Some(CondArch::SeqConcat), Some(e)) => {
                let s = tape.add(e, pos);
                out.ctx_states.push(s);
                side = Some(s);
            }
            (Some(CondArch::AdaLn), Some(e)) => {
                let q = tape.param("pool.query");
                let k = project(tape, e, "pool.wk");
                let v = project(tape, e, "pool.wv");
                let pooled = attention(tape, q, k, v, 1);
                let g = linear(tape, pooled, "pool.proj");
                c = tape.add(c, g);
                out.pooled = Some(pooled);
            }
            (Some(CondArch::ControlNet), Some(e)) => branch = Some(tape.add(h0, e)),
            _ => {}
        }
        let cs = tape.silu(c);
        for i in 0..cfg.layers {
            let (nh, ns) = self.block(tape, &format!("blocks.{i}"), h, side, cs, text);
            h = nh;
            if let Some(s) = ns {
                out.ctx_states.push(s);
                side = Some(s);
            }
            if let Some(b) = branch {
                let (nb, _) = self.block(tape, &format!("branch.{i}"), b, None, cs, text);
                let z = linear(tape, nb, &format!("zero.{i}"));
                h = tape.add(h, z);
                branch = Some(nb);
            }
        }

        let h_dim = cfg.hidden;
        let m = linear(tape, cs, "final.mod");
        let shift = tape.slice_cols(m, 0, h_dim);
        let scale = tape.slice_cols(m, h_dim, h_dim);
        let y = modulate(tape, h, shift, scale);
        let y = linear(tape, y, "out");
        let skip = linear(tape, cs, "skip");
        let xs = tape.mul_row(x_t, skip);
        out.velocity = tape.add(y, xs);
        Ok(out)
    }

    /// One transformer block: modulated self-attention, cross-attention to
    /// the text rows, modulated feed-forward. `side` is the SeqConcat
    /// context stream, which reads only itself.
    fn block(&self, tape: &mut Tape, p: &str, h: Var, side: Option<Var>, cs: Var, text: Var) -> (Var, Option<Var>) {
        let hd = self.cfg.hidden;
        let heads = self.cfg.heads;
        let m = linear(tape, cs, &format!("{p}.mod"));
        let chunk: Vec<Var> = (0..6).map(|k| tape.slice_cols(m, k * hd, hd)).collect();
        let (sh_a, sc_a, g_a, sh_f, sc_f, g_f) = (chunk[0], chunk[1], chunk[2], chunk[3], chunk[4], chunk[5]);

        let qkv = |tape: &mut Tape, x: Var| {
            let a = modulate(tape, x, sh_a, sc_a);
            let q = project(tape, a, &format!("{p}.attn.wq"));
            let k = project(tape, a, &format!("{p}.attn.wk"));
            let v = project(tape, a, &format!("{p}.attn.wv"));
            (q, k, v)
        };
        let (qn, kn, vn) = qkv(tape, h);
        let (att_n, att_s) = match side {
            Some(s) => {
                let (qs, ks, vs) = qkv(tape, s);
                let k_all = tape.concat_rows(&[kn, ks]);
                let v_all = tape.concat_rows(&[vn, vs]);
                let an = attention(tape, qn, k_all, v_all, heads);
                let as_ = attention(tape, qs, ks, vs, heads);
                (an, Some(as_))
            }
            None => (attention(tape, qn, kn, vn, heads), None),
        };

        let kt = project(tape, text, &format!("{p}.cross.wk"));
        let vt = project(tape, text, &format!("{p}.cross.wv"));
        let rest = |tape: &mut Tape, x: Var, att: Var| {
            let o = project(tape, att, &format!("{p}.attn.wo"));
            let o = tape.mul_row(o, g_a);
            let x = tape.add(x, o);
            let n = tape.layer_norm(x);
            let q = project(tape, n, &format!("{p}.cross.wq"));
            let c = attention(tape, q, kt, vt, heads);
            let c = project(tape, c, &format!("{p}.cross.wo"));
            let x = tape.add(x, c);
            let f = modulate(tape, x, sh_f, sc_f);
            let f = linear(tape, f, &format!("{p}.ff1"));
            let f = tape.gelu(f);
            let f = linear(tape, f, &format!("{p}.ff2"));
            let f = tape.mul_row(f, g_f);
            tape.add(x, f)
        };
        let h = rest(tape, h, att_n);
        let s = att_s.map(|a| rest(tape, side.expect("side stream"), a));
        (h, s)
    }

    /// Inference convenience: velocity as an owned matrix.
    pub fn velocity(&self, store: &ParamStore, x_t: &Mat, t: f64, text: &Mat, ctx: Option<&Mat>) -> Result<Mat> {
        let mut tape = Tape::new(store);
        let x = tape.input(x_t.clone());
        let tx = tape.input(text.clone());
        let c = ctx.map(|c| tape.input(c.clone()));
        let out = self.forward(&mut tape, x, t, tx, c)?;
        Ok(tape.value(out.velocity).to_owned())
    }
}

/// Inputs of one independent forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardInput {
    pub x_t: Mat,
    pub t: f64,
    pub text: Mat,
    pub ctx: Option<Mat>,
}

impl Model {
    /// Independent forward passes, evaluated in parallel.
    pub fn velocity_batch(&self, store: &ParamStore, inputs: &[ForwardInput]) -> Result<Vec<Mat>> {
        use rayon::prelude::*;
        inputs.par_iter().map(|i| self.velocity(store, &i.x_t, i.t, &i.text, i.ctx.as_ref())).collect()
    }
}

fn add_block(s: &mut ParamStore, rng: &mut ChaCha8Rng, p: &str, h: usize, f: usize) {
    add_linear(s, rng, &format!("{p}.mod"), h, 6 * h, true);
    add_attention(s, rng, &format!("{p}.attn"), h);
    add_attention(s, rng, &format!("{p}.cross"), h);
    add_linear(s, rng, &format!("{p}.ff1"), h, f * h, false);
    add_linear(s, rng, &format!("{p}.ff2"), f * h, h, false);
}

fn self_attention(tape: &mut Tape, x: Var, p: &str, heads: usize) -> Var {
    let q = project(tape, x, &format!("{p}.wq"));
    let k = project(tape, x, &format!("{p}.wk"));
    let v = project(tape, x, &format!("{p}.wv"));
    let a = attention(tape, q, k, v, heads);
    project(tape, a, &format!("{p}.wo"))
}
