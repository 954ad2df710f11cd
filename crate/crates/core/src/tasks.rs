//! Frame-level meta-operations and per-task plan compilation.
//!
//! Every task is a per-frame pair `(s_i, tau_i)`: a source frame (or the
//! zero sentinel) and one of preserve / generate / edit. The in-context
//! input the backbone sees is `s_i + Emb(tau_i)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::FRAME_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetaOp {
    /// Keep the source frame.
    P,
    /// Synthesize freely.
    G,
    /// Transform the source frame.
    E,
}

impl MetaOp {
    pub const ALL: [MetaOp; 3] = [MetaOp::P, MetaOp::G, MetaOp::E];

    /// Row of this op in a [`MetaOpTable`].
    pub fn index(self) -> usize {
        match self {
            MetaOp::P => 0,
            MetaOp::G => 1,
            MetaOp::E => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    T2m,
    TrajFollow,
    ObstacleAvoid,
    Edit,
    Reaction,
    Stylization,
    Prediction,
    Backcast,
    InBetween,
    KeyframeInfill,
}

impl TaskKind {
    pub const ALL: [TaskKind; 10] = [
        TaskKind::T2m,
        TaskKind::TrajFollow,
        TaskKind::ObstacleAvoid,
        TaskKind::Edit,
        TaskKind::Reaction,
        TaskKind::Stylization,
        TaskKind::Prediction,
        TaskKind::Backcast,
        TaskKind::InBetween,
        TaskKind::KeyframeInfill,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::T2m => "t2m",
            TaskKind::TrajFollow => "traj_follow",
            TaskKind::ObstacleAvoid => "obstacle_avoid",
            TaskKind::Edit => "edit",
            TaskKind::Reaction => "reaction",
            TaskKind::Stylization => "stylization",
            TaskKind::Prediction => "prediction",
            TaskKind::Backcast => "backcast",
            TaskKind::InBetween => "in_between",
            TaskKind::KeyframeInfill => "keyframe_infill",
        }
    }

    pub fn is_inpainting(self) -> bool {
        matches!(self, TaskKind::Prediction | TaskKind::Backcast | TaskKind::InBetween | TaskKind::KeyframeInfill)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| TaskError::UnknownKind(s.to_string()))
    }
}

/// How the unconstrained frames of an inpainting task are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StarMode {
    /// `(0, G)`.
    #[default]
    Generate,
    /// `(m_i, E)`.
    Edit,
}

/// Three tokens, or the reduced set where edit merges into generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenSet {
    #[default]
    Three,
    Two,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("task `{0}` needs a source motion")]
    MissingSource(TaskKind),
    #[error("split {k} is outside [1, {}]", .t - 1)]
    BadSplit { k: usize, t: usize },
    #[error("keyframe stride must be at least 1")]
    BadStride,
    #[error("source has {got} frames but the plan needs {need}")]
    SourceTooShort { need: usize, got: usize },
    #[error("plan length {t} exceeds the maximum {max}")]
    TooLong { t: usize, max: usize },
    #[error("source has {0} channels, expected 201")]
    BadChannels(usize),
    #[error("unknown task kind `{0}`")]
    UnknownKind(String),
}

/// Knobs for [`compile_plan`]. Unset split sizes are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    /// Prefix (prediction) or suffix (backcast) length kept as context.
    pub split: Option<usize>,
    /// Preserved head and tail lengths for in-betweening.
    pub ends: Option<(usize, usize)>,
    pub stride: usize,
    pub star: StarMode,
    /// Trajectory and obstacle tasks: edit a straight-line source walk
    /// instead of generating from the prompt alone.
    pub context: bool,
    pub tokens: TokenSet,
    pub max_frames: usize,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            split: None,
            ends: None,
            stride: 30,
            star: StarMode::Generate,
            context: false,
            tokens: TokenSet::Three,
            max_frames: crate::motion::DEFAULT_MAX_FRAMES,
        }
    }
}

/// Per-frame `(s_i, tau_i)`. Frames without a source carry zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub ops: Vec<MetaOp>,
    pub source: Array2<f64>,
    pub has_source: Vec<bool>,
}

impl FramePlan {
    /// The all-generate plan of length `t`.
    pub fn generate(t: usize) -> Self {
        Self { ops: vec![MetaOp::G; t], source: Array2::zeros((t, FRAME_DIM)), has_source: vec![false; t] }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn preserved(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.ops[i] == MetaOp::P).collect()
    }

    fn set(&mut self, i: usize, op: MetaOp, src: Option<ArrayView2<f64>>) {
        self.ops[i] = op;
        match src {
            Some(s) => {
                self.source.row_mut(i).assign(&s.row(i));
                self.has_source[i] = true;
            }
            None => {
                self.source.row_mut(i).fill(0.0);
                self.has_source[i] = false;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanViolation {
    pub index: usize,
    pub reason: &'static str,
}

/// Checks per-frame consistency. `P` and `E` need a real source frame;
/// `G` needs the zero sentinel, except in the two-token set where edit
/// frames became generate frames that keep their source.
pub fn validate_plan(plan: &FramePlan, tokens: TokenSet) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    if plan.source.nrows() != plan.len() || plan.has_source.len() != plan.len() {
        out.push(PlanViolation { index: 0, reason: "plan arrays disagree in length" });
        return out;
    }
    for i in 0..plan.len() {
        let has = plan.has_source[i];
        let zero = plan.source.row(i).iter().all(|&v| v == 0.0);
        let reason = match (plan.ops[i], tokens) {
            (MetaOp::P, _) if !has => Some("preserve without a source frame"),
            (MetaOp::E, TokenSet::Three) if !has => Some("edit without a source frame"),
            (MetaOp::E, TokenSet::Two) => Some("edit token outside the two-token set"),
            (MetaOp::G, TokenSet::Three) if has || !zero => Some("generate with a source frame"),
            (MetaOp::G, TokenSet::Two) if !has && !zero => Some("sourceless generate frame is not zero"),
            _ => None,
        };
        if let Some(reason) = reason {
            out.push(PlanViolation { index: i, reason });
        }
    }
    out
}

/// Ops a compiled plan of `kind` may contain.
pub fn licensed_ops(kind: TaskKind, params: &TaskParams) -> Vec<MetaOp> {
    let star = match params.star {
        StarMode::Generate => MetaOp::G,
        StarMode::Edit => MetaOp::E,
    };
    let ops = match kind {
        TaskKind::T2m => vec![MetaOp::G],
        TaskKind::TrajFollow | TaskKind::ObstacleAvoid if !params.context => vec![MetaOp::G],
        TaskKind::TrajFollow
        | TaskKind::ObstacleAvoid
        | TaskKind::Edit
        | TaskKind::Reaction
        | TaskKind::Stylization => vec![MetaOp::E],
        _ => vec![MetaOp::P, star],
    };
    match params.tokens {
        TokenSet::Three => ops,
        TokenSet::Two => ops.into_iter().map(|o| if o == MetaOp::E { MetaOp::G } else { o }).collect(),
    }
}

fn sample_in(rng: &mut impl Rng, lo: f64, hi: f64, t: usize) -> usize {
    let lo = (lo.ceil() as usize).max(1);
    let hi = (hi.floor() as usize).max(lo).min(t.saturating_sub(1).max(1));
    let lo = lo.min(hi);
    rng.random_range(lo..=hi)
}

/// Compiles `kind` into a frame plan of length `t`. `source` is the
/// normalized motion the plan draws `s_i` from and must cover `t` frames
/// whenever the plan references it; longer sources are truncated.
pub fn compile_plan(
    kind: TaskKind,
    source: Option<ArrayView2<f64>>,
    t: usize,
    params: &TaskParams,
    rng: &mut impl Rng,
) -> Result<FramePlan, TaskError> {
    if t > params.max_frames {
        return Err(TaskError::TooLong { t, max: params.max_frames });
    }
    let needs_source = match kind {
        TaskKind::T2m => false,
        TaskKind::TrajFollow | TaskKind::ObstacleAvoid => params.context,
        _ => true,
    };
    if needs_source {
        let s = source.ok_or(TaskError::MissingSource(kind))?;
        if s.ncols() != FRAME_DIM {
            return Err(TaskError::BadChannels(s.ncols()));
        }
        if s.nrows() < t {
            return Err(TaskError::SourceTooShort { need: t, got: s.nrows() });
        }
    }
    let src = if needs_source { source } else { None };
    let mut plan = FramePlan::generate(t);
    let star = |plan: &mut FramePlan, i: usize| match params.star {
        StarMode::Generate => plan.set(i, MetaOp::G, None),
        StarMode::Edit => plan.set(i, MetaOp::E, src),
    };
    let check_split = |k: usize| if k == 0 || k >= t { Err(TaskError::BadSplit { k, t }) } else { Ok(k) };
    match kind {
        TaskKind::T2m => {}
        TaskKind::TrajFollow | TaskKind::ObstacleAvoid if !params.context => {}
        TaskKind::TrajFollow
        | TaskKind::ObstacleAvoid
        | TaskKind::Edit
        | TaskKind::Reaction
        | TaskKind::Stylization => {
            for i in 0..t {
                plan.set(i, MetaOp::E, src);
            }
        }
        TaskKind::Prediction | TaskKind::Backcast => {
            let k = check_split(params.split.unwrap_or_else(|| sample_in(rng, 0.25 * t as f64, 0.5 * t as f64, t)))?;
            for i in 0..t {
                let kept = if kind == TaskKind::Prediction { i < k } else { i >= t - k };
                if kept {
                    plan.set(i, MetaOp::P, src);
                } else {
                    star(&mut plan, i);
                }
            }
        }
        TaskKind::InBetween => {
            let (a, b) = match params.ends {
                Some(e) => e,
                None => {
                    let a = sample_in(rng, 0.15 * t as f64, 0.3 * t as f64, t);
                    let b = sample_in(rng, 0.15 * t as f64, 0.3 * t as f64, t);
                    (a, b)
                }
            };
            check_split(a)?;
            check_split(b)?;
            if a + b >= t {
                return Err(TaskError::BadSplit { k: a + b, t });
            }
            for i in 0..t {
                if i < a || i >= t - b {
                    plan.set(i, MetaOp::P, src);
                } else {
                    star(&mut plan, i);
                }
            }
        }
        TaskKind::KeyframeInfill => {
            if params.stride == 0 {
                return Err(TaskError::BadStride);
            }
            for i in 0..t {
                if i % params.stride == 0 || i == t - 1 {
                    plan.set(i, MetaOp::P, src);
                } else {
                    star(&mut plan, i);
                }
            }
        }
    }
    if params.tokens == TokenSet::Two {
        for op in plan.ops.iter_mut() {
            if *op == MetaOp::E {
                *op = MetaOp::G;
            }
        }
    }
    Ok(plan)
}

/// A compiled task: plan plus prompt, and the target during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub plan: FramePlan,
    pub prompt: String,
    pub target: Option<Array2<f64>>,
}

/// The three meta-operation embeddings, one 201-vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaOpTable {
    pub rows: Array2<f64>,
}

impl MetaOpTable {
    pub fn zeros() -> Self {
        Self { rows: Array2::zeros((3, FRAME_DIM)) }
    }

    pub fn new(rows: Array2<f64>) -> Self {
        assert_eq!(rows.dim(), (3, FRAME_DIM), "meta-op table must be 3 x 201");
        Self { rows }
    }

    pub fn embedding(&self, op: MetaOp) -> ndarray::ArrayView1<'_, f64> {
        self.rows.row(op.index())
    }
}

/// `s_i + Emb(tau_i)` for every frame.
pub fn build_context(plan: &FramePlan, table: &MetaOpTable) -> Array2<f64> {
    let mut out = plan.source.clone();
    for (i, op) in plan.ops.iter().enumerate() {
        let mut row = out.row_mut(i);
        row += &table.embedding(*op);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn source(t: usize) -> Array2<f64> {
        Array2::from_shape_fn((t, FRAME_DIM), |(i, c)| 1.0 + i as f64 + 0.001 * c as f64)
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn t2m_is_all_generate() {
        let plan = compile_plan(TaskKind::T2m, None, 4, &TaskParams::default(), &mut rng()).unwrap();
        assert_eq!(plan.ops, vec![MetaOp::G; 4]);
        assert!(plan.source.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prediction_keeps_the_prefix() {
        let m = source(6);
        let p = TaskParams { split: Some(2), ..TaskParams::default() };
        let plan = compile_plan(TaskKind::Prediction, Some(m.view()), 6, &p, &mut rng()).unwrap();
        use MetaOp::*;
        assert_eq!(plan.ops, vec![P, P, G, G, G, G]);
        assert_eq!(plan.source.row(1), m.row(1));
        assert!(plan.source.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn keyframes_every_stride() {
        let m = source(7);
        let p = TaskParams { stride: 3, ..TaskParams::default() };
        let plan = compile_plan(TaskKind::KeyframeInfill, Some(m.view()), 7, &p, &mut rng()).unwrap();
        use MetaOp::*;
        assert_eq!(plan.ops, vec![P, G, G, P, G, G, P]);
        // the final frame is always a keyframe
        let plan = compile_plan(TaskKind::KeyframeInfill, Some(m.view()), 6, &p, &mut rng()).unwrap();
        assert_eq!(plan.ops, vec![P, G, G, P, G, P]);
    }

    #[test]
    fn star_edit_mode_and_backcast() {
        let m = source(5);
        let p = TaskParams { split: Some(2), star: StarMode::Edit, ..TaskParams::default() };
        let plan = compile_plan(TaskKind::Backcast, Some(m.view()), 5, &p, &mut rng()).unwrap();
        use MetaOp::*;
        assert_eq!(plan.ops, vec![E, E, E, P, P]);
        assert!(plan.has_source.iter().all(|&h| h));
    }

    #[test]
    fn errors() {
        let m = source(6);
        let p = TaskParams { split: Some(6), ..TaskParams::default() };
        assert_eq!(
            compile_plan(TaskKind::Prediction, Some(m.view()), 6, &p, &mut rng()),
            Err(TaskError::BadSplit { k: 6, t: 6 })
        );
        assert_eq!(
            compile_plan(TaskKind::Edit, None, 6, &TaskParams::default(), &mut rng()),
            Err(TaskError::MissingSource(TaskKind::Edit))
        );
        let p = TaskParams { stride: 0, ..TaskParams::default() };
        assert_eq!(compile_plan(TaskKind::KeyframeInfill, Some(m.view()), 6, &p, &mut rng()), Err(TaskError::BadStride));
        assert_eq!(
            compile_plan(TaskKind::Edit, Some(m.view()), 8, &TaskParams::default(), &mut rng()),
            Err(TaskError::SourceTooShort { need: 8, got: 6 })
        );
    }

    #[test]
    fn sampled_splits_stay_in_range() {
        let mut r = rng();
        for t in [10usize, 57, 190] {
            let m = source(t);
            for _ in 0..50 {
                let plan = compile_plan(TaskKind::Prediction, Some(m.view()), t, &TaskParams::default(), &mut r).unwrap();
                let k = plan.preserved().len();
                assert!(k >= (0.25 * t as f64).ceil() as usize && k <= t / 2, "t={t} k={k}");
                let plan = compile_plan(TaskKind::InBetween, Some(m.view()), t, &TaskParams::default(), &mut r).unwrap();
                let head = plan.ops.iter().take_while(|&&o| o == MetaOp::P).count();
                let tail = plan.ops.iter().rev().take_while(|&&o| o == MetaOp::P).count();
                for e in [head, tail] {
                    assert!(e >= (0.15 * t as f64).ceil() as usize && e <= (0.3 * t as f64).floor() as usize);
                }
            }
        }
    }

    #[test]
    fn preserve_without_source_is_flagged() {
        let mut plan = FramePlan::generate(5);
        plan.ops[3] = MetaOp::P;
        assert_eq!(validate_plan(&plan, TokenSet::Three), vec![PlanViolation { index: 3, reason: "preserve without a source frame" }]);
    }

    #[test]
    fn two_token_plans_keep_sources_on_generate_frames() {
        let m = source(8);
        let p = TaskParams { tokens: TokenSet::Two, ..TaskParams::default() };
        let plan = compile_plan(TaskKind::Edit, Some(m.view()), 8, &p, &mut rng()).unwrap();
        assert_eq!(plan.ops, vec![MetaOp::G; 8]);
        assert_eq!(plan.source, m);
        assert!(validate_plan(&plan, TokenSet::Two).is_empty());
        assert!(!validate_plan(&plan, TokenSet::Three).is_empty());
    }

    #[test]
    fn context_is_source_plus_embedding() {
        let m = source(6);
        let p = TaskParams { split: Some(3), ..TaskParams::default() };
        let plan = compile_plan(TaskKind::Prediction, Some(m.view()), 6, &p, &mut rng()).unwrap();
        assert_eq!(build_context(&plan, &MetaOpTable::zeros()), plan.source);
        let table = MetaOpTable::new(Array2::from_shape_fn((3, FRAME_DIM), |(r, c)| r as f64 * 10.0 - c as f64));
        let ctx = build_context(&plan, &table);
        for i in 0..6 {
            for c in 0..FRAME_DIM {
                assert_eq!(ctx[[i, c]], plan.source[[i, c]] + table.rows[[plan.ops[i].index(), c]]);
            }
        }
        let t2m = FramePlan::generate(3);
        let ctx = build_context(&t2m, &table);
        for i in 0..3 {
            assert_eq!(ctx.row(i), table.rows.row(1));
        }
    }
}
