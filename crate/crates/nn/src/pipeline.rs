//! Turns dataset records into training samples and evaluation items, and
//! scores sampled motions into an [`EvalReport`].

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umo_core::curves::{ObstacleScene, ParamCurve};
use umo_core::dataset::DatasetRecord;
use umo_core::metrics::{self, EvalReport, LatencyStats, TaskRow};
use umo_core::motion::{MotionSequence, NormStats};
use umo_core::prompt::{tokenize, TokenId, Vocab};
use umo_core::tasks::{compile_plan, FramePlan, TaskKind, TaskParams, TokenSet};

use crate::error::{NnError, Result};
use crate::flow::{inversion_inpaint, sample_euler, SamplerConfig, TrainSample};
use crate::model::Model;
use crate::params::ParamStore;

pub fn encode_prompt(prompt: &str) -> Result<Vec<TokenId>> {
    Ok(tokenize(Vocab::builtin(), prompt)?.ids)
}

/// Whether `kind` can be compiled from `rec`.
pub fn applies(kind: TaskKind, rec: &DatasetRecord) -> bool {
    match kind {
        TaskKind::T2m => true,
        TaskKind::TrajFollow | TaskKind::ObstacleAvoid | TaskKind::Edit | TaskKind::Reaction | TaskKind::Stylization => {
            rec.kind == kind
        }
        TaskKind::Prediction | TaskKind::Backcast | TaskKind::InBetween | TaskKind::KeyframeInfill => true,
    }
}

/// A compiled task with everything needed to sample and score it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskItem {
    pub kind: TaskKind,
    pub record_id: String,
    pub plan: FramePlan,
    pub tokens: Vec<TokenId>,
    /// Normalized ground-truth target.
    pub target: Array2<f64>,
    /// The target as stored, in world units.
    pub truth: MotionSequence,
    /// Denormalized source the plan draws preserved frames from.
    pub source: Option<MotionSequence>,
    pub curve: Option<ParamCurve>,
    pub scene: Option<ObstacleScene>,
}

impl TaskItem {
    pub fn train_sample(&self) -> TrainSample {
        TrainSample { target: self.target.clone(), tokens: self.tokens.clone(), plan: Some(self.plan.clone()) }
    }
}

/// Compiles `kind` for one record. Inpainting tasks draw their preserved
/// frames from the record's target; edit-type tasks from its source.
pub fn compile_item(
    kind: TaskKind,
    rec: &DatasetRecord,
    params: &TaskParams,
    stats: &NormStats,
    rng: &mut ChaCha8Rng,
) -> Result<TaskItem> {
    let target = stats.normalize_array(rec.target.data())?;
    let t = target.nrows();
    let source = match kind {
        TaskKind::Prediction | TaskKind::Backcast | TaskKind::InBetween | TaskKind::KeyframeInfill => Some(rec.target.clone()),
        TaskKind::T2m => None,
        _ => rec.source.clone(),
    };
    let source_norm = source.as_ref().map(|s| stats.normalize_array(s.data())).transpose()?;
    let plan = compile_plan(kind, source_norm.as_ref().map(|s| s.view()), t, params, rng)?;
    let source = source.map(|s| {
        let rows = s.len().min(t);
        MotionSequence::new(s.data().slice(ndarray::s![..rows, ..]).to_owned()).expect("non-empty")
    });
    Ok(TaskItem {
        kind,
        record_id: rec.id.clone(),
        plan,
        tokens: encode_prompt(&rec.prompt)?,
        target,
        truth: rec.target.clone(),
        source,
        curve: rec.curve.clone(),
        scene: rec.scene.clone(),
    })
}

/// Every applicable `(kind, record)` pair, with split sizes drawn from `seed`.
pub fn compile_items(
    records: &[DatasetRecord],
    kinds: &[TaskKind],
    params: &TaskParams,
    stats: &NormStats,
    seed: u64,
) -> Result<Vec<TaskItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for rec in records {
        for &kind in kinds {
            if applies(kind, rec) {
                out.push(compile_item(kind, rec, params, stats, &mut rng)?);
            }
        }
    }
    Ok(out)
}

/// Text-to-motion samples for pretraining.
pub fn pretrain_samples(records: &[DatasetRecord], stats: &NormStats) -> Result<Vec<TrainSample>> {
    records
        .iter()
        .map(|r| Ok(TrainSample { target: stats.normalize_array(r.target.data())?, tokens: encode_prompt(&r.prompt)?, plan: None }))
        .collect()
}

/// Where the training loop gets its examples.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One example; any randomness comes from `rng`.
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<TrainSample>;
}

impl SampleSource for [TrainSample] {
    fn len(&self) -> usize {
        <[TrainSample]>::len(self)
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<TrainSample> {
        Ok(self[rng.random_range(0..<[TrainSample]>::len(self))].clone())
    }
}

impl SampleSource for Vec<TrainSample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<TrainSample> {
        self.as_slice().draw(rng)
    }
}

struct MixtureEntry {
    kind: TaskKind,
    target: Array2<f64>,
    source: Option<Array2<f64>>,
    tokens: Vec<TokenId>,
}

/// Joint multi-task data: each draw picks a record-task pair uniformly and
/// compiles a fresh plan, so split points vary between epochs.
pub struct TaskMixture {
    entries: Vec<std::sync::Arc<MixtureEntry>>,
    pairs: Vec<(usize, TaskKind)>,
    params: TaskParams,
}

impl TaskMixture {
    pub fn new(records: &[DatasetRecord], kinds: &[TaskKind], params: TaskParams, stats: &NormStats) -> Result<Self> {
        let mut entries = Vec::new();
        let mut pairs = Vec::new();
        for rec in records {
            let usable: Vec<TaskKind> = kinds.iter().copied().filter(|&k| applies(k, rec)).collect();
            if usable.is_empty() {
                continue;
            }
            let idx = entries.len();
            entries.push(std::sync::Arc::new(MixtureEntry {
                kind: rec.kind,
                target: stats.normalize_array(rec.target.data())?,
                source: rec.source.as_ref().map(|s| stats.normalize_array(s.data())).transpose()?,
                tokens: encode_prompt(&rec.prompt)?,
            }));
            pairs.extend(usable.into_iter().map(|k| (idx, k)));
        }
        Ok(Self { entries, pairs, params })
    }
}

impl SampleSource for TaskMixture {
    fn len(&self) -> usize {
        self.pairs.len()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<TrainSample> {
        let (idx, kind) = self.pairs[rng.random_range(0..self.pairs.len())];
        let e = &self.entries[idx];
        debug_assert!(kind.is_inpainting() || kind == TaskKind::T2m || kind == e.kind);
        let t = e.target.nrows();
        let source = match kind {
            k if k.is_inpainting() => Some(e.target.view()),
            TaskKind::T2m => None,
            _ => e.source.as_ref().map(|s| s.view()),
        };
        let plan = compile_plan(kind, source, t, &self.params, rng)?;
        Ok(TrainSample { target: e.target.clone(), tokens: e.tokens.clone(), plan: Some(plan) })
    }
}

/// Metric values of one scored motion; `None` where a metric does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Scores {
    pub mpjpe: Option<f64>,
    pub p_mpjpe: Option<f64>,
    pub traj_error: Option<f64>,
    pub success: Option<bool>,
}

/// Scores a denormalized prediction against the item.
pub fn score(item: &TaskItem, pred: &MotionSequence) -> Result<Scores> {
    let mut s = Scores { mpjpe: Some(metrics::mpjpe(pred, &item.truth)?), ..Scores::default() };
    if let Some(src) = &item.source {
        if !item.plan.preserved().is_empty() {
            s.p_mpjpe = Some(metrics::p_mpjpe(pred, &item.plan, src)?);
        }
    }
    if matches!(item.kind, TaskKind::TrajFollow | TaskKind::ObstacleAvoid) {
        if let Some(c) = &item.curve {
            s.traj_error = Some(metrics::traj_error(pred, c));
        }
    }
    if let Some(scene) = &item.scene {
        s.success = Some(metrics::avoids_obstacles(pred, scene));
    }
    Ok(s)
}

/// How predictions are produced for an evaluation run.
#[derive(Debug, Clone, Copy)]
pub enum Producer<'a> {
    /// Guided Euler sampling with the item's plan.
    Model { model: &'a Model, store: &'a ParamStore },
    /// Inversion inpainting of the preserved frames with a context-free model.
    Inversion { model: &'a Model, store: &'a ParamStore },
    /// The ground-truth target itself.
    GroundTruth,
}

/// Produces one denormalized motion for `item`.
pub fn produce(producer: Producer, item: &TaskItem, stats: &NormStats, sampler: &SamplerConfig) -> Result<MotionSequence> {
    let x = match producer {
        Producer::Model { model, store } => sample_euler(model, store, &item.tokens, &item.plan, sampler)?,
        Producer::Inversion { model, store } => {
            inversion_inpaint(model, store, &item.plan.preserved(), &item.plan.source, &item.tokens, sampler)?
        }
        Producer::GroundTruth => return Ok(item.truth.clone()),
    };
    Ok(MotionSequence::new(stats.denormalize_array(&x)?)?)
}

#[derive(Default)]
struct Acc {
    count: usize,
    sums: [f64; 4],
    counts: [usize; 4],
    latency: Vec<f64>,
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Samples every item, seeds `sampler.seed + index`, and aggregates rows per
/// task kind under `variant`.
pub fn evaluate(
    producer: Producer,
    items: &[TaskItem],
    stats: &NormStats,
    sampler: &SamplerConfig,
    variant: &str,
) -> Result<(Vec<TaskRow>, Vec<MotionSequence>)> {
    let mut acc: BTreeMap<&'static str, Acc> = BTreeMap::new();
    let mut preds = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let cfg = SamplerConfig { seed: sampler.seed.wrapping_add(i as u64), ..*sampler };
        let start = Instant::now();
        let pred = produce(producer, item, stats, &cfg)?;
        let elapsed = start.elapsed().as_secs_f64();
        let s = score(item, &pred)?;
        let a = acc.entry(item.kind.as_str()).or_default();
        a.count += 1;
        a.latency.push(elapsed);
        let vals = [s.mpjpe, s.p_mpjpe, s.traj_error, s.success.map(|b| if b { 1.0 } else { 0.0 })];
        for (k, v) in vals.into_iter().enumerate() {
            if let Some(v) = v {
                a.sums[k] += v;
                a.counts[k] += 1;
            }
        }
        preds.push(pred);
    }
    let rows = acc
        .into_iter()
        .map(|(task, a)| TaskRow {
            task: task.to_string(),
            variant: variant.to_string(),
            count: a.count,
            mpjpe: mean(a.sums[0], a.counts[0]),
            p_mpjpe: mean(a.sums[1], a.counts[1]),
            traj_error: mean(a.sums[2], a.counts[2]),
            success: mean(a.sums[3], a.counts[3]),
            latency: LatencyStats::from_samples(&a.latency),
        })
        .collect();
    Ok((rows, preds))
}

/// The label used for a token set in report rows.
pub fn token_variant(tokens: TokenSet) -> &'static str {
    match tokens {
        TokenSet::Three => "three",
        TokenSet::Two => "two",
    }
}

/// Joins rows into a report, rejecting malformed values.
pub fn report(rows: Vec<TaskRow>, archs: Vec<metrics::ArchRow>) -> Result<EvalReport> {
    let r = EvalReport { tasks: rows, archs };
    if !r.is_well_formed() {
        return Err(NnError::NonFinite { step: 0 });
    }
    Ok(r)
}
