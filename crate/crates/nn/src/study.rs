//! End-to-end experiments: the pretrain-then-fine-tune trainability run and
//! the two-token ablation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use umo_core::dataset::{dataset_stats, generate_trajectory_dataset, DatagenConfig, DatasetRecord, LevelCounts};
use umo_core::metrics::{EvalReport, TaskRow};
use umo_core::motion::NormStats;
use umo_core::tasks::{TaskKind, TaskParams, TokenSet};

use crate::error::Result;
use crate::flow::{fm_loss, SamplerConfig, TrainSample};
use crate::model::{CondArch, Model, ModelConfig};
use crate::params::ParamStore;
use crate::pipeline::{compile_items, evaluate, pretrain_samples, report, token_variant, Producer, TaskItem, TaskMixture};
use crate::train::{finetune, train, TrainConfig};

/// Settings of the trainability run. The defaults are the calibrated ones.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainabilityConfig {
    pub model: ModelConfig,
    pub train_counts: LevelCounts,
    pub train_seed: u64,
    pub held_counts: LevelCounts,
    pub held_seed: u64,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub tasks: Vec<TaskKind>,
    pub sampler: SamplerConfig,
    pub init_seed: u64,
    pub attach_seed: u64,
    /// Samples in the fixed batch whose loss tracks pretraining.
    pub probe: usize,
}

impl Default for TrainabilityConfig {
    fn default() -> Self {
        let model = ModelConfig { hidden: 64, layers: 2, heads: 4, text_dim: 64, ..ModelConfig::default() };
        let pretrain = TrainConfig { lr: 1e-3, batch: 8, steps: 3000, cond_drop: 0.1, seed: 3, chunk: 0 };
        Self {
            model,
            train_counts: LevelCounts { l1: 50, l2: 200, l3: 250 },
            train_seed: 7,
            held_counts: LevelCounts { l1: 4, l2: 8, l3: 8 },
            held_seed: 8,
            pretrain,
            finetune: TrainConfig { seed: 4, ..pretrain },
            tasks: vec![TaskKind::KeyframeInfill, TaskKind::TrajFollow, TaskKind::Prediction, TaskKind::InBetween],
            sampler: SamplerConfig { steps: 50, cfg_scale: 2.0, seed: 100 },
            init_seed: 1,
            attach_seed: 11,
            probe: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainabilityReport {
    pub pretrain_initial: f64,
    pub pretrain_final: f64,
    pub keyframe_initial: f64,
    pub keyframe_final: f64,
    /// Trajectory error in cm at guidance scale 1 (plain conditional).
    pub traj_conditional: f64,
    /// Trajectory error at the configured guidance scale.
    pub traj_guided: f64,
    /// Trajectory error at guidance scale 0 (null prompt only).
    pub traj_unconditional: f64,
    pub pretrain_curve: Vec<f64>,
    pub finetune_curve: Vec<f64>,
}

fn probe_loss(model: &Model, store: &ParamStore, data: &[TrainSample], n: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let batch: Vec<&TrainSample> = data.iter().take(n).collect();
    fm_loss(model, store, &batch, 0.0, &mut rng)
}

fn metric(rows: &[TaskRow], pick: impl Fn(&TaskRow) -> Option<f64>) -> f64 {
    rows.first().and_then(pick).unwrap_or(f64::NAN)
}

/// Pretrains a text-to-motion model, fine-tunes temporal fusion on the
/// task mixture and scores keyframe infilling and trajectory following on
/// held-out records. `log` receives progress lines.
pub fn trainability(cfg: &TrainabilityConfig, mut log: impl FnMut(&str)) -> Result<TrainabilityReport> {
    let dg = DatagenConfig::default();
    let train_recs = generate_trajectory_dataset(cfg.train_counts, cfg.train_seed, &dg)?;
    let held = generate_trajectory_dataset(cfg.held_counts, cfg.held_seed, &dg)?;
    let stats = dataset_stats(&train_recs)?;

    let (mut model, mut store) = Model::init(cfg.model.with_arch(None), cfg.init_seed)?;
    let pre = pretrain_samples(&train_recs, &stats)?;
    let pretrain_initial = probe_loss(&model, &store, &pre, cfg.probe)?;
    let every = (cfg.pretrain.steps / 10).max(1);
    let pretrain_curve = train(&model, &mut store, &pre, &cfg.pretrain, |s, l| {
        if s % every == 0 {
            log(&format!("pretrain step {s} loss {l:.4}"));
        }
    })?;
    let pretrain_final = probe_loss(&model, &store, &pre, cfg.probe)?;

    let params = TaskParams::default();
    let mixture = TaskMixture::new(&train_recs, &cfg.tasks, params, &stats)?;
    let kf = compile_items(&held, &[TaskKind::KeyframeInfill], &params, &stats, 6)?;
    let traj = compile_items(&held, &[TaskKind::TrajFollow], &params, &stats, 6)?;
    let score = |model: &Model, store: &ParamStore, items: &[TaskItem], scale: f64| {
        let s = SamplerConfig { cfg_scale: scale, ..cfg.sampler };
        evaluate(Producer::Model { model, store }, items, &stats, &s, "x").map(|r| r.0)
    };

    model.attach_context(&mut store, CondArch::TemporalFusion, cfg.attach_seed)?;
    let keyframe_initial = metric(&score(&model, &store, &kf, cfg.sampler.cfg_scale)?, |r| r.p_mpjpe);
    log(&format!("keyframe P-MPJPE at fine-tune start {keyframe_initial:.4}"));
    let every = (cfg.finetune.steps / 10).max(1);
    let finetune_curve = finetune(&mut model, &mut store, CondArch::TemporalFusion, &mixture, &cfg.finetune, |s, l| {
        if s % every == 0 {
            log(&format!("finetune step {s} loss {l:.4}"));
        }
    })?;
    let keyframe_final = metric(&score(&model, &store, &kf, cfg.sampler.cfg_scale)?, |r| r.p_mpjpe);
    let traj_conditional = metric(&score(&model, &store, &traj, 1.0)?, |r| r.traj_error);
    let traj_guided = metric(&score(&model, &store, &traj, cfg.sampler.cfg_scale)?, |r| r.traj_error);
    let traj_unconditional = metric(&score(&model, &store, &traj, 0.0)?, |r| r.traj_error);
    Ok(TrainabilityReport {
        pretrain_initial,
        pretrain_final,
        keyframe_initial,
        keyframe_final,
        traj_conditional,
        traj_guided,
        traj_unconditional,
        pretrain_curve,
        finetune_curve,
    })
}

/// Settings of the token-set ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub finetune: TrainConfig,
    pub tasks: Vec<TaskKind>,
    pub sampler: SamplerConfig,
    pub task_seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            finetune: TrainConfig { lr: 1e-3, batch: 8, steps: 500, cond_drop: 0.1, seed: 5, chunk: 0 },
            tasks: vec![TaskKind::Prediction, TaskKind::Backcast, TaskKind::InBetween, TaskKind::KeyframeInfill],
            sampler: SamplerConfig::default(),
            task_seed: 6,
        }
    }
}

/// Fine-tunes a copy of the context-free `base` once per token set and
/// evaluates both on the same held-out items. Edit-star plans are used so
/// the two-token set actually differs (its generate frames keep a source).
pub fn token_ablation(
    base: (&Model, &ParamStore),
    stats: &NormStats,
    train_recs: &[DatasetRecord],
    eval_recs: &[DatasetRecord],
    cfg: &AblationConfig,
    mut log: impl FnMut(&str),
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for tokens in [TokenSet::Three, TokenSet::Two] {
        let params = TaskParams { tokens, star: umo_core::tasks::StarMode::Edit, ..TaskParams::default() };
        let (mut model, mut store) = (base.0.clone(), base.1.clone());
        let mixture = TaskMixture::new(train_recs, &cfg.tasks, params, stats)?;
        let variant = token_variant(tokens);
        finetune(&mut model, &mut store, CondArch::TemporalFusion, &mixture, &cfg.finetune, |_, _| {})?;
        log(&format!("{variant}-token fine-tune done"));
        let items = compile_items(eval_recs, &cfg.tasks, &params, stats, cfg.task_seed)?;
        let (r, _) = evaluate(Producer::Model { model: &model, store: &store }, &items, stats, &cfg.sampler, variant)?;
        rows.extend(r);
    }
    report(rows, Vec::new())
}
