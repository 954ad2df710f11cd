//! Subcommand implementations.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use umo_core::dataset::{
    dataset_stats, generate_edit_pairs, generate_obstacle_dataset, generate_reaction_pairs, generate_trajectory_dataset,
    read_dataset, read_stats, write_dataset, write_stats, DatagenConfig, DatasetRecord, LevelCounts,
};
use umo_core::metrics::EvalReport;
use umo_core::motion::NormStats;
use umo_core::prompt::TemplateMode;
use umo_core::tasks::{StarMode, TaskKind, TaskParams, TokenSet};
use umo_nn::accounting::{overhead_report, OverheadConfig};
use umo_nn::checkpoint::Checkpoint;
use umo_nn::flow::SamplerConfig;
use umo_nn::pipeline::{applies, compile_item, compile_items, evaluate, pretrain_samples, produce, report, Producer, TaskMixture};
use umo_nn::study::{token_ablation, AblationConfig};
use umo_nn::train::{finetune, train, write_loss_csv, TrainConfig};
use umo_nn::{CondArch, Model, ModelConfig, ParamStore};

use crate::config::{key, Key, RunConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

const MODEL_KEYS: [Key; 6] = [
    key("hidden", "128"),
    key("layers", "4"),
    key("heads", "4"),
    key("ffn_mult", "4"),
    key("text_layers", "2"),
    key("text_dim", "128"),
];

const TRAIN_KEYS: [Key; 6] = [
    key("steps", "1000"),
    key("batch", "32"),
    key("lr", "5e-5"),
    key("cond_drop", "0.1"),
    key("chunk", "0"),
    key("seed", "0"),
];

const TASK_KEYS: [Key; 5] =
    [key("stride", "30"), key("split", "auto"), key("tokens", "three"), key("star", "generate"), key("context", "false")];

const SAMPLER_KEYS: [Key; 2] = [key("sample_steps", "50"), key("cfg_scale", "2.0")];

const ALL_TASKS: &str = "keyframe_infill,prediction,backcast,in_between,traj_follow,obstacle_avoid,edit,reaction";

/// Keys accepted by `command`, or `None` for an unknown subcommand.
pub fn keys_for(command: &str) -> Option<Vec<Key>> {
    let mut k: Vec<Key> = Vec::new();
    match command {
        "datagen" => k.extend([
            key("out", "data"),
            key("seed", "2024"),
            key("traj_l1", "200"),
            key("traj_l2", "800"),
            key("traj_l3", "1000"),
            key("obs_l1", "100"),
            key("obs_l2", "900"),
            key("obs_l3", "1000"),
            key("template", "minimal"),
        ]),
        "train" => {
            k.extend([key("data", "data"), key("out", "runs/pretrain"), key("sets", "trajectory,obstacle")]);
            k.extend(MODEL_KEYS);
            k.extend(TRAIN_KEYS);
        }
        "finetune" => {
            k.extend([
                key("data", "data"),
                key("ckpt", "runs/pretrain/model.umoc"),
                key("out", "runs/finetune"),
                key("arch", "temporal_fusion"),
                key("tasks", ALL_TASKS),
            ]);
            k.extend(TRAIN_KEYS);
            k.extend(TASK_KEYS);
        }
        "sample" => {
            k.extend([
                key("data", "data"),
                key("ckpt", "runs/finetune/model.umoc"),
                key("out", "samples"),
                key("task", "t2m"),
                key("record", "0"),
                key("count", "1"),
                key("seed", "0"),
                key("producer", "model"),
            ]);
            k.extend(TASK_KEYS);
            k.extend(SAMPLER_KEYS);
        }
        "eval" => {
            k.extend([
                key("data", "data"),
                key("ckpt", "runs/finetune/model.umoc"),
                key("out", "eval"),
                key("tasks", ALL_TASKS),
                key("offset", "0"),
                key("count", "20"),
                key("seed", "0"),
                key("producer", "model"),
            ]);
            k.extend(TASK_KEYS);
            k.extend(SAMPLER_KEYS);
        }
        "ablate" => {
            k.extend([
                key("study", "arch"),
                key("out", "ablate"),
                key("frames", "190"),
                key("text_rows", "64"),
                key("latency_runs", "3"),
                key("data", "data"),
                key("ckpt", "runs/pretrain/model.umoc"),
                key("train_count", "200"),
                key("offset", "1800"),
                key("count", "20"),
            ]);
            k.extend(MODEL_KEYS);
            k.extend(TRAIN_KEYS);
            k.extend(SAMPLER_KEYS);
        }
        _ => return None,
    }
    Some(k)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    match cfg.command.as_str() {
        "datagen" => datagen(cfg),
        "train" => pretrain(cfg),
        "finetune" => fine_tune(cfg),
        "sample" => sample(cfg),
        "eval" => eval(cfg),
        "ablate" => ablate(cfg),
        other => Err(CliError::Usage(format!("unknown subcommand `{other}`"))),
    }
}

fn model_config(cfg: &RunConfig) -> Result<ModelConfig> {
    let m = ModelConfig {
        hidden: cfg.get("hidden")?,
        layers: cfg.get("layers")?,
        heads: cfg.get("heads")?,
        ffn_mult: cfg.get("ffn_mult")?,
        text_layers: cfg.get("text_layers")?,
        text_dim: cfg.get("text_dim")?,
        ..ModelConfig::default()
    };
    m.validate()?;
    Ok(m)
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    let tc = TrainConfig {
        lr: cfg.get("lr")?,
        batch: cfg.get("batch")?,
        steps: cfg.get("steps")?,
        cond_drop: cfg.get("cond_drop")?,
        seed: cfg.get("seed")?,
        chunk: cfg.get("chunk")?,
    };
    tc.validate()?;
    Ok(tc)
}

fn task_params(cfg: &RunConfig) -> Result<TaskParams> {
    let tokens = match cfg.str("tokens") {
        "three" => TokenSet::Three,
        "two" => TokenSet::Two,
        other => return Err(CliError::Invalid(format!("tokens = `{other}`: expected three or two"))),
    };
    let star = match cfg.str("star") {
        "generate" => StarMode::Generate,
        "edit" => StarMode::Edit,
        other => return Err(CliError::Invalid(format!("star = `{other}`: expected generate or edit"))),
    };
    Ok(TaskParams {
        stride: cfg.get("stride")?,
        split: cfg.opt("split")?,
        tokens,
        star,
        context: cfg.get("context")?,
        ..TaskParams::default()
    })
}

fn sampler(cfg: &RunConfig, seed: u64) -> Result<SamplerConfig> {
    let s = SamplerConfig { steps: cfg.get("sample_steps")?, cfg_scale: cfg.get("cfg_scale")?, seed };
    s.validate()?;
    Ok(s)
}

fn tasks(cfg: &RunConfig) -> Result<Vec<TaskKind>> {
    cfg.list("tasks").iter().map(|t| t.parse().map_err(|e| CliError::Invalid(format!("tasks: {e}")))).collect()
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let out = PathBuf::from(cfg.required("out")?);
    cfg.write_echo(&out)?;
    Ok(out)
}

/// Dataset directory holding the records `kind` is compiled from.
fn set_for(kind: TaskKind) -> Result<&'static str> {
    match kind {
        TaskKind::ObstacleAvoid => Ok("obstacle"),
        TaskKind::Edit => Ok("edit"),
        TaskKind::Reaction => Ok("reaction"),
        TaskKind::Stylization => Err(CliError::Invalid("no stylization data is generated".into())),
        _ => Ok("trajectory"),
    }
}

fn load_set(data: &Path, set: &str) -> Result<Vec<DatasetRecord>> {
    Ok(read_dataset(&data.join(set))?)
}

fn load_checkpoint(cfg: &RunConfig) -> Result<(Model, ParamStore, NormStats)> {
    Ok(Checkpoint::load(Path::new(cfg.required("ckpt")?))?.into_model()?)
}

fn datagen(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let seed: u64 = cfg.get("seed")?;
    let template = match cfg.str("template") {
        "minimal" => TemplateMode::Minimal,
        "full" => TemplateMode::Full,
        other => return Err(CliError::Invalid(format!("template = `{other}`: expected minimal or full"))),
    };
    let dg = DatagenConfig { template, ..DatagenConfig::default() };
    let counts = |p: &str| -> Result<LevelCounts> {
        Ok(LevelCounts { l1: cfg.get(&format!("{p}_l1"))?, l2: cfg.get(&format!("{p}_l2"))?, l3: cfg.get(&format!("{p}_l3"))? })
    };
    let traj = generate_trajectory_dataset(counts("traj")?, seed, &dg)?;
    let obs = generate_obstacle_dataset(counts("obs")?, seed.wrapping_add(1), &dg)?;
    write_dataset(&out.join("trajectory"), &traj)?;
    write_dataset(&out.join("obstacle"), &obs)?;
    if !traj.is_empty() {
        write_dataset(&out.join("edit"), &generate_edit_pairs(&traj, seed.wrapping_add(2))?)?;
        write_dataset(&out.join("reaction"), &generate_reaction_pairs(&traj, seed.wrapping_add(3))?)?;
    }
    write_stats(&out.join("stats.json"), &dataset_stats(traj.iter().chain(&obs))?)?;
    println!("wrote {} trajectory and {} obstacle records to {}", traj.len(), obs.len(), out.display());
    Ok(())
}

fn pretrain(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let data = PathBuf::from(cfg.str("data"));
    let stats = read_stats(&data.join("stats.json"))?;
    let mut records = Vec::new();
    for set in cfg.list("sets") {
        records.extend(load_set(&data, &set)?);
    }
    let tc = train_config(cfg)?;
    let (model, mut store) = Model::init(model_config(cfg)?, tc.seed)?;
    let samples = pretrain_samples(&records, &stats)?;
    let curve = train(&model, &mut store, &samples, &tc, log_every(tc.steps))?;
    write_loss_csv(&out.join("loss.csv"), &curve)?;
    Checkpoint::new(&model, &store, &stats).save(&out.join("model.umoc"))?;
    println!("trained {} steps on {} records", tc.steps, records.len());
    Ok(())
}

fn log_every(steps: usize) -> impl FnMut(usize, f64) {
    let every = (steps / 20).max(1);
    move |s, l| {
        if s % every == 0 || s + 1 == steps {
            eprintln!("step {s:>6} loss {l:.5}");
        }
    }
}

fn fine_tune(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let (mut model, mut store, stats) = load_checkpoint(cfg)?;
    let arch: CondArch = cfg.get("arch")?;
    let kinds = tasks(cfg)?;
    let params = task_params(cfg)?;
    let data = PathBuf::from(cfg.str("data"));
    let mut sets: Vec<&str> = kinds.iter().map(|&k| set_for(k)).collect::<Result<_>>()?;
    sets.sort_unstable();
    sets.dedup();
    let mut records = Vec::new();
    for set in sets {
        records.extend(load_set(&data, set)?);
    }
    let mixture = TaskMixture::new(&records, &kinds, params, &stats)?;
    let tc = train_config(cfg)?;
    let curve = finetune(&mut model, &mut store, arch, &mixture, &tc, log_every(tc.steps))?;
    write_loss_csv(&out.join("loss.csv"), &curve)?;
    Checkpoint::new(&model, &store, &stats).save(&out.join("model.umoc"))?;
    println!("fine-tuned {arch} for {} steps", tc.steps);
    Ok(())
}

fn producer<'a>(cfg: &RunConfig, model: &'a Model, store: &'a ParamStore) -> Result<Producer<'a>> {
    match cfg.str("producer") {
        "model" => Ok(Producer::Model { model, store }),
        "inversion" => Ok(Producer::Inversion { model, store }),
        "ground_truth" => Ok(Producer::GroundTruth),
        other => Err(CliError::Invalid(format!("producer = `{other}`: expected model, inversion or ground_truth"))),
    }
}

fn sample(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let (model, store, stats) = load_checkpoint(cfg)?;
    let kind: TaskKind = cfg.get::<TaskKind>("task")?;
    let params = task_params(cfg)?;
    let seed: u64 = cfg.get("seed")?;
    let records = load_set(Path::new(cfg.str("data")), set_for(kind)?)?;
    let first: usize = cfg.get("record")?;
    let count: usize = cfg.get("count")?;
    let picked: Vec<&DatasetRecord> = records.iter().skip(first).filter(|r| applies(kind, r)).take(count).collect();
    if picked.is_empty() {
        return Err(CliError::Invalid(format!("no `{kind}` records at index {first}")));
    }
    let prod = producer(cfg, &model, &store)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, rec) in picked.into_iter().enumerate() {
        let item = compile_item(kind, rec, &params, &stats, &mut rng)?;
        let motion = produce(prod, &item, &stats, &sampler(cfg, seed.wrapping_add(i as u64))?)?;
        let path = out.join(format!("{kind}_{}.umom", rec.id));
        motion.save(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn write_report(out: &Path, r: &EvalReport) -> Result<()> {
    std::fs::write(out.join("report.txt"), r.to_table())?;
    std::fs::write(out.join("report.csv"), r.to_csv())?;
    print!("{}", r.to_table());
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let loaded = match cfg.str("producer") {
        "ground_truth" => None,
        _ => Some(load_checkpoint(cfg)?),
    };
    let stats = match &loaded {
        Some((_, _, st)) => st.clone(),
        None => read_stats(&Path::new(cfg.str("data")).join("stats.json"))?,
    };
    let prod = match &loaded {
        Some((model, store, _)) => producer(cfg, model, store)?,
        None => Producer::GroundTruth,
    };
    let params = task_params(cfg)?;
    let s = sampler(cfg, cfg.get("seed")?)?;
    let (offset, count): (usize, usize) = (cfg.get("offset")?, cfg.get("count")?);
    let mut rows = Vec::new();
    for kind in tasks(cfg)? {
        let records = load_set(Path::new(cfg.str("data")), set_for(kind)?)?;
        let end = (offset + count).min(records.len());
        let items = compile_items(&records[offset.min(end)..end], &[kind], &params, &stats, s.seed)?;
        if items.is_empty() {
            continue;
        }
        rows.extend(evaluate(prod, &items, &stats, &s, umo_nn::pipeline::token_variant(params.tokens))?.0);
    }
    write_report(&out, &report(rows, Vec::new())?)
}

fn ablate(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    match cfg.str("study") {
        "arch" => {
            let oc = OverheadConfig {
                frames: cfg.get("frames")?,
                text_rows: cfg.get("text_rows")?,
                steps: cfg.get("sample_steps")?,
                latency_runs: cfg.get("latency_runs")?,
            };
            let rows = overhead_report(&model_config(cfg)?, &oc)?;
            write_report(&out, &report(Vec::new(), rows)?)
        }
        "tokens" => {
            let (model, store, stats) = load_checkpoint(cfg)?;
            if model.cfg.arch.is_some() {
                return Err(CliError::Invalid("the token ablation starts from a context-free checkpoint".into()));
            }
            let records = load_set(Path::new(cfg.str("data")), "trajectory")?;
            let n_train: usize = cfg.get("train_count")?;
            let (offset, count): (usize, usize) = (cfg.get("offset")?, cfg.get("count")?);
            let end = (offset + count).min(records.len());
            let ac = AblationConfig {
                finetune: train_config(cfg)?,
                sampler: sampler(cfg, cfg.get("seed")?)?,
                ..AblationConfig::default()
            };
            let train_recs = &records[..n_train.min(records.len())];
            let r = token_ablation((&model, &store), &stats, train_recs, &records[offset.min(end)..end], &ac, |l| eprintln!("{l}"))?;
            write_report(&out, &r)
        }
        other => Err(CliError::Invalid(format!("study = `{other}`: expected arch or tokens"))),
    }
}
