//! Procedural datasets: trajectory following, obstacle avoidance, edit
//! pairs and reaction pairs.
//!
//! On disk a dataset is a directory holding `records.jsonl` (one JSON
//! object per record, see [`RecordIndex`]) and a `motions/` directory of
//! motion files named `<id>.src.umom` / `<id>.tgt.umom`.

use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curves::{
    place_obstacles, random_curve, CurveError, CurveLimits, Level, ObstacleScene, ParamCurve, PlacementConfig,
};
use crate::motion::{compute_stats, write_motion, MotionError, MotionSequence, NormStats};
use crate::prompt::{serialize_spatial, serialize_trajectory, TemplateMode};
use crate::synth::{reaction_follower, synthesize_frames, synthesize_motion, EditKind, GaitParams};
use crate::tasks::TaskKind;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("record {index}: {source}")]
    Generation { index: usize, source: CurveError },
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("records.jsonl line {line}: {msg}")]
    BadIndex { line: usize, msg: String },
    #[error("cannot derive pairs from an empty corpus")]
    EmptyCorpus,
}

/// Records per complexity level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub l1: usize,
    pub l2: usize,
    pub l3: usize,
}

impl LevelCounts {
    pub const TRAJECTORY: LevelCounts = LevelCounts { l1: 200, l2: 800, l3: 1000 };
    pub const OBSTACLE: LevelCounts = LevelCounts { l1: 100, l2: 900, l3: 1000 };

    pub fn total(&self) -> usize {
        self.l1 + self.l2 + self.l3
    }

    pub fn level_of(&self, index: usize) -> Level {
        if index < self.l1 {
            Level::L1
        } else if index < self.l1 + self.l2 {
            Level::L2
        } else {
            Level::L3
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatagenConfig {
    pub limits: CurveLimits,
    pub placement: PlacementConfig,
    pub gait: GaitParams,
    pub template: TemplateMode,
    /// Curve resamples per record before giving up.
    pub max_retries: usize,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            limits: CurveLimits::default(),
            placement: PlacementConfig::default(),
            gait: GaitParams::default(),
            template: TemplateMode::Minimal,
            max_retries: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub kind: TaskKind,
    pub level: Option<Level>,
    pub source: Option<MotionSequence>,
    pub target: MotionSequence,
    pub prompt: String,
    pub curve: Option<ParamCurve>,
    pub scene: Option<ObstacleScene>,
    pub speed: Option<f64>,
    pub edit: Option<EditKind>,
    /// Stream id of the record's private generator.
    pub seed: u64,
}

/// Dataset tags keep the per-record generator streams of different
/// datasets disjoint.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Trajectory = 1,
    Obstacle = 2,
    Edit = 3,
    Reaction = 4,
}

/// Generator for record `index`, independent of generation order.
fn record_rng(seed: u64, stream: Stream, index: usize) -> (ChaCha8Rng, u64) {
    let id = ((stream as u64) << 32) | index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    (rng, id)
}

/// Straight walk between the curve's endpoints with `frames` frames.
fn straight_source(curve: &ParamCurve, speed: f64, frames: usize, gait: &GaitParams) -> MotionSequence {
    let line = ParamCurve::Linear { start: curve.start(), end: curve.end(), speed };
    synthesize_frames(&line, frames, gait)
}

fn walk_record(
    level: Level,
    cfg: &DatagenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ParamCurve, f64, MotionSequence, MotionSequence), CurveError> {
    let (curve, speed) = random_curve(level, &cfg.limits, rng);
    let target = synthesize_motion(&curve, speed, &cfg.limits, &cfg.gait)?;
    let source = straight_source(&curve, speed, target.len(), &cfg.gait);
    Ok((curve, speed, source, target))
}

pub fn generate_trajectory_dataset(
    counts: LevelCounts,
    seed: u64,
    cfg: &DatagenConfig,
) -> Result<Vec<DatasetRecord>, DatasetError> {
    (0..counts.total())
        .into_par_iter()
        .map(|i| {
            let level = counts.level_of(i);
            let (mut rng, stream) = record_rng(seed, Stream::Trajectory, i);
            let mut last = CurveError::PlacementFailed(0);
            for _ in 0..cfg.max_retries {
                match walk_record(level, cfg, &mut rng) {
                    Ok((curve, speed, source, target)) => {
                        return Ok(DatasetRecord {
                            id: format!("traj_{i:05}"),
                            kind: TaskKind::TrajFollow,
                            level: Some(level),
                            prompt: serialize_trajectory(&curve, cfg.template),
                            source: Some(source),
                            target,
                            curve: Some(curve),
                            scene: None,
                            speed: Some(speed),
                            edit: None,
                            seed: stream,
                        })
                    }
                    Err(e) => last = e,
                }
            }
            Err(DatasetError::Generation { index: i, source: last })
        })
        .collect()
}

pub fn generate_obstacle_dataset(
    counts: LevelCounts,
    seed: u64,
    cfg: &DatagenConfig,
) -> Result<Vec<DatasetRecord>, DatasetError> {
    (0..counts.total())
        .into_par_iter()
        .map(|i| {
            let level = counts.level_of(i);
            let (mut rng, stream) = record_rng(seed, Stream::Obstacle, i);
            let mut last = CurveError::PlacementFailed(0);
            for _ in 0..cfg.max_retries {
                let attempt = walk_record(level, cfg, &mut rng).and_then(|(curve, speed, source, target)| {
                    let scene = place_obstacles(&curve, level, &cfg.placement, &mut rng)?;
                    Ok((curve, speed, source, target, scene))
                });
                match attempt {
                    Ok((curve, speed, source, target, scene)) => {
                        return Ok(DatasetRecord {
                            id: format!("obst_{i:05}"),
                            kind: TaskKind::ObstacleAvoid,
                            level: Some(level),
                            prompt: serialize_spatial(&scene),
                            source: Some(source),
                            target,
                            curve: Some(curve),
                            scene: Some(scene),
                            speed: Some(speed),
                            edit: None,
                            seed: stream,
                        })
                    }
                    Err(e) => last = e,
                }
            }
            Err(DatasetError::Generation { index: i, source: last })
        })
        .collect()
}

/// One edit per corpus motion: speed-up x1.5, mirror, or amplitude scaling,
/// chosen uniformly.
pub fn generate_edit_pairs(corpus: &[DatasetRecord], seed: u64) -> Result<Vec<DatasetRecord>, DatasetError> {
    if corpus.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    Ok(corpus
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let (mut rng, stream) = record_rng(seed, Stream::Edit, i);
            let edit = match rng.random_range(0..3) {
                0 => EditKind::SpeedUp { factor: 1.5 },
                1 => EditKind::Mirror,
                _ => EditKind::Amplitude { scale: if rng.random_bool(0.5) { 1.4 } else { 0.6 } },
            };
            DatasetRecord {
                id: format!("edit_{i:05}"),
                kind: TaskKind::Edit,
                level: rec.level,
                source: Some(rec.target.clone()),
                target: edit.apply(&rec.target),
                prompt: edit.instruction().to_string(),
                curve: None,
                scene: None,
                speed: None,
                edit: Some(edit),
                seed: stream,
            }
        })
        .collect())
}

pub const REACTION_PROMPT: &str = "A person walks behind the other person.";

/// Actor/follower pairs: the follower trails the actor by a fixed delay
/// and lateral offset.
pub fn generate_reaction_pairs(corpus: &[DatasetRecord], seed: u64) -> Result<Vec<DatasetRecord>, DatasetError> {
    if corpus.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    Ok(corpus
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let (_, stream) = record_rng(seed, Stream::Reaction, i);
            DatasetRecord {
                id: format!("react_{i:05}"),
                kind: TaskKind::Reaction,
                level: rec.level,
                source: Some(rec.target.clone()),
                target: reaction_follower(&rec.target),
                prompt: REACTION_PROMPT.to_string(),
                curve: None,
                scene: None,
                speed: None,
                edit: None,
                seed: stream,
            }
        })
        .collect())
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordIndex {
    pub id: String,
    pub kind: TaskKind,
    pub level: Option<u8>,
    pub prompt: String,
    /// Paths relative to the dataset directory.
    pub source: Option<String>,
    pub target: String,
    pub frames: usize,
    pub speed: Option<f64>,
    pub curve: Option<ParamCurve>,
    pub scene: Option<ObstacleScene>,
    pub edit: Option<EditKind>,
    pub seed: u64,
}

impl RecordIndex {
    pub fn of(rec: &DatasetRecord) -> Self {
        Self {
            id: rec.id.clone(),
            kind: rec.kind,
            level: rec.level.map(Level::number),
            prompt: rec.prompt.clone(),
            source: rec.source.as_ref().map(|_| format!("motions/{}.src.umom", rec.id)),
            target: format!("motions/{}.tgt.umom", rec.id),
            frames: rec.target.len(),
            speed: rec.speed,
            curve: rec.curve.clone(),
            scene: rec.scene.clone(),
            edit: rec.edit,
            seed: rec.seed,
        }
    }
}

/// SHA-256 over the index lines and motion bytes, as they would be written.
pub fn fingerprint(records: &[DatasetRecord]) -> Result<String, DatasetError> {
    let mut h = Sha256::new();
    for rec in records {
        let line = serde_json::to_string(&RecordIndex::of(rec)).expect("plain data");
        h.update(line.as_bytes());
        let mut buf = Vec::new();
        if let Some(src) = &rec.source {
            write_motion(&mut buf, src)?;
        }
        write_motion(&mut buf, &rec.target)?;
        h.update(&buf);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn write_dataset(dir: &Path, records: &[DatasetRecord]) -> Result<(), DatasetError> {
    fs::create_dir_all(dir.join("motions"))?;
    let mut index = BufWriter::new(fs::File::create(dir.join("records.jsonl"))?);
    for rec in records {
        let entry = RecordIndex::of(rec);
        if let (Some(src), Some(path)) = (&rec.source, &entry.source) {
            src.save(dir.join(path))?;
        }
        rec.target.save(dir.join(&entry.target))?;
        writeln!(index, "{}", serde_json::to_string(&entry).expect("plain data"))?;
    }
    index.flush()?;
    Ok(())
}

pub fn read_index(dir: &Path) -> Result<Vec<RecordIndex>, DatasetError> {
    let f = std::io::BufReader::new(fs::File::open(dir.join("records.jsonl"))?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: RecordIndex =
            serde_json::from_str(&line).map_err(|e| DatasetError::BadIndex { line: n + 1, msg: e.to_string() })?;
        out.push(entry);
    }
    Ok(out)
}

pub fn read_dataset(dir: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    read_index(dir)?
        .into_iter()
        .map(|e| {
            let load = |p: &str| -> Result<MotionSequence, DatasetError> {
                Ok(MotionSequence::load(PathBuf::from(dir).join(p))?)
            };
            Ok(DatasetRecord {
                source: e.source.as_deref().map(load).transpose()?,
                target: load(&e.target)?,
                level: e.level.and_then(Level::from_number),
                id: e.id,
                kind: e.kind,
                prompt: e.prompt,
                curve: e.curve,
                scene: e.scene,
                speed: e.speed,
                edit: e.edit,
                seed: e.seed,
            })
        })
        .collect()
}

/// Normalization statistics over every target motion.
pub fn dataset_stats<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> Result<NormStats, DatasetError> {
    let corpus: Vec<MotionSequence> = records.into_iter().map(|r| r.target.clone()).collect();
    Ok(compute_stats(&corpus)?)
}

pub fn write_stats(path: &Path, stats: &NormStats) -> Result<(), DatasetError> {
    fs::write(path, serde_json::to_string_pretty(stats).expect("plain data"))?;
    Ok(())
}

pub fn read_stats(path: &Path) -> Result<NormStats, DatasetError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| DatasetError::BadIndex { line: 0, msg: e.to_string() })
}
