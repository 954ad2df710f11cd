//! Joint-position errors, trajectory error and obstacle success rate, plus
//! the evaluation report container.

use std::fmt::Write as _;

use thiserror::Error;

use crate::curves::{ArcLengthTable, ObstacleScene, ParamCurve};
use crate::motion::{MotionSequence, NUM_JOINTS};
use crate::tasks::{FramePlan, MetaOp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("sequence lengths differ: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("the plan preserves no frames")]
    NoPreservedFrames,
    #[error("{0} predictions for {1} scenes")]
    CountMismatch(usize, usize),
}

fn frame_error(a: &MotionSequence, b: &MotionSequence, i: usize) -> f64 {
    (0..NUM_JOINTS).map(|j| (a.joint_position(i, j) - b.joint_position(i, j)).norm()).sum::<f64>()
}

/// Mean per-joint position error in centimeters over all frames.
pub fn mpjpe(pred: &MotionSequence, gt: &MotionSequence) -> Result<f64, MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::ShapeMismatch(pred.len(), gt.len()));
    }
    let total: f64 = (0..pred.len()).map(|i| frame_error(pred, gt, i)).sum();
    Ok(100.0 * total / (pred.len() * NUM_JOINTS) as f64)
}

/// MPJPE restricted to the plan's preserve frames, against the source.
pub fn p_mpjpe(pred: &MotionSequence, plan: &FramePlan, source: &MotionSequence) -> Result<f64, MetricError> {
    if pred.len() != plan.len() {
        return Err(MetricError::ShapeMismatch(pred.len(), plan.len()));
    }
    let frames: Vec<usize> = (0..plan.len()).filter(|&i| plan.ops[i] == MetaOp::P).collect();
    if frames.is_empty() {
        return Err(MetricError::NoPreservedFrames);
    }
    if let Some(&last) = frames.last() {
        if last >= source.len() {
            return Err(MetricError::ShapeMismatch(source.len(), plan.len()));
        }
    }
    let total: f64 = frames.iter().map(|&i| frame_error(pred, source, i)).sum();
    Ok(100.0 * total / (frames.len() * NUM_JOINTS) as f64)
}

/// Mean planar pelvis distance (cm) to the curve point at the same
/// arc-length fraction `i / (T - 1)`.
pub fn traj_error(pred: &MotionSequence, curve: &ParamCurve) -> f64 {
    let table = ArcLengthTable::new(curve);
    let t = pred.len();
    let total: f64 = (0..t)
        .map(|i| {
            let frac = if t > 1 { i as f64 / (t - 1) as f64 } else { 0.0 };
            (pred.pelvis_xz(i) - table.point_at(frac * table.total())).norm()
        })
        .sum();
    100.0 * total / t as f64
}

/// True when no frame puts the pelvis strictly inside a safety radius.
pub fn avoids_obstacles(pred: &MotionSequence, scene: &ObstacleScene) -> bool {
    (0..pred.len()).all(|i| {
        let p = pred.pelvis_xz(i);
        scene.obstacles.iter().all(|o| (p - o.center).norm() >= o.safety_radius)
    })
}

/// Fraction of runs that never enter an obstacle.
pub fn success_rate(preds: &[MotionSequence], scenes: &[ObstacleScene]) -> Result<f64, MetricError> {
    if preds.len() != scenes.len() {
        return Err(MetricError::CountMismatch(preds.len(), scenes.len()));
    }
    if preds.is_empty() {
        return Ok(1.0);
    }
    let ok = preds.iter().zip(scenes).filter(|(p, s)| avoids_obstacles(p, s)).count();
    Ok(ok as f64 / preds.len() as f64)
}

/// Mean / median / max of a latency sample, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencyStats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
        Self { mean: s.iter().sum::<f64>() / n as f64, median, max: s[n - 1] }
    }
}

/// One row of per-task results. Metrics that do not apply are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskRow {
    pub task: String,
    pub variant: String,
    pub count: usize,
    pub mpjpe: Option<f64>,
    pub p_mpjpe: Option<f64>,
    pub traj_error: Option<f64>,
    pub success: Option<f64>,
    pub latency: LatencyStats,
}

/// Conditioning overhead relative to the context-free base model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchRow {
    pub arch: String,
    pub delta_params: u64,
    pub delta_flops: u64,
    pub delta_latency: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub tasks: Vec<TaskRow>,
    pub archs: Vec<ArchRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl EvalReport {
    /// Checks every reported value is finite, non-negative and success in [0, 1].
    pub fn is_well_formed(&self) -> bool {
        let ok = |v: Option<f64>| v.is_none_or(|x| x.is_finite() && x >= 0.0);
        self.tasks.iter().all(|r| {
            ok(r.mpjpe)
                && ok(r.p_mpjpe)
                && ok(r.traj_error)
                && r.success.is_none_or(|s| (0.0..=1.0).contains(&s))
                && r.latency.mean.is_finite()
        }) && self.archs.iter().all(|a| a.delta_latency.is_finite())
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if !self.tasks.is_empty() {
            let _ = writeln!(
                out,
                "{:<16} {:<10} {:>5} {:>12} {:>12} {:>12} {:>8} {:>10}",
                "task", "variant", "n", "MPJPE(cm)", "P-MPJPE(cm)", "Traj(cm)", "Success", "Lat(s)"
            );
            for r in &self.tasks {
                let _ = writeln!(
                    out,
                    "{:<16} {:<10} {:>5} {:>12} {:>12} {:>12} {:>8} {:>10.4}",
                    r.task,
                    r.variant,
                    r.count,
                    opt(r.mpjpe),
                    opt(r.p_mpjpe),
                    opt(r.traj_error),
                    opt(r.success),
                    r.latency.mean
                );
            }
        }
        if !self.archs.is_empty() {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "{:<16} {:>14} {:>18} {:>12}", "arch", "dParams", "dFLOPs", "dLat(s)");
            for a in &self.archs {
                let _ = writeln!(
                    out,
                    "{:<16} {:>14} {:>18} {:>12.4}",
                    a.arch, a.delta_params, a.delta_flops, a.delta_latency
                );
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,name,variant,count,mpjpe_cm,p_mpjpe_cm,traj_error_cm,success,latency_mean_s,latency_median_s,delta_params,delta_flops,delta_latency_s\n");
        let c = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
        for r in &self.tasks {
            let _ = writeln!(
                out,
                "task,{},{},{},{},{},{},{},{},{},,,",
                r.task,
                r.variant,
                r.count,
                c(r.mpjpe),
                c(r.p_mpjpe),
                c(r.traj_error),
                c(r.success),
                r.latency.mean,
                r.latency.median
            );
        }
        for a in &self.archs {
            let _ = writeln!(out, "arch,{},,,,,,,,,{},{},{}", a.arch, a.delta_params, a.delta_flops, a.delta_latency);
        }
        out
    }
}
