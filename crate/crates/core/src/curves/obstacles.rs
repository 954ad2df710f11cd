use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{detect_curvature_peaks, CurveError, Level, ParamCurve, PeakConfig, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec2,
    pub safety_radius: f64,
}

/// Where an obstacle was anchored on the curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleAnchor {
    /// Curve parameter of the anchor sample.
    pub t: f64,
    /// Signed curvature of the peak the obstacle explains, or `None` for
    /// the straight-line fallback.
    pub peak_curvature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleScene {
    pub curve: ParamCurve,
    pub obstacles: Vec<Obstacle>,
    pub anchors: Vec<ObstacleAnchor>,
    pub start: Vec2,
    pub goal: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementConfig {
    pub safety_radius: (f64, f64),
    /// Extra displacement beyond the safety radius.
    pub margin: (f64, f64),
    /// Required clearance beyond the safety radius, checked on dense samples.
    pub clearance_buffer: f64,
    pub profile_samples: usize,
    pub clearance_samples: usize,
    pub max_attempts: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            safety_radius: (0.3, 0.5),
            margin: (0.1, 0.5),
            clearance_buffer: 0.05,
            profile_samples: 200,
            clearance_samples: 10_000,
            max_attempts: 100,
        }
    }
}

impl ObstacleScene {
    /// Minimum over dense curve samples of the distance to the obstacle
    /// center, minus its safety radius.
    pub fn clearance(&self, obstacle: &Obstacle, samples: usize) -> f64 {
        min_distance(&self.curve, obstacle.center, samples) - obstacle.safety_radius
    }
}

fn min_distance(curve: &ParamCurve, p: Vec2, samples: usize) -> f64 {
    (0..samples)
        .map(|i| (curve.point(i as f64 / (samples - 1) as f64) - p).norm())
        .fold(f64::INFINITY, f64::min)
}

fn obstacle_count(level: Level, rng: &mut impl Rng) -> usize {
    match level {
        Level::L1 | Level::L2 => rng.random_range(1..=3),
        Level::L3 => rng.random_range(3..=5),
    }
}

/// Curvature-driven obstacle placement on the inner side of turns.
///
/// Each obstacle is anchored at a sample inside the high-curvature region
/// around a detected peak (peaks are used strongest first, cycling when
/// there are more obstacles than peaks) and displaced along the inward
/// normal. Curves without peaks fall back to random positions beside the
/// path. Candidates that violate clearance against the dense curve, or that
/// overlap an earlier obstacle, are rejected.
pub fn place_obstacles(
    curve: &ParamCurve,
    level: Level,
    cfg: &PlacementConfig,
    rng: &mut impl Rng,
) -> Result<ObstacleScene, CurveError> {
    let count = obstacle_count(level, rng);
    let n = cfg.profile_samples;
    let profile = curve.curvature_profile(n)?;
    let peaks = detect_curvature_peaks(&profile, &PeakConfig::default());
    let t_of = |i: usize| i as f64 / (n - 1) as f64;

    let mut obstacles: Vec<Obstacle> = Vec::with_capacity(count);
    let mut anchors = Vec::with_capacity(count);
    for k in 0..count {
        let mut placed = false;
        for _ in 0..cfg.max_attempts {
            let r = rng.random_range(cfg.safety_radius.0..=cfg.safety_radius.1);
            let offset = r + rng.random_range(cfg.margin.0..=cfg.margin.1);
            let (t, normal, peak_curvature) = if peaks.is_empty() {
                let t = rng.random_range(0.1..0.9);
                let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let d = curve.tangent(t).normalize();
                (t, Vec2::new(-d.y, d.x) * side, None)
            } else {
                let peak = peaks[k % peaks.len()];
                // high-curvature region: contiguous same-sign samples with
                // |kappa| at least half the peak value
                let half = 0.5 * peak.curvature.abs();
                let inside = |i: usize| profile[i].signum() == peak.curvature.signum() && profile[i].abs() >= half;
                let mut lo = peak.index;
                while lo > 0 && inside(lo - 1) {
                    lo -= 1;
                }
                let mut hi = peak.index;
                while hi + 1 < n && inside(hi + 1) {
                    hi += 1;
                }
                let idx = rng.random_range(lo..=hi);
                let t = t_of(idx);
                (t, curve.inward_normal(t)?, Some(peak.curvature))
            };
            let anchor_point = curve.point(t);
            let center = anchor_point + normal * offset;
            let ob = Obstacle { center, safety_radius: r };
            if min_distance(curve, center, cfg.clearance_samples) < r + cfg.clearance_buffer {
                continue;
            }
            if obstacles.iter().any(|o| (o.center - center).norm() < o.safety_radius + r) {
                continue;
            }
            obstacles.push(ob);
            anchors.push(ObstacleAnchor { t, peak_curvature });
            placed = true;
            break;
        }
        if !placed {
            return Err(CurveError::PlacementFailed(cfg.max_attempts));
        }
    }
    Ok(ObstacleScene { curve: curve.clone(), obstacles, anchors, start: curve.start(), goal: curve.end() })
}
