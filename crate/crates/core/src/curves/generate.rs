use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ParamCurve, TurnDir, Vec2};

/// Trajectory complexity level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::L1, Level::L2, Level::L3];

    pub fn number(self) -> u8 {
        match self {
            Level::L1 => 1,
            Level::L2 => 2,
            Level::L3 => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Level::L1),
            2 => Some(Level::L2),
            3 => Some(Level::L3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveLimits {
    pub arc_length: (f64, f64),
    pub speed: (f64, f64),
    pub max_frames: usize,
    pub fps: f64,
    pub min_arc_radius: f64,
    pub arc_angle: (f64, f64),
    pub quad_offset_ratio: (f64, f64),
}

impl Default for CurveLimits {
    fn default() -> Self {
        Self {
            arc_length: (1.0, 8.0),
            speed: (1.0, 1.6),
            max_frames: 190,
            fps: 30.0,
            min_arc_radius: 2.0,
            arc_angle: (FRAC_PI_2, PI),
            quad_offset_ratio: (0.3, 0.6),
        }
    }
}

impl CurveLimits {
    /// Frame count for walking `length` meters at `speed`.
    pub fn frames_for(&self, length: f64, speed: f64) -> usize {
        ((length * self.fps / speed).round() as usize).max(2)
    }

    /// Longest path that fits in `max_frames` at `speed`.
    pub fn max_length_at(&self, speed: f64) -> f64 {
        (self.max_frames as f64 - 0.5) * speed / self.fps
    }

    pub fn admits(&self, curve: &ParamCurve, speed: f64) -> bool {
        let len = curve.arc_length();
        if !(self.arc_length.0..=self.arc_length.1).contains(&len) {
            return false;
        }
        if self.frames_for(len, speed) > self.max_frames {
            return false;
        }
        match *curve {
            ParamCurve::Arc { radius, angle, .. } => {
                radius >= self.min_arc_radius && (self.arc_angle.0..=self.arc_angle.1).contains(&angle)
            }
            ParamCurve::QuadBezier { .. } => curve
                .offset_ratio()
                .is_some_and(|r| (self.quad_offset_ratio.0..=self.quad_offset_ratio.1).contains(&r)),
            _ => true,
        }
    }
}

fn random_dir(rng: &mut impl Rng) -> TurnDir {
    if rng.random_bool(0.5) {
        TurnDir::Ccw
    } else {
        TurnDir::Cw
    }
}

fn sign(rng: &mut impl Rng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// One raw (non-canonical) curve of the requested level.
fn raw_curve(level: Level, limits: &CurveLimits, speed: f64, rng: &mut impl Rng) -> ParamCurve {
    let max_len = limits.max_length_at(speed).min(limits.arc_length.1);
    let origin = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    let heading = rng.random_range(-PI..PI);
    let dir_vec = Vec2::new(heading.cos(), heading.sin());
    let normal = Vec2::new(-dir_vec.y, dir_vec.x);
    match level {
        Level::L1 => {
            let len = rng.random_range(limits.arc_length.0..=max_len);
            ParamCurve::Linear { start: origin, end: origin + dir_vec * len, speed }
        }
        Level::L2 => {
            let angle = rng.random_range(limits.arc_angle.0..=limits.arc_angle.1);
            let r_max = (max_len / angle).max(limits.min_arc_radius);
            let radius = rng.random_range(limits.min_arc_radius..=r_max);
            ParamCurve::Arc {
                center: origin,
                radius,
                start_angle: heading,
                angle,
                dir: random_dir(rng),
            }
        }
        Level::L3 => {
            // chord shorter than the budget; the walk is longer than the chord
            let chord = rng.random_range(1.0..=(0.8 * max_len).max(1.0));
            let p0 = origin;
            let p_end = origin + dir_vec * chord;
            match rng.random_range(0..3) {
                0 => {
                    let along = rng.random_range(0.3..0.7);
                    let ratio = rng.random_range(limits.quad_offset_ratio.0..=limits.quad_offset_ratio.1);
                    let p1 = p0 + dir_vec * (along * chord) + normal * (sign(rng) * ratio * chord);
                    ParamCurve::QuadBezier { p0, p1, p2: p_end }
                }
                1 => {
                    // S shape: the two inner control points on opposite sides
                    let s = sign(rng);
                    let u1 = rng.random_range(0.2..0.45);
                    let u2 = rng.random_range(0.55..0.8);
                    let o1 = rng.random_range(0.3..0.6);
                    let o2 = rng.random_range(0.3..0.6);
                    let p1 = p0 + dir_vec * (u1 * chord) + normal * (s * o1 * chord);
                    let p2 = p0 + dir_vec * (u2 * chord) - normal * (s * o2 * chord);
                    ParamCurve::CubicBezier { p0, p1, p2, p3: p_end }
                }
                _ => {
                    let freq = [0.5, 1.0, 1.5, 2.0][rng.random_range(0..4)];
                    let amplitude = rng.random_range(0.2..0.6) * sign(rng);
                    ParamCurve::Sinusoid { start: p0, end: p_end, amplitude, freq }
                }
            }
        }
    }
}

/// Samples a canonical curve of `level` together with its walking speed,
/// rejecting candidates outside `limits`. Level 3 draws the three inflection
/// families with equal probability.
pub fn random_curve(level: Level, limits: &CurveLimits, rng: &mut impl Rng) -> (ParamCurve, f64) {
    loop {
        let speed = rng.random_range(limits.speed.0..=limits.speed.1);
        let raw = raw_curve(level, limits, speed, rng);
        let Ok(curve) = raw.canonicalize() else { continue };
        // the arc's start angle is a free phase; keep it in a tidy range
        let curve = match curve {
            ParamCurve::Arc { center, radius, start_angle, angle, dir } => {
                ParamCurve::Arc { center, radius, start_angle: start_angle.rem_euclid(TAU), angle, dir }
            }
            c => c,
        };
        if limits.admits(&curve, speed) {
            return (curve, speed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::CurveType;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    #[test]
    fn generated_curves_respect_limits() {
        let limits = CurveLimits::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut types = HashMap::new();
        for level in Level::ALL {
            for _ in 0..300 {
                let (c, speed) = random_curve(level, &limits, &mut rng);
                assert_eq!(c.level(), level);
                assert!(c.start().norm() < 1e-9);
                let d = c.tangent(0.0).normalize();
                assert!(d.x.abs() < 1e-9 && d.y > 0.0);
                let len = c.arc_length();
                assert!((1.0..=8.0).contains(&len));
                assert!(limits.frames_for(len, speed) <= 190);
                if let ParamCurve::Arc { radius, angle, .. } = c {
                    assert!(radius >= 2.0 && (FRAC_PI_2..=PI).contains(&angle));
                }
                if let Some(r) = c.offset_ratio() {
                    assert!((0.3..=0.6).contains(&r));
                }
                *types.entry(c.curve_type()).or_insert(0usize) += 1;
            }
        }
        for t in [CurveType::QuadBezier, CurveType::CubicBezier, CurveType::Sinusoidal] {
            let n = types[&t];
            assert!((60..=140).contains(&n), "{t:?}: {n}");
        }
    }
}
