//! Planar parameterized trajectories on the XZ ground plane.
//!
//! Every curve is parameterized by `t` in `[0, 1]`. Points are `(x, z)`.
//! Signed curvature is `(x' z'' - z' x'') / |P'|^3`; a positive value turns
//! toward the left normal `(-t_z, t_x)` of the tangent.

mod arclen;
mod generate;
mod obstacles;
mod peaks;

pub use arclen::ArcLengthTable;
pub use generate::{random_curve, CurveLimits, Level};
pub use obstacles::{place_obstacles, Obstacle, ObstacleAnchor, ObstacleScene, PlacementConfig};
pub use peaks::{detect_curvature_peaks, CurvaturePeak, PeakConfig};

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("degenerate tangent at t = {0}")]
    DegenerateTangent(f64),
    #[error("obstacle placement failed after {0} attempts")]
    PlacementFailed(usize),
    #[error("motion would need {0} frames (max {1})")]
    TooLong(usize, usize),
    #[error("invalid curve: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnDir {
    Cw,
    Ccw,
}

impl TurnDir {
    pub fn sign(self) -> f64 {
        match self {
            TurnDir::Ccw => 1.0,
            TurnDir::Cw => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TurnDir::Cw => "cw",
            TurnDir::Ccw => "ccw",
        }
    }
}

/// The five curve families, grouped in three complexity levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamCurve {
    Linear {
        start: Vec2,
        end: Vec2,
        /// Walking speed in m/s.
        speed: f64,
    },
    /// `c + r (cos theta, sin theta)` with `theta` sweeping `angle` radians
    /// from `start_angle` in direction `dir`.
    Arc {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        angle: f64,
        dir: TurnDir,
    },
    QuadBezier {
        p0: Vec2,
        p1: Vec2,
        p2: Vec2,
    },
    CubicBezier {
        p0: Vec2,
        p1: Vec2,
        p2: Vec2,
        p3: Vec2,
    },
    /// Chord from `start` to `end` plus `amplitude * sin(2 pi freq t)` along
    /// the chord's left normal.
    Sinusoid {
        start: Vec2,
        end: Vec2,
        amplitude: f64,
        freq: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveType {
    Linear,
    Arc,
    QuadBezier,
    CubicBezier,
    Sinusoidal,
}

impl CurveType {
    pub const ALL: [CurveType; 5] =
        [CurveType::Linear, CurveType::Arc, CurveType::QuadBezier, CurveType::CubicBezier, CurveType::Sinusoidal];

    pub fn tag(self) -> &'static str {
        match self {
            CurveType::Linear => "linear",
            CurveType::Arc => "arc",
            CurveType::QuadBezier => "quad_bezier",
            CurveType::CubicBezier => "cubic_bezier",
            CurveType::Sinusoidal => "sinusoidal",
        }
    }

    pub fn level(self) -> Level {
        match self {
            CurveType::Linear => Level::L1,
            CurveType::Arc => Level::L2,
            _ => Level::L3,
        }
    }
}

fn left_normal(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

impl ParamCurve {
    pub fn curve_type(&self) -> CurveType {
        match self {
            ParamCurve::Linear { .. } => CurveType::Linear,
            ParamCurve::Arc { .. } => CurveType::Arc,
            ParamCurve::QuadBezier { .. } => CurveType::QuadBezier,
            ParamCurve::CubicBezier { .. } => CurveType::CubicBezier,
            ParamCurve::Sinusoid { .. } => CurveType::Sinusoidal,
        }
    }

    pub fn level(&self) -> Level {
        self.curve_type().level()
    }

    /// Builds an arc from its minimal description: start, end, center, dir.
    /// The radius is taken from the start point; the sweep runs from the
    /// start angle to the end angle in `dir`.
    pub fn arc_from_points(start: Vec2, end: Vec2, center: Vec2, dir: TurnDir) -> Result<Self, CurveError> {
        let rs = start - center;
        let re = end - center;
        let radius = rs.norm();
        if radius < 1e-9 || re.norm() < 1e-9 {
            return Err(CurveError::Invalid("arc endpoint coincides with center".into()));
        }
        let a0 = rs.y.atan2(rs.x);
        let a1 = re.y.atan2(re.x);
        let mut sweep = (a1 - a0) * dir.sign();
        sweep = sweep.rem_euclid(TAU);
        if sweep < 1e-12 {
            sweep = TAU;
        }
        Ok(ParamCurve::Arc { center, radius, start_angle: a0, angle: sweep, dir })
    }

    fn arc_theta(start_angle: f64, angle: f64, dir: TurnDir, t: f64) -> f64 {
        start_angle + dir.sign() * angle * t
    }

    pub fn point(&self, t: f64) -> Vec2 {
        match *self {
            ParamCurve::Linear { start, end, .. } => start + (end - start) * t,
            ParamCurve::Arc { center, radius, start_angle, angle, dir } => {
                let th = Self::arc_theta(start_angle, angle, dir, t);
                center + Vec2::new(th.cos(), th.sin()) * radius
            }
            ParamCurve::QuadBezier { p0, p1, p2 } => {
                let u = 1.0 - t;
                p0 * (u * u) + p1 * (2.0 * u * t) + p2 * (t * t)
            }
            ParamCurve::CubicBezier { p0, p1, p2, p3 } => {
                let u = 1.0 - t;
                p0 * (u * u * u) + p1 * (3.0 * u * u * t) + p2 * (3.0 * u * t * t) + p3 * (t * t * t)
            }
            ParamCurve::Sinusoid { start, end, amplitude, freq } => {
                let chord = end - start;
                let n = left_normal(chord.normalize());
                start + chord * t + n * (amplitude * (TAU * freq * t).sin())
            }
        }
    }

    /// First derivative with respect to `t`.
    pub fn tangent(&self, t: f64) -> Vec2 {
        match *self {
            ParamCurve::Linear { start, end, .. } => end - start,
            ParamCurve::Arc { radius, start_angle, angle, dir, .. } => {
                let th = Self::arc_theta(start_angle, angle, dir, t);
                Vec2::new(-th.sin(), th.cos()) * (radius * angle * dir.sign())
            }
            ParamCurve::QuadBezier { p0, p1, p2 } => (p1 - p0) * (2.0 * (1.0 - t)) + (p2 - p1) * (2.0 * t),
            ParamCurve::CubicBezier { p0, p1, p2, p3 } => {
                let u = 1.0 - t;
                (p1 - p0) * (3.0 * u * u) + (p2 - p1) * (6.0 * u * t) + (p3 - p2) * (3.0 * t * t)
            }
            ParamCurve::Sinusoid { start, end, amplitude, freq } => {
                let chord = end - start;
                let n = left_normal(chord.normalize());
                let w = TAU * freq;
                chord + n * (amplitude * w * (w * t).cos())
            }
        }
    }

    /// Second derivative with respect to `t`.
    pub fn second_derivative(&self, t: f64) -> Vec2 {
        match *self {
            ParamCurve::Linear { .. } => Vec2::zeros(),
            ParamCurve::Arc { radius, start_angle, angle, dir, .. } => {
                let th = Self::arc_theta(start_angle, angle, dir, t);
                Vec2::new(th.cos(), th.sin()) * (-radius * angle * angle)
            }
            ParamCurve::QuadBezier { p0, p1, p2 } => (p2 - p1 * 2.0 + p0) * 2.0,
            ParamCurve::CubicBezier { p0, p1, p2, p3 } => {
                (p2 - p1 * 2.0 + p0) * (6.0 * (1.0 - t)) + (p3 - p2 * 2.0 + p1) * (6.0 * t)
            }
            ParamCurve::Sinusoid { start, end, amplitude, freq } => {
                let n = left_normal((end - start).normalize());
                let w = TAU * freq;
                n * (-amplitude * w * w * (w * t).sin())
            }
        }
    }

    pub fn start(&self) -> Vec2 {
        match *self {
            ParamCurve::Linear { start, .. } | ParamCurve::Sinusoid { start, .. } => start,
            ParamCurve::QuadBezier { p0, .. } | ParamCurve::CubicBezier { p0, .. } => p0,
            ParamCurve::Arc { .. } => self.point(0.0),
        }
    }

    pub fn end(&self) -> Vec2 {
        match *self {
            ParamCurve::Linear { end, .. } | ParamCurve::Sinusoid { end, .. } => end,
            ParamCurve::QuadBezier { p2, .. } => p2,
            ParamCurve::CubicBezier { p3, .. } => p3,
            ParamCurve::Arc { .. } => self.point(1.0),
        }
    }

    pub fn chord_len(&self) -> f64 {
        (self.end() - self.start()).norm()
    }

    /// Lateral offset of the quadratic control point from the chord,
    /// as a fraction of the chord length.
    pub fn offset_ratio(&self) -> Option<f64> {
        match *self {
            ParamCurve::QuadBezier { p0, p1, p2 } => {
                let chord = p2 - p0;
                let l2 = chord.norm_squared();
                (l2 > 0.0).then(|| cross(chord, p1 - p0).abs() / l2)
            }
            _ => None,
        }
    }

    /// `n >= 2` points at uniform parameter spacing, first = start, last = end.
    pub fn sample(&self, n: usize) -> Vec<Vec2> {
        assert!(n >= 2, "sample_curve needs at least two points");
        (0..n)
            .map(|i| {
                if i == 0 {
                    self.start()
                } else if i == n - 1 {
                    self.end()
                } else {
                    self.point(i as f64 / (n - 1) as f64)
                }
            })
            .collect()
    }

    /// Total arc length in meters. Closed form for lines and arcs,
    /// composite Gauss-Legendre quadrature otherwise.
    pub fn arc_length(&self) -> f64 {
        match *self {
            ParamCurve::Linear { start, end, .. } => (end - start).norm(),
            ParamCurve::Arc { radius, angle, .. } => radius * angle,
            _ => arclen::integrate_speed(self, 0.0, 1.0, 256),
        }
    }

    pub fn curvature(&self, t: f64) -> Result<f64, CurveError> {
        let d1 = self.tangent(t);
        let speed = d1.norm();
        if speed < 1e-8 {
            return Err(CurveError::DegenerateTangent(t));
        }
        Ok(cross(d1, self.second_derivative(t)) / (speed * speed * speed))
    }

    /// Signed curvature at `n >= 3` uniform parameters.
    pub fn curvature_profile(&self, n: usize) -> Result<Vec<f64>, CurveError> {
        assert!(n >= 3, "curvature profile needs at least three samples");
        (0..n).map(|i| self.curvature(i as f64 / (n - 1) as f64)).collect()
    }

    /// Unit normal pointing toward the inside of the turn at `t`, or the
    /// left normal where the curve is straight.
    pub fn inward_normal(&self, t: f64) -> Result<Vec2, CurveError> {
        let d1 = self.tangent(t);
        if d1.norm() < 1e-8 {
            return Err(CurveError::DegenerateTangent(t));
        }
        let n = left_normal(d1.normalize());
        let k = self.curvature(t)?;
        Ok(if k < 0.0 { -n } else { n })
    }

    /// Applies `p -> rot * (p - origin)` to every defining point.
    pub fn transformed(&self, origin: Vec2, rot_angle: f64) -> Self {
        let (s, c) = rot_angle.sin_cos();
        let rot = Matrix2::new(c, -s, s, c);
        let tf = |p: Vec2| rot * (p - origin);
        match *self {
            ParamCurve::Linear { start, end, speed } => ParamCurve::Linear { start: tf(start), end: tf(end), speed },
            ParamCurve::Arc { center, radius, start_angle, angle, dir } => ParamCurve::Arc {
                center: tf(center),
                radius,
                start_angle: wrap_angle(start_angle + rot_angle),
                angle,
                dir,
            },
            ParamCurve::QuadBezier { p0, p1, p2 } => ParamCurve::QuadBezier { p0: tf(p0), p1: tf(p1), p2: tf(p2) },
            ParamCurve::CubicBezier { p0, p1, p2, p3 } => {
                ParamCurve::CubicBezier { p0: tf(p0), p1: tf(p1), p2: tf(p2), p3: tf(p3) }
            }
            ParamCurve::Sinusoid { start, end, amplitude, freq } => {
                ParamCurve::Sinusoid { start: tf(start), end: tf(end), amplitude, freq }
            }
        }
    }

    /// The rigid transform `(origin, angle)` that canonicalizes this curve.
    pub fn canonical_transform(&self) -> Result<(Vec2, f64), CurveError> {
        let d = self.tangent(0.0);
        let len = d.norm();
        if len < 1e-8 {
            return Err(CurveError::DegenerateTangent(0.0));
        }
        // rotation by psi with cos psi = d_z/|d|, sin psi = d_x/|d| maps d onto +Z
        Ok((self.start(), (d.x / len).atan2(d.y / len)))
    }

    /// Translates the start to the origin and rotates about the vertical
    /// axis so the initial tangent points along +Z.
    pub fn canonicalize(&self) -> Result<Self, CurveError> {
        let (origin, angle) = self.canonical_transform()?;
        if angle == 0.0 && origin == Vec2::zeros() {
            return Ok(self.clone());
        }
        let mut c = self.transformed(origin, angle);
        // pin the defining start exactly on the origin
        match &mut c {
            ParamCurve::Linear { start, .. } | ParamCurve::Sinusoid { start, .. } => *start = Vec2::zeros(),
            ParamCurve::QuadBezier { p0, .. } | ParamCurve::CubicBezier { p0, .. } => *p0 = Vec2::zeros(),
            ParamCurve::Arc { .. } => {}
        }
        Ok(c)
    }

    pub fn is_finite(&self) -> bool {
        let pts: Vec<f64> = match *self {
            ParamCurve::Linear { start, end, speed } => vec![start.x, start.y, end.x, end.y, speed],
            ParamCurve::Arc { center, radius, start_angle, angle, .. } => {
                vec![center.x, center.y, radius, start_angle, angle]
            }
            ParamCurve::QuadBezier { p0, p1, p2 } => vec![p0.x, p0.y, p1.x, p1.y, p2.x, p2.y],
            ParamCurve::CubicBezier { p0, p1, p2, p3 } => {
                vec![p0.x, p0.y, p1.x, p1.y, p2.x, p2.y, p3.x, p3.y]
            }
            ParamCurve::Sinusoid { start, end, amplitude, freq } => {
                vec![start.x, start.y, end.x, end.y, amplitude, freq]
            }
        };
        pts.iter().all(|v| v.is_finite())
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}
