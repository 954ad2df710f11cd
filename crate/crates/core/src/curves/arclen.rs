use super::{ParamCurve, Vec2};

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gl_panel(c: &ParamCurve, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL_NODES.iter().zip(GL_WEIGHTS).map(|(x, w)| w * c.tangent(mid + half * x).norm()).sum::<f64>() * half
}

/// Integral of `|P'(t)|` over `[a, b]` with `panels` Gauss-Legendre panels.
pub(crate) fn integrate_speed(c: &ParamCurve, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels).map(|i| gl_panel(c, a + h * i as f64, a + h * (i + 1) as f64)).sum()
}

/// Cumulative arc length over a uniform parameter grid, used to map a
/// traveled distance back to the curve parameter.
#[derive(Debug, Clone)]
pub struct ArcLengthTable {
    curve: ParamCurve,
    cumulative: Vec<f64>,
}

impl ArcLengthTable {
    pub fn new(curve: &ParamCurve) -> Self {
        let panels = match curve {
            ParamCurve::Linear { .. } | ParamCurve::Arc { .. } => 1,
            _ => 2048,
        };
        let mut cumulative = Vec::with_capacity(panels + 1);
        cumulative.push(0.0);
        let h = 1.0 / panels as f64;
        let mut acc = 0.0;
        for i in 0..panels {
            acc += match curve {
                ParamCurve::Linear { .. } | ParamCurve::Arc { .. } => curve.arc_length(),
                _ => gl_panel(curve, h * i as f64, h * (i + 1) as f64),
            };
            cumulative.push(acc);
        }
        Self { curve: curve.clone(), cumulative }
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn curve(&self) -> &ParamCurve {
        &self.curve
    }

    /// Curve parameter at traveled distance `s` (clamped to `[0, total]`).
    pub fn param_at(&self, s: f64) -> f64 {
        let total = self.total();
        if s <= 0.0 {
            return 0.0;
        }
        if s >= total {
            return 1.0;
        }
        let panels = self.cumulative.len() - 1;
        if panels == 1 {
            // constant speed
            return s / total;
        }
        let k = self.cumulative.partition_point(|&c| c <= s).saturating_sub(1).min(panels - 1);
        let h = 1.0 / panels as f64;
        let (lo, hi) = (h * k as f64, h * (k + 1) as f64);
        let base = self.cumulative[k];
        let target = s - base;
        // safeguarded Newton on F(t) = int_lo^t |P'| - target
        let (mut a, mut b) = (lo, hi);
        let seg = self.cumulative[k + 1] - base;
        let mut t = lo + (hi - lo) * (target / seg).clamp(0.0, 1.0);
        for _ in 0..60 {
            let f = gl_panel(&self.curve, lo, t) - target;
            if f.abs() < 1e-13 {
                break;
            }
            if f > 0.0 {
                b = t;
            } else {
                a = t;
            }
            let d = self.curve.tangent(t).norm();
            let newton = t - f / d;
            t = if d > 1e-12 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        }
        t
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        self.curve.point(self.param_at(s))
    }
}
