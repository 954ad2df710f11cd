use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakConfig {
    /// Minimum |curvature| (1/m) for a sample to count as a turn.
    pub min_curvature: f64,
    /// Non-maximum-suppression window as a fraction of the profile length.
    pub window_fraction: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self { min_curvature: 0.1, window_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvaturePeak {
    pub index: usize,
    pub curvature: f64,
}

fn same_level(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Local maxima of |kappa| above the threshold, sorted by |kappa|
/// descending. A run of equal |kappa| (an arc's plateau) collapses to its
/// middle sample. Peaks closer than the suppression window to a stronger
/// peak are dropped.
pub fn detect_curvature_peaks(profile: &[f64], cfg: &PeakConfig) -> Vec<CurvaturePeak> {
    let n = profile.len();
    if n < 3 {
        return Vec::new();
    }
    let mag: Vec<f64> = profile.iter().map(|k| k.abs()).collect();
    let mut candidates = Vec::new();
    let mut i = 0;
    while i < n {
        // extend a plateau of equal magnitude and sign
        let mut j = i;
        while j + 1 < n
            && same_level(mag[j + 1], mag[i])
            && profile[j + 1].signum() == profile[i].signum()
        {
            j += 1;
        }
        let left_ok = i == 0 || mag[i - 1] < mag[i];
        let right_ok = j == n - 1 || mag[j + 1] < mag[i];
        if left_ok && right_ok && mag[i] > cfg.min_curvature {
            let mid = (i + j) / 2;
            candidates.push(CurvaturePeak { index: mid, curvature: profile[mid] });
        }
        i = j + 1;
    }
    candidates.sort_by(|a, b| b.curvature.abs().total_cmp(&a.curvature.abs()).then(a.index.cmp(&b.index)));
    let window = ((cfg.window_fraction * n as f64).round() as usize).max(1);
    let mut kept: Vec<CurvaturePeak> = Vec::new();
    for c in candidates {
        if kept.iter().all(|k| k.index.abs_diff(c.index) > window) {
            kept.push(c);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{ParamCurve, TurnDir, Vec2};
    use std::f64::consts::PI;

    #[test]
    fn straight_line_has_no_peaks() {
        let line = ParamCurve::Linear { start: Vec2::zeros(), end: Vec2::new(0.0, 5.0), speed: 1.0 };
        let p = line.curvature_profile(200).unwrap();
        assert!(detect_curvature_peaks(&p, &PeakConfig::default()).is_empty());
    }

    #[test]
    fn arc_plateau_collapses_to_midpoint() {
        let arc = ParamCurve::Arc { center: Vec2::new(-2.0, 0.0), radius: 2.0, start_angle: 0.0, angle: PI, dir: TurnDir::Ccw };
        let p = arc.curvature_profile(201).unwrap();
        let peaks = detect_curvature_peaks(&p, &PeakConfig::default());
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].index, 100);
        assert!((peaks[0].curvature - 0.5).abs() < 1e-12);
    }

    #[test]
    fn s_curve_has_two_opposite_peaks_near_brute_force_argmax() {
        let c = ParamCurve::CubicBezier {
            p0: Vec2::zeros(),
            p1: Vec2::new(2.0, 1.5),
            p2: Vec2::new(-2.0, 3.5),
            p3: Vec2::new(0.0, 5.0),
        };
        let n = 400;
        let p = c.curvature_profile(n).unwrap();
        let peaks = detect_curvature_peaks(&p, &PeakConfig::default());
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        assert!(peaks[0].curvature.signum() != peaks[1].curvature.signum());
        // brute force: argmax |kappa| over each sign region
        for sign in [1.0f64, -1.0] {
            let oracle = (0..n)
                .filter(|&i| p[i].signum() == sign)
                .max_by(|&a, &b| p[a].abs().total_cmp(&p[b].abs()))
                .unwrap();
            let found = peaks.iter().find(|pk| pk.curvature.signum() == sign).unwrap();
            assert!(found.index.abs_diff(oracle) <= 2);
        }
    }

    #[test]
    fn short_profiles_yield_nothing() {
        assert!(detect_curvature_peaks(&[1.0, 2.0], &PeakConfig::default()).is_empty());
    }
}
