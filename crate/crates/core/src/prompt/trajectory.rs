use std::collections::BTreeSet;
use std::fmt;

use super::cursor::Cursor;
use super::{fmt2, PromptError};
use crate::curves::{CurveType, ParamCurve, TurnDir, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateMode {
    /// Every defining parameter plus derived lengths.
    Full,
    /// The smallest parameter set that determines the curve.
    Minimal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Number(f64),
    Point([f64; 2]),
    Word(String),
}

impl ParamValue {
    fn kind(&self) -> Kind {
        match self {
            ParamValue::Number(_) => Kind::Num,
            ParamValue::Point(_) => Kind::Pt,
            ParamValue::Word(_) => Kind::Word,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            ParamValue::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_point(&self) -> Option<Vec2> {
        match self {
            ParamValue::Point([x, z]) => Some(Vec2::new(*x, *z)),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Number(v) => f.write_str(&fmt2(*v)),
            ParamValue::Point([x, z]) => write!(f, "[{},{}]", fmt2(*x), fmt2(*z)),
            ParamValue::Word(w) => f.write_str(w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Num,
    Pt,
    Word,
}

fn schema(ct: CurveType, mode: TemplateMode) -> &'static [(&'static str, Kind)] {
    use Kind::*;
    match (ct, mode) {
        (CurveType::Linear, TemplateMode::Minimal) => &[("start", Pt), ("end", Pt), ("speed", Num)],
        (CurveType::Linear, TemplateMode::Full) => &[("start", Pt), ("end", Pt), ("speed", Num), ("chord_len", Num)],
        (CurveType::Arc, TemplateMode::Minimal) => &[("start", Pt), ("end", Pt), ("center", Pt), ("dir", Word)],
        (CurveType::Arc, TemplateMode::Full) => &[
            ("start", Pt),
            ("end", Pt),
            ("center", Pt),
            ("radius", Num),
            ("angle", Num),
            ("dir", Word),
            ("arc_len", Num),
        ],
        (CurveType::QuadBezier, TemplateMode::Minimal) => &[("start", Pt), ("end", Pt), ("P1", Pt)],
        (CurveType::QuadBezier, TemplateMode::Full) => {
            &[("start", Pt), ("end", Pt), ("P1", Pt), ("chord_len", Num), ("offset_ratio", Num)]
        }
        (CurveType::CubicBezier, TemplateMode::Minimal) => &[("start", Pt), ("end", Pt), ("P1", Pt), ("P2", Pt)],
        (CurveType::CubicBezier, TemplateMode::Full) => {
            &[("start", Pt), ("end", Pt), ("P1", Pt), ("P2", Pt), ("chord_len", Num)]
        }
        (CurveType::Sinusoidal, TemplateMode::Minimal) => &[("start", Pt), ("end", Pt), ("A", Num), ("f", Num)],
        (CurveType::Sinusoidal, TemplateMode::Full) => {
            &[("start", Pt), ("end", Pt), ("A", Num), ("f", Num), ("chord_len", Num)]
        }
    }
}

/// Control points that merely repeat `start`/`end` in Bézier prompts.
fn endpoint_alias(ct: CurveType, key: &str) -> Option<&'static str> {
    match (ct, key) {
        (CurveType::QuadBezier | CurveType::CubicBezier, "P0") => Some("start"),
        (CurveType::QuadBezier, "P2") => Some("end"),
        (CurveType::CubicBezier, "P3") => Some("end"),
        _ => None,
    }
}

/// A parsed parameterized-trajectory prompt. Parameters are kept in
/// template order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryAst {
    pub curve_type: CurveType,
    pub mode: TemplateMode,
    pub params: Vec<(String, ParamValue)>,
}

impl TrajectoryAst {
    pub fn from_curve(c: &ParamCurve, mode: TemplateMode) -> Self {
        let pt = |v: Vec2| ParamValue::Point([v.x, v.y]);
        let num = ParamValue::Number;
        let mut values: Vec<ParamValue> = vec![pt(c.start()), pt(c.end())];
        match *c {
            ParamCurve::Linear { speed, .. } => {
                values.push(num(speed));
                values.push(num(c.chord_len()));
            }
            ParamCurve::Arc { center, radius, angle, dir, .. } => {
                values.extend([pt(center), num(radius), num(angle), ParamValue::Word(dir.as_str().into())]);
                values.push(num(c.arc_length()));
            }
            ParamCurve::QuadBezier { p1, .. } => {
                values.extend([pt(p1), num(c.chord_len()), num(c.offset_ratio().unwrap_or(0.0))]);
            }
            ParamCurve::CubicBezier { p1, p2, .. } => values.extend([pt(p1), pt(p2), num(c.chord_len())]),
            ParamCurve::Sinusoid { amplitude, freq, .. } => {
                values.extend([num(amplitude), num(freq), num(c.chord_len())]);
            }
        }
        let ct = c.curve_type();
        let full = schema(ct, TemplateMode::Full);
        let mut params: Vec<(String, ParamValue)> =
            full.iter().zip(values).map(|((k, _), v)| (k.to_string(), v)).collect();
        if mode == TemplateMode::Minimal {
            let keep: Vec<&str> = schema(ct, mode).iter().map(|(k, _)| *k).collect();
            params.retain(|(k, _)| keep.contains(&k.as_str()));
        }
        Self { curve_type: ct, mode, params }
    }

    pub fn get(&self, key: &str) -> Option<&ParamValue> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    fn point(&self, key: &str) -> Vec2 {
        self.get(key).and_then(ParamValue::as_point).expect("schema-checked")
    }

    fn number(&self, key: &str) -> f64 {
        self.get(key).and_then(ParamValue::as_number).expect("schema-checked")
    }

    /// Rebuilds the curve the parameters describe.
    pub fn to_curve(&self) -> Result<ParamCurve, PromptError> {
        let start = self.point("start");
        let end = self.point("end");
        let c = match self.curve_type {
            CurveType::Linear => ParamCurve::Linear { start, end, speed: self.number("speed") },
            CurveType::Arc => {
                let dir = match self.get("dir") {
                    Some(ParamValue::Word(w)) if w == "cw" => TurnDir::Cw,
                    _ => TurnDir::Ccw,
                };
                ParamCurve::arc_from_points(start, end, self.point("center"), dir)
                    .map_err(|e| PromptError::InvalidCurve(e.to_string()))?
            }
            CurveType::QuadBezier => ParamCurve::QuadBezier { p0: start, p1: self.point("P1"), p2: end },
            CurveType::CubicBezier => {
                ParamCurve::CubicBezier { p0: start, p1: self.point("P1"), p2: self.point("P2"), p3: end }
            }
            CurveType::Sinusoidal => {
                ParamCurve::Sinusoid { start, end, amplitude: self.number("A"), freq: self.number("f") }
            }
        };
        Ok(c)
    }
}

impl fmt::Display for TrajectoryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{type:{}, params:{{", self.curve_type.tag())?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}:{v}")?;
        }
        f.write_str("}}")
    }
}

pub fn serialize_trajectory(c: &ParamCurve, mode: TemplateMode) -> String {
    TrajectoryAst::from_curve(c, mode).to_string()
}

fn curve_type_from_tag(tag: &str) -> Option<CurveType> {
    let ascii = tag.replace('é', "e");
    CurveType::ALL.into_iter().find(|t| t.tag() == ascii)
}

fn parse_value(cur: &mut Cursor) -> Result<ParamValue, PromptError> {
    cur.skip_ws();
    match cur.peek() {
        Some('[') => {
            cur.expect('[')?;
            let x = cur.number()?;
            if cur.eat(']') {
                return Ok(ParamValue::Number(x));
            }
            cur.expect(',')?;
            let z = cur.number()?;
            cur.expect(']')?;
            Ok(ParamValue::Point([x, z]))
        }
        Some(c) if c.is_alphabetic() || c == '_' => Ok(ParamValue::Word(cur.ident()?.to_string())),
        _ => Ok(ParamValue::Number(cur.number()?)),
    }
}

fn check_schema(ct: CurveType, params: Vec<(String, ParamValue)>) -> Result<TrajectoryAst, PromptError> {
    // fold redundant endpoint aliases into start/end
    let mut kept: Vec<(String, ParamValue)> = Vec::new();
    let mut aliases = Vec::new();
    for (k, v) in params {
        match endpoint_alias(ct, &k) {
            Some(target) => aliases.push((k, target, v)),
            None => {
                if kept.iter().any(|(kk, _)| *kk == k) {
                    return Err(PromptError::SchemaMismatch(format!("duplicate key `{k}`")));
                }
                kept.push((k, v));
            }
        }
    }
    let keys: BTreeSet<&str> = kept.iter().map(|(k, _)| k.as_str()).collect();
    let set = |m| schema(ct, m).iter().map(|(k, _)| *k).collect::<BTreeSet<&str>>();
    let mode = if keys == set(TemplateMode::Minimal) {
        TemplateMode::Minimal
    } else if keys == set(TemplateMode::Full) {
        TemplateMode::Full
    } else {
        let minimal = set(TemplateMode::Minimal);
        let full = set(TemplateMode::Full);
        let missing: Vec<&str> = minimal.difference(&keys).copied().collect();
        let extra: Vec<&str> = keys.difference(&full).copied().collect();
        let msg = if missing.is_empty() && extra.is_empty() {
            let partial: Vec<&str> = full.difference(&keys).copied().collect();
            format!("incomplete full template for {}, missing {partial:?}", ct.tag())
        } else {
            format!("{}: missing {missing:?}, unexpected {extra:?}", ct.tag())
        };
        return Err(PromptError::SchemaMismatch(msg));
    };
    let mut ordered = Vec::with_capacity(kept.len());
    for (key, kind) in schema(ct, mode) {
        let (_, v) = kept.iter().find(|(k, _)| k == key).expect("key set checked");
        if v.kind() != *kind {
            return Err(PromptError::SchemaMismatch(format!("`{key}` has the wrong value type")));
        }
        if let ParamValue::Word(w) = v {
            if w != "cw" && w != "ccw" {
                return Err(PromptError::SchemaMismatch(format!("`{key}` must be cw or ccw, got `{w}`")));
            }
        }
        ordered.push((key.to_string(), v.clone()));
    }
    for (alias, target, v) in aliases {
        let t = ordered.iter().find(|(k, _)| k == target).map(|(_, v)| v);
        let same = match (t, &v) {
            (Some(ParamValue::Point(a)), ParamValue::Point(b)) => {
                (a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9
            }
            _ => false,
        };
        if !same {
            return Err(PromptError::SchemaMismatch(format!("`{alias}` disagrees with `{target}`")));
        }
    }
    Ok(TrajectoryAst { curve_type: ct, mode, params: ordered })
}

/// Parses `{type:<tag>, params:{...}}`. Accepts minimal or full key sets;
/// Bézier `P0`/last control point may repeat `start`/`end`.
pub fn parse_trajectory(s: &str) -> Result<TrajectoryAst, PromptError> {
    let mut cur = Cursor::new(s);
    cur.expect('{')?;
    cur.keyword("type")?;
    cur.expect(':')?;
    let tag = cur.ident()?;
    let ct = curve_type_from_tag(tag).ok_or_else(|| PromptError::UnknownCurveType(tag.to_string()))?;
    cur.expect(',')?;
    cur.keyword("params")?;
    cur.expect(':')?;
    cur.expect('{')?;
    let mut params = Vec::new();
    if !cur.eat('}') {
        loop {
            let key = cur.ident()?.to_string();
            cur.expect(':')?;
            let value = parse_value(&mut cur)?;
            params.push((key, value));
            if cur.eat('}') {
                break;
            }
            cur.expect(',')?;
        }
    }
    cur.expect('}')?;
    if !cur.at_end() {
        return Err(cur.error("trailing input"));
    }
    check_schema(ct, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_cubic() -> ParamCurve {
        ParamCurve::CubicBezier {
            p0: Vec2::zeros(),
            p1: Vec2::new(-0.23, 3.95),
            p2: Vec2::new(5.44, -0.17),
            p3: Vec2::new(5.22, 3.77),
        }
    }

    #[test]
    fn cubic_minimal_template() {
        assert_eq!(
            serialize_trajectory(&reference_cubic(), TemplateMode::Minimal),
            "{type:cubic_bezier, params:{start:[0.00,0.00], end:[5.22,3.77], P1:[-0.23,3.95], P2:[5.44,-0.17]}}"
        );
    }

    #[test]
    fn linear_minimal_template() {
        let c = ParamCurve::Linear { start: Vec2::zeros(), end: Vec2::new(0.0, 2.0), speed: 1.0 };
        assert_eq!(
            serialize_trajectory(&c, TemplateMode::Minimal),
            "{type:linear, params:{start:[0.00,0.00], end:[0.00,2.00], speed:1.00}}"
        );
        assert_eq!(
            serialize_trajectory(&c, TemplateMode::Full),
            "{type:linear, params:{start:[0.00,0.00], end:[0.00,2.00], speed:1.00, chord_len:2.00}}"
        );
    }

    #[test]
    fn redundant_bezier_endpoints_fold_into_start_and_end() {
        let s = "{type:cubic_bézier, params:{start:[0.0,0.0], end:[5.22,3.77], P0:[0.0,0.0], P1:[-0.23,3.95], P2:[5.44,-0.17], P3:[5.22,3.77]}}";
        let ast = parse_trajectory(s).unwrap();
        assert_eq!(ast.curve_type, CurveType::CubicBezier);
        assert_eq!(ast.get("start"), Some(&ParamValue::Point([0.0, 0.0])));
        assert_eq!(ast.get("end"), Some(&ParamValue::Point([5.22, 3.77])));
        assert_eq!(ast.to_string(), serialize_trajectory(&reference_cubic(), TemplateMode::Minimal));
    }

    #[test]
    fn inconsistent_alias_is_rejected() {
        let s = "{type:cubic_bezier, params:{start:[0.00,0.00], end:[5.22,3.77], P0:[1.00,0.00], P1:[-0.23,3.95], P2:[5.44,-0.17]}}";
        assert!(matches!(parse_trajectory(s), Err(PromptError::SchemaMismatch(_))));
    }

    #[test]
    fn empty_params_is_a_schema_mismatch() {
        assert!(matches!(parse_trajectory("{type:linear, params:{}}"), Err(PromptError::SchemaMismatch(_))));
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(parse_trajectory("{type:spiral, params:{}}"), Err(PromptError::UnknownCurveType(_))));
        assert!(matches!(parse_trajectory("{type:linear, params:{start:[0.00,0.00]"), Err(PromptError::Syntax { .. })));
        assert!(matches!(
            parse_trajectory("{type:linear, params:{start:[0.,0.00], end:[0.00,2.00], speed:1.00}}"),
            Err(PromptError::Number { .. })
        ));
        assert!(matches!(
            parse_trajectory("{type:linear, params:{start:[0.00,0.00], end:[0.00,2.00], speed:1.00, speed:1.00}}"),
            Err(PromptError::SchemaMismatch(_))
        ));
        assert!(matches!(
            parse_trajectory("{type:arc, params:{start:[0.00,0.00], end:[0.00,2.00], center:[1.00,1.00], dir:up}}"),
            Err(PromptError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn whitespace_between_tokens_is_ignored() {
        let s = " { type : linear ,params:{ start: [ 0.00 , 0.00 ] ,end:[0.00,2.00],speed : 1.00 } } ";
        let ast = parse_trajectory(s).unwrap();
        assert_eq!(ast.to_string(), "{type:linear, params:{start:[0.00,0.00], end:[0.00,2.00], speed:1.00}}");
    }

    #[test]
    fn full_arc_round_trip() {
        let c = ParamCurve::Arc { center: Vec2::new(-2.0, 0.0), radius: 2.0, start_angle: 0.0, angle: 2.0, dir: crate::curves::TurnDir::Ccw };
        let s = serialize_trajectory(&c, TemplateMode::Full);
        let ast = parse_trajectory(&s).unwrap();
        assert_eq!(ast.mode, TemplateMode::Full);
        assert_eq!(ast.to_string(), s);
        let back = ast.to_curve().unwrap();
        assert!((back.arc_length() - 4.0).abs() < 0.02);
    }
}
