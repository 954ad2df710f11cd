use std::fmt;

use super::cursor::Cursor;
use super::{fmt2, PromptError};
use crate::curves::{Obstacle, ObstacleScene, Vec2};

/// Start, goal and obstacle triples `(x, z, r)` of a spatial-constraint prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAst {
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub obstacles: Vec<[f64; 3]>,
}

impl SpatialAst {
    pub fn from_scene(scene: &ObstacleScene) -> Self {
        Self {
            start: [scene.start.x, scene.start.y],
            goal: [scene.goal.x, scene.goal.y],
            obstacles: scene.obstacles.iter().map(|o| [o.center.x, o.center.y, o.safety_radius]).collect(),
        }
    }

    pub fn obstacles(&self) -> Vec<Obstacle> {
        self.obstacles
            .iter()
            .map(|o| Obstacle { center: Vec2::new(o[0], o[1]), safety_radius: o[2] })
            .collect()
    }
}

impl fmt::Display for SpatialAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "A person walks from ({}, {}) to ({}, {}).",
            fmt2(self.start[0]),
            fmt2(self.start[1]),
            fmt2(self.goal[0]),
            fmt2(self.goal[1])
        )?;
        if self.obstacles.is_empty() {
            return Ok(());
        }
        write!(f, " Avoiding {} obstacles at ", self.obstacles.len())?;
        for o in &self.obstacles {
            write!(f, "({}, {}, {}), ", fmt2(o[0]), fmt2(o[1]), fmt2(o[2]))?;
        }
        f.write_str("where r is the safety radius in meters.")
    }
}

pub fn serialize_spatial(scene: &ObstacleScene) -> String {
    SpatialAst::from_scene(scene).to_string()
}

fn tuple<const N: usize>(cur: &mut Cursor) -> Result<[f64; N], PromptError> {
    cur.expect('(')?;
    let mut out = [0.0; N];
    for (i, v) in out.iter_mut().enumerate() {
        if i > 0 {
            cur.expect(',')?;
        }
        *v = cur.number()?;
    }
    cur.expect(')')?;
    Ok(out)
}

fn words(cur: &mut Cursor, ws: &[&str]) -> Result<(), PromptError> {
    ws.iter().try_for_each(|w| cur.keyword(w))
}

pub fn parse_spatial(s: &str) -> Result<SpatialAst, PromptError> {
    let mut cur = Cursor::new(s);
    words(&mut cur, &["A", "person", "walks", "from"])?;
    let start = tuple::<2>(&mut cur)?;
    cur.keyword("to")?;
    let goal = tuple::<2>(&mut cur)?;
    cur.expect('.')?;
    let mut obstacles = Vec::new();
    if !cur.at_end() {
        cur.keyword("Avoiding")?;
        let declared = cur.integer()?;
        if cur.keyword("obstacles").is_err() {
            cur.keyword("obstacle")?;
        }
        cur.keyword("at")?;
        loop {
            obstacles.push(tuple::<3>(&mut cur)?);
            cur.expect(',')?;
            cur.skip_ws();
            if cur.peek() != Some('(') {
                break;
            }
        }
        words(&mut cur, &["where", "r", "is", "the", "safety", "radius", "in", "meters"])?;
        cur.expect('.')?;
        if !cur.at_end() {
            return Err(cur.error("trailing input"));
        }
        if declared != obstacles.len() {
            return Err(PromptError::CountMismatch { declared, listed: obstacles.len() });
        }
    }
    Ok(SpatialAst { start, goal, obstacles })
}
