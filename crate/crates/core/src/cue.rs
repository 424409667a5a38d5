//! Timed cue sequences: the JSON cue file format, built-in choreographies,
//! and a tick-based scheduler.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

use crate::command::{Address, AddressedCommand, RobotId, MAX_DRIVE_DURATION};
use crate::gesture::{wrap_angle, Direction, GestureKind};
use crate::roles::{Role, RoleParams};
use crate::stage::{Pose, StageConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CueError {
    #[error("malformed cue file: {0}")]
    MalformedCueFile(String),
    #[error("cue {index}: negative offset {at}")]
    NegativeOffset { index: usize, at: f64 },
    #[error("cue {index}: unknown action ({0})", .detail)]
    UnknownAction { index: usize, detail: String },
    #[error("robot {robot}: target ({x}, {y}) outside the stage")]
    TargetOutOfBounds { robot: RobotId, x: f64, y: f64 },
    #[error("robot {0} has no known start pose")]
    UnknownRobot(RobotId),
    #[error("{0}")]
    BadArgument(String),
    #[error("unknown sequence {0:?}")]
    UnknownSequence(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CueAction {
    InjectGesture(GestureKind),
    DirectCommand(AddressedCommand),
    SetRole(Role),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cue {
    pub at: f64,
    pub action: CueAction,
}

impl Cue {
    fn gesture(at: f64, kind: GestureKind) -> Cue {
        Cue {
            at,
            action: CueAction::InjectGesture(kind),
        }
    }

    fn to_json(&self) -> Value {
        match &self.action {
            CueAction::InjectGesture(k) => json!({"at": self.at, "gesture": k}),
            CueAction::DirectCommand(c) => json!({"at": self.at, "command": c}),
            CueAction::SetRole(r) => json!({"at": self.at, "role": r}),
        }
    }
}

/// Cues sorted by offset; equal offsets keep their original order.
#[derive(Debug, Clone, PartialEq)]
pub struct CueSequence {
    name: String,
    cues: Vec<Cue>,
}

impl CueSequence {
    pub fn new(name: impl Into<String>, mut cues: Vec<Cue>) -> Result<Self, CueError> {
        for (index, c) in cues.iter().enumerate() {
            if !(c.at >= 0.0) || !c.at.is_finite() {
                return Err(CueError::NegativeOffset { index, at: c.at });
            }
        }
        cues.sort_by(|a, b| a.at.total_cmp(&b.at));
        Ok(Self {
            name: name.into(),
            cues,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cues(&self) -> &[Cue] {
        &self.cues
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }

    /// Offset of the last cue.
    pub fn end(&self) -> f64 {
        self.cues.last().map_or(0.0, |c| c.at)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "cues": self.cues.iter().map(Cue::to_json).collect::<Vec<_>>(),
        })
    }
}

fn parse_cue(index: usize, v: &Value) -> Result<Cue, CueError> {
    let obj = v
        .as_object()
        .ok_or_else(|| CueError::MalformedCueFile(format!("cue {index} is not an object")))?;
    let at = obj
        .get("at")
        .and_then(Value::as_f64)
        .ok_or_else(|| CueError::MalformedCueFile(format!("cue {index} lacks numeric `at`")))?;
    if at < 0.0 {
        return Err(CueError::NegativeOffset { index, at });
    }
    let bad = |e: serde_json::Error| CueError::UnknownAction {
        index,
        detail: e.to_string(),
    };
    let action = if let Some(g) = obj.get("gesture") {
        CueAction::InjectGesture(serde_json::from_value(g.clone()).map_err(bad)?)
    } else if let Some(c) = obj.get("command") {
        CueAction::DirectCommand(serde_json::from_value(c.clone()).map_err(bad)?)
    } else if let Some(r) = obj.get("role") {
        CueAction::SetRole(serde_json::from_value(r.clone()).map_err(bad)?)
    } else {
        return Err(CueError::UnknownAction {
            index,
            detail: "expected one of gesture, command, role".into(),
        });
    };
    Ok(Cue { at, action })
}

/// Parses a cue list (the `cues` array of a cue file).
pub fn parse_cues(cues: &Value) -> Result<Vec<Cue>, CueError> {
    cues.as_array()
        .ok_or_else(|| CueError::MalformedCueFile("`cues` must be an array".into()))?
        .iter()
        .enumerate()
        .map(|(i, c)| parse_cue(i, c))
        .collect()
}

pub fn parse_sequence(text: &str) -> Result<CueSequence, CueError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| CueError::MalformedCueFile(e.to_string()))?;
    let name = doc
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or("unnamed")
        .to_string();
    let cues = parse_cues(
        doc.get("cues")
            .ok_or_else(|| CueError::MalformedCueFile("missing `cues`".into()))?,
    )?;
    CueSequence::new(name, cues)
}

pub fn load_sequence(path: &Path) -> Result<CueSequence, CueError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CueError::MalformedCueFile(format!("{}: {e}", path.display())))?;
    parse_sequence(&text)
}

/// Wizard lightning: per strike a vertical flick, then half a cadence later a
/// horizontal swish alternating right/left.
pub fn builtin_lightning(strikes: u32, cadence: f64) -> Result<CueSequence, CueError> {
    if strikes == 0 {
        return Err(CueError::BadArgument(
            "lightning needs at least one strike".into(),
        ));
    }
    if !(cadence > 0.0 && cadence.is_finite()) {
        return Err(CueError::BadArgument(format!(
            "cadence must be positive, got {cadence}"
        )));
    }
    let mut cues = vec![Cue {
        at: 0.0,
        action: CueAction::SetRole(Role::Wizard),
    }];
    for k in 0..strikes {
        let at = k as f64 * cadence;
        let direction = if k % 2 == 0 {
            Direction::Right
        } else {
            Direction::Left
        };
        cues.push(Cue::gesture(at, GestureKind::WandVerticalFlick));
        cues.push(Cue::gesture(
            at + cadence / 2.0,
            GestureKind::WandHorizontalSwish { direction },
        ));
    }
    CueSequence::new("lightning", cues)
}

/// Gap between one character's blocking and the next.
pub const DEFAULT_BEAT: f64 = 1.0;

/// Dead-reckoned blocking: each robot in turn pivots toward its mark and
/// drives there in a straight line, one beat between characters.
pub fn builtin_old_macdonald(
    marks: &[(RobotId, (f64, f64))],
    start: &BTreeMap<RobotId, Pose>,
    params: &RoleParams,
    stage: &StageConfig,
    beat: f64,
) -> Result<CueSequence, CueError> {
    let round_up = |d: f64| ((d / stage.dt) - 1e-9).ceil() * stage.dt;
    let mut cues = Vec::new();
    let mut t = 0.0;
    for &(robot, (x, y)) in marks {
        if !stage.contains(x, y, stage.robot_radius) {
            return Err(CueError::TargetOutOfBounds { robot, x, y });
        }
        let pose = start.get(&robot).ok_or(CueError::UnknownRobot(robot))?;
        let (dx, dy) = (x - pose.x, y - pose.y);
        let distance = dx.hypot(dy);
        if distance < 1e-9 {
            continue;
        }
        let address = Address::Robot(robot);
        let turn = wrap_angle(dy.atan2(dx) - pose.theta);
        if turn.abs() > 1e-9 {
            let duration = turn.abs() / params.director_omega;
            cues.push(Cue {
                at: t,
                action: CueAction::DirectCommand(AddressedCommand::drive(
                    address.clone(),
                    0.0,
                    turn.signum() * params.director_omega,
                    duration,
                    0.0,
                )),
            });
            t += round_up(duration);
        }
        let mut remaining = distance / params.puppeteer_v;
        while remaining > 1e-12 {
            let chunk = remaining.min(MAX_DRIVE_DURATION);
            cues.push(Cue {
                at: t,
                action: CueAction::DirectCommand(AddressedCommand::drive(
                    address.clone(),
                    params.puppeteer_v,
                    0.0,
                    chunk,
                    0.0,
                )),
            });
            t += round_up(chunk);
            remaining -= chunk;
        }
        t += beat;
    }
    CueSequence::new("old_macdonald", cues)
}

/// Director ostinato: forward, back, pivot left, pivot right, twice.
pub fn dance_demo() -> CueSequence {
    let step = [
        GestureKind::PalmPush,
        GestureKind::FistPull,
        GestureKind::GraspRotate {
            direction: Direction::Left,
        },
        GestureKind::GraspRotate {
            direction: Direction::Right,
        },
    ];
    let mut cues = vec![Cue {
        at: 0.0,
        action: CueAction::SetRole(Role::Director),
    }];
    for rep in 0..2 {
        for (i, g) in step.iter().enumerate() {
            cues.push(Cue::gesture(0.1 + (rep * step.len() + i) as f64 * 0.8, *g));
        }
    }
    CueSequence::new("dance_demo", cues).expect("offsets are non-negative")
}

pub const BUILTIN_NAMES: [&str; 3] = ["dance_demo", "lightning", "old_macdonald"];

/// Built-in sequences by name. `old_macdonald` marks every stage robot on a
/// row across the spotlight.
pub fn builtin(
    name: &str,
    stage: &StageConfig,
    params: &RoleParams,
) -> Result<CueSequence, CueError> {
    match name {
        "dance_demo" => Ok(dance_demo()),
        "lightning" => builtin_lightning(4, 0.4),
        "old_macdonald" => {
            let start: BTreeMap<RobotId, Pose> = stage
                .robots
                .iter()
                .map(|r| (r.id, Pose::new(r.x, r.y, r.theta)))
                .collect();
            let n = stage.robots.len();
            let marks: Vec<(RobotId, (f64, f64))> = stage
                .robots
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let x = (i as f64 - (n as f64 - 1.0) / 2.0) * 0.25;
                    (r.id, (x, 0.2))
                })
                .collect();
            builtin_old_macdonald(&marks, &start, params, stage, DEFAULT_BEAT)
        }
        other => Err(CueError::UnknownSequence(other.to_string())),
    }
}

/// Releases cues as simulated time passes. A cue at offset `at` is due on
/// the first tick at or after `start + at`.
#[derive(Debug, Clone)]
pub struct Scheduler {
    cues: Vec<(u64, CueAction)>,
    next: usize,
}

impl Scheduler {
    pub fn new(seq: &CueSequence, start_tick: u64, dt: f64) -> Self {
        let cues = seq
            .cues
            .iter()
            .map(|c| {
                (
                    start_tick + ((c.at / dt) - 1e-9).ceil().max(0.0) as u64,
                    c.action.clone(),
                )
            })
            .collect();
        Self { cues, next: 0 }
    }

    /// Actions due at or before `tick`, in sequence order.
    pub fn due(&mut self, tick: u64) -> Vec<CueAction> {
        let mut out = Vec::new();
        while let Some((due, a)) = self.cues.get(self.next) {
            if *due > tick {
                break;
            }
            out.push(a.clone());
            self.next += 1;
        }
        out
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.cues.len()
    }

    pub fn last_tick(&self) -> Option<u64> {
        self.cues.last().map(|(t, _)| *t)
    }
}
