//! Deterministic 2D stage: unicycle robots, LEDs, spotlights and obstacles.
//!
//! The stage frame is centered: x spans `[-width/2, width/2]`, y spans
//! `[-height/2, height/2]`, headings are counter-clockwise from +x.
//! Time advances in whole ticks of `dt`; every drive lasts a whole number of
//! ticks (durations round up).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{Action, Address, AddressedCommand, CommandError, LedMode, Limits, RobotId};
use crate::gesture::wrap_angle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("unknown group {0:?}")]
    UnknownGroup(String),
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error("stage.{field}: {reason}")]
    Config { field: &'static str, reason: String },
}

fn config_err(field: &'static str, reason: impl Into<String>) -> StageError {
    StageError::Config {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: (f64, f64),
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotSpawn {
    pub id: RobotId,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub width: f64,
    pub height: f64,
    pub spotlights: Vec<Circle>,
    pub obstacles: Vec<Circle>,
    pub robot_radius: f64,
    pub dt: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub robots: Vec<RobotSpawn>,
}

impl Default for StageConfig {
    fn default() -> Self {
        let spawn = |id: u8, x: f64| RobotSpawn {
            id: RobotId::new(id).expect("valid id"),
            x,
            y: -0.5,
            theta: std::f64::consts::FRAC_PI_2,
        };
        Self {
            width: 2.0,
            height: 2.0,
            spotlights: vec![Circle {
                center: (0.0, 0.0),
                radius: 0.3,
            }],
            obstacles: Vec::new(),
            robot_radius: 0.05,
            dt: 0.001,
            v_max: Limits::default().v_max,
            omega_max: Limits::default().omega_max,
            robots: vec![spawn(1, -0.5), spawn(2, 0.0), spawn(3, 0.5)],
        }
    }
}

impl StageConfig {
    pub fn limits(&self) -> Limits {
        Limits {
            v_max: self.v_max,
            omega_max: self.omega_max,
        }
    }

    pub fn half_extents(&self) -> (f64, f64) {
        (self.width / 2.0, self.height / 2.0)
    }

    /// Whether a point lies inside the stage with at least `margin` to every wall.
    pub fn contains(&self, x: f64, y: f64, margin: f64) -> bool {
        let (hw, hh) = self.half_extents();
        x.abs() <= hw - margin && y.abs() <= hh - margin
    }

    pub fn validate(&self) -> Result<(), StageError> {
        for (field, v) in [
            ("width", self.width),
            ("height", self.height),
            ("robot_radius", self.robot_radius),
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(field, format!("must be positive, got {v}")));
            }
        }
        for (field, list) in [
            ("spotlights", &self.spotlights),
            ("obstacles", &self.obstacles),
        ] {
            for c in list {
                if !(c.radius > 0.0) {
                    return Err(config_err(field, "radius must be positive"));
                }
                if !self.contains(c.center.0, c.center.1, 0.0) {
                    return Err(config_err(
                        field,
                        format!("center {:?} outside stage", c.center),
                    ));
                }
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for r in &self.robots {
            if !ids.insert(r.id) {
                return Err(config_err("robots", format!("duplicate robot id {}", r.id)));
            }
            if !self.contains(r.x, r.y, 0.0) {
                return Err(config_err(
                    "robots",
                    format!("robot {} outside stage", r.id),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveDrive {
    pub v: f64,
    pub omega: f64,
    pub expires_tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedState {
    /// Off, Solid or Strobe; toggles resolve to Off/Solid.
    pub mode: LedMode,
    pub rgb: [u8; 3],
    pub period: f64,
    pub on: bool,
    strobe_start: u64,
    half_period_ticks: u64,
}

impl Default for LedState {
    fn default() -> Self {
        Self {
            mode: LedMode::Off,
            rgb: [255, 255, 255],
            period: 0.0,
            on: false,
            strobe_start: 0,
            half_period_ticks: 1,
        }
    }
}

impl LedState {
    fn apply(&mut self, mode: LedMode, rgb: [u8; 3], period: f64, tick: u64, dt: f64) {
        match mode {
            LedMode::Off => {
                self.mode = LedMode::Off;
                self.on = false;
            }
            LedMode::Solid => {
                self.mode = LedMode::Solid;
                self.rgb = rgb;
                self.on = true;
            }
            LedMode::Toggle => {
                self.on = !self.on;
                self.mode = if self.on {
                    LedMode::Solid
                } else {
                    LedMode::Off
                };
            }
            LedMode::Strobe => {
                self.mode = LedMode::Strobe;
                self.rgb = rgb;
                self.period = period;
                self.strobe_start = tick;
                self.half_period_ticks = ((period / 2.0 / dt).round() as u64).max(1);
                self.on = true;
            }
        }
    }

    fn tick(&mut self, tick: u64) {
        if self.mode == LedMode::Strobe {
            self.on = ((tick - self.strobe_start) / self.half_period_ticks) % 2 == 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub id: RobotId,
    pub pose: Pose,
    pub active_drive: Option<ActiveDrive>,
    pub led: LedState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedSnapshot {
    pub on: bool,
    pub rgb: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSnapshot {
    pub id: RobotId,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub led: LedSnapshot,
    pub spot: bool,
}

/// Immutable view of the stage at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSnapshot {
    pub t: f64,
    pub robots: Vec<RobotSnapshot>,
}

impl StageSnapshot {
    pub fn robot(&self, id: RobotId) -> Option<&RobotSnapshot> {
        self.robots.iter().find(|r| r.id == id)
    }
}

pub fn in_spotlight(pose: &Pose, stage: &StageConfig) -> bool {
    stage
        .spotlights
        .iter()
        .any(|s| (pose.x - s.center.0).hypot(pose.y - s.center.1) <= s.radius)
}

#[derive(Debug, Clone)]
pub struct Stage {
    config: StageConfig,
    tick: u64,
    robots: BTreeMap<RobotId, RobotState>,
    groups: BTreeMap<String, Vec<RobotId>>,
}

impl Stage {
    pub fn new(config: StageConfig) -> Result<Self, StageError> {
        config.validate()?;
        let robots = config
            .robots
            .iter()
            .map(|s| {
                (
                    s.id,
                    RobotState {
                        id: s.id,
                        pose: Pose::new(s.x, s.y, wrap_angle(s.theta)),
                        active_drive: None,
                        led: LedState::default(),
                    },
                )
            })
            .collect();
        Ok(Self {
            config,
            tick: 0,
            robots,
            groups: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &StageConfig {
        &self.config
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn sim_time(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn robot(&self, id: RobotId) -> Option<&RobotState> {
        self.robots.get(&id)
    }

    pub fn robots(&self) -> impl Iterator<Item = &RobotState> {
        self.robots.values()
    }

    pub fn robot_ids(&self) -> Vec<RobotId> {
        self.robots.keys().copied().collect()
    }

    /// Registers (or replaces) a named group of robots.
    pub fn set_group(&mut self, name: &str, ids: Vec<RobotId>) {
        self.groups.insert(name.to_string(), ids);
    }

    pub fn set_pose(&mut self, id: RobotId, pose: Pose) -> Result<(), StageError> {
        let r = self
            .robots
            .get_mut(&id)
            .ok_or(StageError::UnknownRobot(id))?;
        r.pose = Pose::new(pose.x, pose.y, wrap_angle(pose.theta));
        Ok(())
    }

    /// Robots a command addresses, in id order.
    pub fn resolve(&self, address: &Address) -> Result<Vec<RobotId>, StageError> {
        match address {
            Address::Broadcast => Ok(self.robot_ids()),
            Address::Robot(id) => {
                if self.robots.contains_key(id) {
                    Ok(vec![*id])
                } else {
                    Err(StageError::UnknownRobot(*id))
                }
            }
            Address::Group(name) => {
                let ids = self
                    .groups
                    .get(name)
                    .ok_or_else(|| StageError::UnknownGroup(name.clone()))?;
                Ok(ids
                    .iter()
                    .copied()
                    .filter(|id| self.robots.contains_key(id))
                    .collect())
            }
        }
    }

    fn ticks_for(&self, duration: f64) -> u64 {
        ((duration / self.config.dt) - 1e-9).ceil().max(1.0) as u64
    }

    pub fn apply_command(&mut self, cmd: &AddressedCommand) -> Result<(), StageError> {
        cmd.validate(&self.config.limits())?;
        let targets = self.resolve(&cmd.address)?;
        let (tick, dt) = (self.tick, self.config.dt);
        let drive_ticks = match cmd.action {
            Action::Drive { duration, .. } => self.ticks_for(duration),
            _ => 0,
        };
        for id in targets {
            let r = self.robots.get_mut(&id).expect("resolved id exists");
            match cmd.action {
                Action::Drive { v, omega, .. } => {
                    r.active_drive = Some(ActiveDrive {
                        v,
                        omega,
                        expires_tick: tick + drive_ticks,
                    });
                }
                Action::Led { mode, rgb, period } => r.led.apply(mode, rgb, period, tick, dt),
                Action::Stop => r.active_drive = None,
            }
        }
        Ok(())
    }

    fn clear_of(&self, id: RobotId, x: f64, y: f64) -> bool {
        let r = self.config.robot_radius;
        if !self.config.contains(x, y, r) {
            return false;
        }
        if self
            .config
            .obstacles
            .iter()
            .any(|o| (x - o.center.0).hypot(y - o.center.1) < o.radius + r)
        {
            return false;
        }
        !self
            .robots
            .values()
            .any(|o| o.id != id && (x - o.pose.x).hypot(y - o.pose.y) < 2.0 * r)
    }

    fn step_once(&mut self) {
        let dt = self.config.dt;
        let ids: Vec<RobotId> = self.robots.keys().copied().collect();
        for id in ids {
            let r = &self.robots[&id];
            let Some(drive) = r.active_drive else {
                continue;
            };
            let p = r.pose;
            let nx = p.x + drive.v * p.theta.cos() * dt;
            let ny = p.y + drive.v * p.theta.sin() * dt;
            let moves = drive.v != 0.0 && self.clear_of(id, nx, ny);
            let r = self.robots.get_mut(&id).expect("id from keys");
            if moves {
                r.pose.x = nx;
                r.pose.y = ny;
            }
            r.pose.theta = wrap_angle(p.theta + drive.omega * dt);
        }
        self.tick += 1;
        let tick = self.tick;
        for r in self.robots.values_mut() {
            if r.active_drive.is_some_and(|d| tick >= d.expires_tick) {
                r.active_drive = None;
            }
            r.led.tick(tick);
        }
    }

    /// Tick at which the last running drive expires.
    pub fn drives_end_tick(&self) -> Option<u64> {
        self.robots
            .values()
            .filter_map(|r| r.active_drive.map(|d| d.expires_tick))
            .max()
    }

    /// Advances `n` ticks and returns the resulting snapshot.
    pub fn step(&mut self, n: u64) -> StageSnapshot {
        for _ in 0..n {
            self.step_once();
        }
        self.snapshot()
    }

    /// Advances `n` ticks without building a snapshot.
    pub fn advance(&mut self, n: u64) {
        for _ in 0..n {
            self.step_once();
        }
    }

    pub fn snapshot(&self) -> StageSnapshot {
        StageSnapshot {
            t: self.sim_time(),
            robots: self
                .robots
                .values()
                .map(|r| RobotSnapshot {
                    id: r.id,
                    x: r.pose.x,
                    y: r.pose.y,
                    theta: r.pose.theta,
                    led: LedSnapshot {
                        on: r.led.on,
                        rgb: r.led.rgb,
                    },
                    spot: in_spotlight(&r.pose, &self.config),
                })
                .collect(),
        }
    }
}
