//! Role controllers: Director, Puppeteer, Wizard and the Puppeteer/Wizard
//! hybrid. Each role maps gesture events to addressed robot commands.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{Action, Address, AddressedCommand, CommandError, LedMode, Limits, RobotId};
use crate::gesture::{Direction, GestureEvent, GestureKind};
use crate::hand::Finger;

/// Group name the hybrid role addresses its wand effects to.
pub const MAPPED_GROUP: &str = "mapped";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Director,
    Puppeteer,
    Wizard,
    Hybrid,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Director, Role::Puppeteer, Role::Wizard, Role::Hybrid];

    pub fn needs_finger_map(self) -> bool {
        matches!(self, Role::Puppeteer | Role::Hybrid)
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Director => "director",
            Role::Puppeteer => "puppeteer",
            Role::Wizard => "wizard",
            Role::Hybrid => "hybrid",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Role {
    type Err = RoleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| RoleError::UnknownRole(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoleError {
    #[error("robot {0} assigned to more than one finger")]
    DuplicateRobotAssignment(RobotId),
    #[error("role {0:?} requires a finger map")]
    MissingFingerMap(Role),
    #[error("unknown role {0:?}")]
    UnknownRole(String),
    #[error("roles.{field}: {source}")]
    BadParams {
        field: &'static str,
        source: CommandError,
    },
}

/// Finger to robot assignment; a robot is bound to at most one finger.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(
    try_from = "BTreeMap<Finger, RobotId>",
    into = "BTreeMap<Finger, RobotId>"
)]
pub struct FingerMap(BTreeMap<Finger, RobotId>);

impl FingerMap {
    pub fn new(map: BTreeMap<Finger, RobotId>) -> Result<Self, RoleError> {
        let mut seen = BTreeSet::new();
        for id in map.values() {
            if !seen.insert(*id) {
                return Err(RoleError::DuplicateRobotAssignment(*id));
            }
        }
        Ok(Self(map))
    }

    pub fn from_pairs(pairs: &[(Finger, u8)]) -> Result<Self, RoleError> {
        let mut map = BTreeMap::new();
        for &(f, id) in pairs {
            let id = RobotId::new(id).map_err(|source| RoleError::BadParams {
                field: "finger_map",
                source,
            })?;
            map.insert(f, id);
        }
        Self::new(map)
    }

    pub fn get(&self, finger: Finger) -> Option<RobotId> {
        self.0.get(&finger).copied()
    }

    /// Mapped robots in finger order.
    pub fn robots(&self) -> impl Iterator<Item = RobotId> + '_ {
        self.0.values().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<BTreeMap<Finger, RobotId>> for FingerMap {
    type Error = RoleError;

    fn try_from(map: BTreeMap<Finger, RobotId>) -> Result<Self, Self::Error> {
        FingerMap::new(map)
    }
}

impl From<FingerMap> for BTreeMap<Finger, RobotId> {
    fn from(m: FingerMap) -> Self {
        m.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleParams {
    pub director_v: f64,
    pub director_omega: f64,
    pub director_drive_dur: f64,
    pub director_turn_dur: f64,
    pub puppeteer_v: f64,
    pub puppeteer_dur: f64,
    pub wizard_v: f64,
    pub wizard_omega: f64,
    pub wizard_dur: f64,
    pub led_rgb: [u8; 3],
    /// Flips the right-is-clockwise convention for mirrored cameras.
    pub invert_rotation: bool,
}

impl Default for RoleParams {
    fn default() -> Self {
        Self {
            director_v: 0.15,
            director_omega: 1.2,
            director_drive_dur: 0.6,
            director_turn_dur: 0.5,
            puppeteer_v: 0.10,
            puppeteer_dur: 0.4,
            wizard_v: 0.10,
            wizard_omega: 1.0,
            wizard_dur: 0.6,
            led_rgb: [255, 255, 255],
            invert_rotation: false,
        }
    }
}

impl RoleParams {
    pub fn validate(&self, limits: &Limits) -> Result<(), RoleError> {
        let a = Address::Broadcast;
        let checks = [
            (
                "director_v",
                (self.director_v, 0.0, self.director_drive_dur),
            ),
            (
                "director_omega",
                (0.0, self.director_omega, self.director_turn_dur),
            ),
            ("puppeteer_v", (self.puppeteer_v, 0.0, self.puppeteer_dur)),
            (
                "wizard_v",
                (self.wizard_v, self.wizard_omega, self.wizard_dur),
            ),
        ];
        for (field, (v, omega, duration)) in checks {
            AddressedCommand::drive(a.clone(), v, omega, duration, 0.0)
                .validate(limits)
                .map_err(|source| RoleError::BadParams { field, source })?;
        }
        Ok(())
    }

    /// Angular velocity sign for a rightward rotation gesture: clockwise,
    /// i.e. negative, unless inverted.
    fn turn_sign(&self, d: Direction) -> f64 {
        let s = -d.sign();
        if self.invert_rotation {
            -s
        } else {
            s
        }
    }
}

/// Mode-switched gesture interpreter.
#[derive(Debug, Clone)]
pub struct RoleController {
    role: Role,
    finger_map: Option<FingerMap>,
    params: RoleParams,
}

impl RoleController {
    pub fn new(params: RoleParams, limits: &Limits) -> Result<Self, RoleError> {
        params.validate(limits)?;
        Ok(Self {
            role: Role::Director,
            finger_map: None,
            params,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn finger_map(&self) -> Option<&FingerMap> {
        self.finger_map.as_ref()
    }

    pub fn params(&self) -> &RoleParams {
        &self.params
    }

    /// Switches role. Every switch yields one broadcast stop.
    pub fn set_role(&mut self, role: Role, now: f64) -> Result<Vec<AddressedCommand>, RoleError> {
        if role.needs_finger_map() && self.finger_map.is_none() {
            return Err(RoleError::MissingFingerMap(role));
        }
        self.role = role;
        Ok(vec![AddressedCommand::stop(Address::Broadcast, now)])
    }

    pub fn set_finger_map(&mut self, map: FingerMap) {
        self.finger_map = Some(map);
    }

    /// Maps one gesture to commands under the active role. Pairs outside the
    /// role's vocabulary, and unmapped fingers, give an empty list.
    pub fn interpret(&self, event: &GestureEvent) -> Vec<AddressedCommand> {
        let p = &self.params;
        let t = event.t;
        let drive =
            |a: Address, v: f64, omega: f64, d: f64| AddressedCommand::drive(a, v, omega, d, t);
        let empty = FingerMap::default();
        let map = self.finger_map.as_ref().unwrap_or(&empty);
        let flick = |finger: Finger| {
            map.get(finger)
                .map(|id| drive(Address::Robot(id), p.puppeteer_v, 0.0, p.puppeteer_dur))
                .into_iter()
                .collect::<Vec<_>>()
        };
        let toggle = |a: Address| {
            AddressedCommand::new(
                a,
                Action::Led {
                    mode: LedMode::Toggle,
                    rgb: p.led_rgb,
                    period: 0.0,
                },
                t,
            )
        };
        let swish = |a: Address, d: Direction| {
            drive(a, p.wizard_v, p.turn_sign(d) * p.wizard_omega, p.wizard_dur)
        };

        match (self.role, event.kind) {
            (Role::Director, GestureKind::PalmPush) => {
                vec![drive(
                    Address::Broadcast,
                    p.director_v,
                    0.0,
                    p.director_drive_dur,
                )]
            }
            (Role::Director, GestureKind::FistPull) => {
                vec![drive(
                    Address::Broadcast,
                    -p.director_v,
                    0.0,
                    p.director_drive_dur,
                )]
            }
            (Role::Director, GestureKind::GraspRotate { direction }) => vec![drive(
                Address::Broadcast,
                0.0,
                p.turn_sign(direction) * p.director_omega,
                p.director_turn_dur,
            )],
            (Role::Puppeteer | Role::Hybrid, GestureKind::FingerFlick { finger }) => flick(finger),
            (Role::Puppeteer, GestureKind::FistRotate { direction }) => map
                .robots()
                .map(|id| {
                    drive(
                        Address::Robot(id),
                        0.0,
                        p.turn_sign(direction) * p.director_omega,
                        p.director_turn_dur,
                    )
                })
                .collect(),
            (Role::Wizard, GestureKind::WandVerticalFlick) => vec![toggle(Address::Broadcast)],
            (Role::Wizard, GestureKind::WandHorizontalSwish { direction }) => {
                vec![swish(Address::Broadcast, direction)]
            }
            (Role::Hybrid, GestureKind::WandVerticalFlick) => {
                vec![toggle(Address::Group(MAPPED_GROUP.into()))]
            }
            (Role::Hybrid, GestureKind::WandHorizontalSwish { direction }) => {
                vec![swish(Address::Group(MAPPED_GROUP.into()), direction)]
            }
            _ => Vec::new(),
        }
    }
}
