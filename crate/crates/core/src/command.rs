//! Robot instructions shared by the role controllers, the simulator and the
//! wire protocol.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Robot identifier. `0xFF` is reserved for broadcast on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RobotId(u8);

impl RobotId {
    pub const BROADCAST_WIRE: u8 = 0xFF;

    pub fn new(id: u8) -> Result<Self, CommandError> {
        if id == Self::BROADCAST_WIRE {
            Err(CommandError::ReservedId)
        } else {
            Ok(Self(id))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for RobotId {
    type Error = CommandError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        RobotId::new(v)
    }
}

impl From<RobotId> for u8 {
    fn from(id: RobotId) -> u8 {
        id.0
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Address {
    Robot(RobotId),
    Group(String),
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedMode {
    Off,
    Solid,
    Toggle,
    Strobe,
}

impl LedMode {
    pub fn wire(self) -> u8 {
        match self {
            LedMode::Off => 0,
            LedMode::Solid => 1,
            LedMode::Toggle => 2,
            LedMode::Strobe => 3,
        }
    }

    pub fn from_wire(b: u8) -> Option<LedMode> {
        Some(match b {
            0 => LedMode::Off,
            1 => LedMode::Solid,
            2 => LedMode::Toggle,
            3 => LedMode::Strobe,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Linear speed m/s, angular speed rad/s (counter-clockwise positive), seconds.
    Drive {
        v: f64,
        omega: f64,
        duration: f64,
    },
    Led {
        mode: LedMode,
        rgb: [u8; 3],
        period: f64,
    },
    Stop,
}

/// Velocity envelope every command must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub v_max: f64,
    pub omega_max: f64,
}

pub const MAX_DRIVE_DURATION: f64 = 5.0;

impl Default for Limits {
    fn default() -> Self {
        Self {
            v_max: 0.3,
            omega_max: 2.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommandError {
    #[error("robot id 255 is reserved for broadcast")]
    ReservedId,
    #[error("|v| = {0} exceeds v_max")]
    SpeedOutOfBounds(f64),
    #[error("|omega| = {0} exceeds omega_max")]
    TurnRateOutOfBounds(f64),
    #[error("drive duration {0} outside (0, 5] s")]
    BadDuration(f64),
    #[error("strobe period must be positive, got {0}")]
    BadPeriod(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddressedCommand {
    pub address: Address,
    pub action: Action,
    #[serde(default)]
    pub issued_at: f64,
}

impl AddressedCommand {
    pub fn new(address: Address, action: Action, issued_at: f64) -> Self {
        Self {
            address,
            action,
            issued_at,
        }
    }

    pub fn drive(address: Address, v: f64, omega: f64, duration: f64, issued_at: f64) -> Self {
        Self::new(address, Action::Drive { v, omega, duration }, issued_at)
    }

    pub fn stop(address: Address, issued_at: f64) -> Self {
        Self::new(address, Action::Stop, issued_at)
    }

    pub fn validate(&self, limits: &Limits) -> Result<(), CommandError> {
        match self.action {
            Action::Drive { v, omega, duration } => {
                if !v.is_finite() || v.abs() > limits.v_max + 1e-12 {
                    return Err(CommandError::SpeedOutOfBounds(v));
                }
                if !omega.is_finite() || omega.abs() > limits.omega_max + 1e-12 {
                    return Err(CommandError::TurnRateOutOfBounds(omega));
                }
                if !(duration > 0.0 && duration <= MAX_DRIVE_DURATION) {
                    return Err(CommandError::BadDuration(duration));
                }
            }
            Action::Led { mode, period, .. } => {
                if mode == LedMode::Strobe && !(period.is_finite() && period > 0.0) {
                    return Err(CommandError::BadPeriod(period));
                }
            }
            Action::Stop => {}
        }
        Ok(())
    }
}
